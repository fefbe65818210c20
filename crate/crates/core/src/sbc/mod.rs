//! Simultaneous broadcast: the ideal functionality with its broadcast window
//! and batch reveal, and the protocol realizing it over unfair broadcast and
//! time-lock encryption.

mod ideal;
mod protocol;

pub use ideal::SbcIdealStack;
pub use protocol::SbcProtocol;

use serde_json::json;

use crate::error::SimError;
use crate::kernel::{hx, Ctx};

/// `(tag, M, P, Cl, bit)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SbcTuple {
    pub tag: String,
    pub msg: Vec<u8>,
    pub owner: usize,
    pub cl: u64,
    pub bit: bool,
}

/// The ideal simultaneous broadcast functionality with parameters
/// `(phi, delta, alpha)`. One broadcast period per instance.
#[derive(Clone, Debug)]
pub struct IdealSbc {
    name: String,
    phi: u64,
    delta: u64,
    alpha: u64,
    pend: Vec<SbcTuple>,
    t_start: Option<u64>,
    committed: bool,
    revealed: bool,
    last_round: Option<u64>,
    signalled: Vec<(usize, u64)>,
}

impl IdealSbc {
    pub fn new(phi: u64, delta: u64, alpha: u64) -> Self {
        Self::named("F_SBC", phi, delta, alpha)
    }

    /// Same functionality, reporting its leakage under another name.
    pub fn named(name: &str, phi: u64, delta: u64, alpha: u64) -> Self {
        Self {
            name: name.to_string(),
            phi,
            delta,
            alpha,
            pend: Vec::new(),
            t_start: None,
            committed: false,
            revealed: false,
            last_round: None,
            signalled: Vec::new(),
        }
    }

    /// `(t_start, t_end)` once the first broadcast has arrived.
    pub fn window(&self) -> Option<(u64, u64)> {
        self.t_start.map(|s| (s, s + self.phi))
    }

    pub fn tuples(&self) -> &[SbcTuple] {
        &self.pend
    }

    fn in_window(&self, cl: u64) -> bool {
        self.window().is_some_and(|(s, e)| s <= cl && cl < e)
    }

    pub fn broadcast(&mut self, ctx: &mut Ctx, from: usize, msg: &[u8]) -> Option<String> {
        let cl = ctx.round();
        if self.t_start.is_none() {
            self.t_start = Some(cl);
        }
        if !self.in_window(cl) {
            return None;
        }
        let corrupted = ctx.is_corrupted(from);
        let tag = ctx.tag();
        self.pend.push(SbcTuple {
            tag: tag.clone(),
            msg: msg.to_vec(),
            owner: from,
            cl,
            bit: corrupted,
        });
        let shown = if corrupted { msg.to_vec() } else { vec![0u8; msg.len()] };
        ctx.leak(&self.name, json!({ "event": "broadcast", "tag": tag, "msg": hx(&shown), "party": from }));
        Some(tag)
    }

    /// The uncommitted tuples of corrupted parties.
    pub fn corruption_request(&self, ctx: &Ctx) -> Vec<SbcTuple> {
        self.pend.iter().filter(|t| !t.bit && ctx.is_corrupted(t.owner)).cloned().collect()
    }

    pub fn allow(&mut self, ctx: &mut Ctx, tag: &str, msg: &[u8]) -> bool {
        if !self.in_window(ctx.round()) {
            return false;
        }
        let Some(t) = self.pend.iter_mut().find(|t| t.tag == tag) else {
            return false;
        };
        if t.bit || !ctx.is_corrupted(t.owner) {
            return false;
        }
        t.msg = msg.to_vec();
        t.bit = true;
        true
    }

    /// Clock signal from an honest party. Returns the batch when this is the
    /// party's first signal in round `t_end + delta`.
    pub fn advance_clock(&mut self, ctx: &mut Ctx, from: usize) -> Option<Vec<Vec<u8>>> {
        if ctx.is_corrupted(from) {
            return None;
        }
        let cl = ctx.round();
        if self.signalled.contains(&(from, cl)) {
            return None;
        }
        self.signalled.retain(|(_, r)| *r == cl);
        self.signalled.push((from, cl));
        let (_, t_end) = self.window()?;
        if self.last_round != Some(cl) {
            self.last_round = Some(cl);
            if cl == t_end && !self.committed {
                for t in self.pend.iter_mut().filter(|t| !ctx.is_corrupted(t.owner)) {
                    t.bit = true;
                }
                self.pend.sort_by(|a, b| a.msg.cmp(&b.msg));
                self.committed = true;
            }
            if cl + self.alpha == t_end + self.delta && !self.revealed {
                self.revealed = true;
                let batch: Vec<_> = self
                    .pend
                    .iter()
                    .filter(|t| t.bit)
                    .map(|t| json!({ "tag": t.tag, "msg": hx(&t.msg) }))
                    .collect();
                ctx.leak(&self.name, json!({ "event": "batch", "batch": batch }));
            }
        }
        (cl == t_end + self.delta).then(|| self.pend.iter().filter(|t| t.bit).map(|t| t.msg.clone()).collect())
    }
}

/// Checks a protocol configuration over time-lock encryption with the given
/// `delay` and leak advantage `delay - 1`.
pub fn sbc_gate(phi: u64, delta: u64, alpha: Option<u64>, delay: u64) -> Result<(), SimError> {
    let adv = delay.saturating_sub(1);
    if phi <= delay {
        return Err(SimError::Gate(format!("phi = {phi} must exceed the encryption delay {delay}")));
    }
    if delta <= adv {
        return Err(SimError::Gate(format!("delta = {delta} must exceed the leak advantage {adv}")));
    }
    if let Some(a) = alpha {
        if a != adv + 1 {
            return Err(SimError::Gate(format!("alpha = {a} must equal {}", adv + 1)));
        }
    }
    Ok(())
}

pub(crate) const WAKE_UP: &[u8] = b"\x00WAKE_UP";

/// Unfair-broadcast payloads of the protocol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Wire {
    WakeUp,
    Data { c: Vec<u8>, tau: i64, y: Vec<u8> },
}

pub(crate) fn encode_data(c: &[u8], tau: i64, y: &[u8]) -> Vec<u8> {
    let mut out = vec![1u8];
    out.extend_from_slice(&tau.to_be_bytes());
    out.extend_from_slice(&(c.len() as u32).to_be_bytes());
    out.extend_from_slice(c);
    out.extend_from_slice(y);
    out
}

pub(crate) fn decode(bytes: &[u8]) -> Option<Wire> {
    if bytes == WAKE_UP {
        return Some(Wire::WakeUp);
    }
    let (&kind, rest) = bytes.split_first()?;
    if kind != 1 || rest.len() < 12 {
        return None;
    }
    let tau = i64::from_be_bytes(rest[..8].try_into().ok()?);
    let len = u32::from_be_bytes(rest[8..12].try_into().ok()?) as usize;
    let body = &rest[12..];
    if body.len() < len {
        return None;
    }
    Some(Wire::Data {
        c: body[..len].to_vec(),
        tau,
        y: body[len..].to_vec(),
    })
}

pub(crate) fn deliver_output(msgs: &[Vec<u8>]) -> serde_json::Value {
    json!({ "kind": "deliver", "msgs": msgs.iter().map(|m| hx(m)).collect::<Vec<_>>() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::OracleMode;

    fn ctx() -> Ctx {
        Ctx::new("t", 3, 2, 1, OracleMode::Concrete)
    }

    fn tick(c: &mut Ctx) {
        let f = c.func_id("F");
        if !c.clock.is_registered(&f) {
            c.clock.register(f.clone()).unwrap();
        }
        c.clock.advance(&f).unwrap();
    }

    #[test]
    fn honest_message_committed_and_delivered() {
        let mut c = ctx();
        let mut f = IdealSbc::new(2, 2, 1);
        f.broadcast(&mut c, 0, b"b").unwrap();
        f.broadcast(&mut c, 1, b"a").unwrap();
        let mut adv_round = None;
        let mut out_round = None;
        for _ in 0..6 {
            let before = c.trace.with_label("leak").count();
            let out = f.advance_clock(&mut c, 2);
            if c.trace.events[before..].iter().any(|e| e.payload["event"] == "batch") {
                adv_round = Some(c.round());
            }
            if let Some(out) = out {
                assert_eq!(out, vec![b"a".to_vec(), b"b".to_vec()]);
                out_round = Some(c.round());
            }
            tick(&mut c);
        }
        assert_eq!(out_round, Some(4));
        assert_eq!(adv_round, Some(3));
    }

    #[test]
    fn honest_leak_is_zeroed() {
        let mut c = ctx();
        let mut f = IdealSbc::new(2, 2, 1);
        f.broadcast(&mut c, 0, b"xyz");
        let leak = c.trace.with_label("leak").next().unwrap();
        assert_eq!(leak.payload["msg"], hx(&[0, 0, 0]));
    }

    #[test]
    fn allow_outside_window_ignored() {
        let mut c = ctx();
        let mut f = IdealSbc::new(1, 2, 1);
        let tag = f.broadcast(&mut c, 0, b"m").unwrap();
        c.set_corrupted(0);
        tick(&mut c);
        assert!(!f.allow(&mut c, &tag, b"evil"));
        assert!(f.broadcast(&mut c, 1, b"late").is_none());
    }

    #[test]
    fn corrupted_tuple_replaced_in_window() {
        let mut c = ctx();
        let mut f = IdealSbc::new(2, 2, 1);
        let tag = f.broadcast(&mut c, 0, b"m").unwrap();
        c.set_corrupted(0);
        assert_eq!(f.corruption_request(&c).len(), 1);
        assert!(f.allow(&mut c, &tag, b"evil"));
        assert!(!f.allow(&mut c, &tag, b"again"));
        assert_eq!(f.tuples()[0].msg, b"evil");
    }

    #[test]
    fn gate() {
        assert!(sbc_gate(4, 3, Some(3), 3).is_ok());
        assert!(sbc_gate(3, 3, Some(3), 3).is_err());
        assert!(sbc_gate(4, 2, Some(3), 3).is_err());
        assert!(sbc_gate(4, 3, Some(2), 3).is_err());
    }

    #[test]
    fn wire_encoding() {
        let w = encode_data(b"cc", 9, b"yyy");
        assert_eq!(decode(&w), Some(Wire::Data { c: b"cc".to_vec(), tau: 9, y: b"yyy".to_vec() }));
        assert_eq!(decode(WAKE_UP), Some(Wire::WakeUp));
        assert_eq!(decode(b"\x01short"), None);
        assert_eq!(decode(b""), None);
    }
}
