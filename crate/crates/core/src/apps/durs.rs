use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::broadcast::IdealRbc;
use crate::crypto::{xor_digest, Digest, LAMBDA};
use crate::error::SimError;
use crate::kernel::{hx, Action, Ctx, Input, Stack};
use crate::sbc::IdealSbc;

const WAKE_UP: &[u8] = b"\x00WAKE_UP";

/// Rejects parameters outside `delta > phi > 0` and `delta - phi >= alpha`.
pub fn durs_gate(phi: u64, delta: u64, alpha: u64) -> Result<(), SimError> {
    if phi == 0 || delta <= phi {
        return Err(SimError::Gate(format!("need delta > phi > 0, got phi = {phi}, delta = {delta}")));
    }
    if delta - phi < alpha {
        return Err(SimError::Gate(format!("need delta - phi >= alpha, got {} < {alpha}", delta - phi)));
    }
    Ok(())
}

/// XOR of the batch entries that are exactly one block long.
pub fn combine(batch: &[Vec<u8>]) -> Digest {
    batch
        .iter()
        .filter_map(|m| <Digest>::try_from(m.as_slice()).ok())
        .fold([0u8; LAMBDA], |acc, r| xor_digest(&acc, &r))
}

fn urs_output(urs: &Digest) -> Value {
    json!({ "kind": "urs", "urs": hx(urs) })
}

/// The delayed uniform random string functionality.
#[derive(Clone, Debug)]
pub struct IdealDurs {
    delta: u64,
    alpha: u64,
    urs: Option<Digest>,
    t_start: Option<u64>,
    wait: Vec<bool>,
    advanced: Vec<Option<u64>>,
}

impl IdealDurs {
    pub fn new(n: usize, delta: u64, alpha: u64) -> Self {
        Self {
            delta,
            alpha,
            urs: None,
            t_start: None,
            wait: vec![false; n],
            advanced: vec![None; n],
        }
    }

    pub fn t_start(&self) -> Option<u64> {
        self.t_start
    }

    /// Request from an honest party.
    pub fn request(&mut self, ctx: &mut Ctx, p: usize) -> Option<Digest> {
        let cl = ctx.round();
        if self.urs.is_none() {
            self.urs = Some(ctx.random_block());
        }
        self.wait[p] = true;
        let start = match self.t_start {
            Some(s) => s,
            None => {
                self.t_start = Some(cl);
                ctx.leak("F_DURS", json!({ "event": "start", "party": p }));
                cl
            }
        };
        let ready = cl > start + self.delta || (cl == start + self.delta && self.advanced[p] == Some(cl));
        ready.then(|| self.urs.expect("sampled above"))
    }

    /// Request from the simulator.
    pub fn sim_request(&self, ctx: &Ctx) -> Option<Digest> {
        let start = self.t_start?;
        (ctx.round() + self.alpha >= start + self.delta).then(|| self.urs.expect("sampled with the start"))
    }

    pub fn advance_clock(&mut self, ctx: &mut Ctx, p: usize) -> Option<Digest> {
        if ctx.is_corrupted(p) {
            return None;
        }
        let cl = ctx.round();
        if self.advanced[p] == Some(cl) {
            return None;
        }
        self.advanced[p] = Some(cl);
        let start = self.t_start?;
        (cl == start + self.delta && self.wait[p]).then(|| self.urs.expect("sampled with the start"))
    }
}

/// The functionality with a simulator that mirrors the protocol's wake-up
/// schedule: a request is handed to the functionality when the requester's
/// Wake_Up would be delivered.
pub struct DursIdealStack {
    f: IdealDurs,
    delta: u64,
    awake: bool,
    held: Vec<bool>,
    wake_sent: Vec<bool>,
    wake_pending: Vec<bool>,
    leaked: bool,
}

impl DursIdealStack {
    pub fn new(n: usize, delta: u64, alpha: u64) -> Self {
        Self {
            f: IdealDurs::new(n, delta, alpha),
            delta,
            awake: false,
            held: vec![false; n],
            wake_sent: vec![false; n],
            wake_pending: vec![false; n],
            leaked: false,
        }
    }
}

impl Stack for DursIdealStack {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_DURS".into()]
    }

    fn latency(&self) -> u64 {
        self.delta + 1
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        if !matches!(input, Input::Urs) {
            ctx.warn(Some(party), &format!("input `{}` not understood by this stack", input.name()));
            return Ok(());
        }
        if ctx.is_corrupted(party) {
            return Ok(());
        }
        if self.awake {
            if let Some(u) = self.f.request(ctx, party) {
                ctx.output(party, urs_output(&u));
            }
        } else {
            self.held[party] = true;
            if !self.wake_sent[party] {
                self.wake_sent[party] = true;
                self.wake_pending[party] = true;
            }
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        if let Some(u) = self.f.advance_clock(ctx, party) {
            ctx.output(party, urs_output(&u));
        }
        if std::mem::take(&mut self.wake_pending[party]) && !self.awake {
            self.awake = true;
            for p in ctx.honest() {
                if std::mem::take(&mut self.held[p]) {
                    self.f.request(ctx, p);
                }
            }
        }
        Ok(())
    }

    fn corrupt(&mut self, _ctx: &mut Ctx, party: usize) -> Value {
        self.held[party] = false;
        self.wake_pending[party] = false;
        json!({})
    }

    fn directive(&mut self, _ctx: &mut Ctx, _action: &Action) -> Result<(), SimError> {
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        if !self.leaked {
            if let Some(u) = self.f.sim_request(ctx) {
                self.leaked = true;
                ctx.adversary_event("urs", json!({ "urs": hx(&u) }));
            }
        }
        Ok(())
    }
}

/// The random beacon protocol: a Wake_Up over relaxed broadcast starts the
/// period, every party contributes a random block through simultaneous
/// broadcast `F_SBC^{phi, delta - phi, alpha}`, and the string is the XOR of
/// the well-formed contributions.
pub struct DursProtocol {
    rbc: Vec<IdealRbc>,
    sbc: IdealSbc,
    phi: u64,
    delta: u64,
    alpha: u64,
    awake: bool,
    wake_sent: Vec<bool>,
    wait: Vec<bool>,
    urs: Vec<Option<Digest>>,
    tags: Vec<Option<String>>,
    settled: Vec<bool>,
    injected: Vec<(usize, Vec<u8>)>,
    overrides: BTreeMap<usize, Option<Vec<u8>>>,
    leaked: bool,
}

impl DursProtocol {
    pub fn new(n: usize, phi: u64, delta: u64, alpha: u64) -> Self {
        Self {
            rbc: (0..n).map(IdealRbc::new).collect(),
            sbc: IdealSbc::new(phi, delta - phi, alpha),
            phi,
            delta,
            alpha,
            awake: false,
            wake_sent: vec![false; n],
            wait: vec![false; n],
            urs: vec![None; n],
            tags: vec![None; n],
            settled: vec![false; n],
            injected: Vec::new(),
            overrides: BTreeMap::new(),
            leaked: false,
        }
    }

    fn on_wake(&mut self, ctx: &mut Ctx) {
        if self.awake {
            return;
        }
        self.awake = true;
        for p in ctx.honest() {
            let rho = ctx.random_block();
            self.tags[p] = self.sbc.broadcast(ctx, p, &rho);
        }
    }
}

impl Stack for DursProtocol {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_RBC".into(), "F_SBC".into()]
    }

    fn latency(&self) -> u64 {
        self.delta + 1
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        if !matches!(input, Input::Urs) {
            ctx.warn(Some(party), &format!("input `{}` not understood by this stack", input.name()));
            return Ok(());
        }
        if ctx.is_corrupted(party) {
            return Ok(());
        }
        if let Some(u) = self.urs[party] {
            ctx.output(party, urs_output(&u));
            return Ok(());
        }
        self.wait[party] = true;
        if !self.awake && !self.wake_sent[party] {
            self.wake_sent[party] = true;
            if let Some(m) = self.rbc[party].broadcast(ctx, party, WAKE_UP) {
                if m == WAKE_UP {
                    self.on_wake(ctx);
                }
            }
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        if let Some(batch) = self.sbc.advance_clock(ctx, party) {
            let urs = combine(&batch);
            ctx.party_event(party, "durs_batch", json!({ "msgs": batch.iter().map(|m| hx(m)).collect::<Vec<_>>() }));
            self.urs[party] = Some(urs);
            if self.wait[party] {
                ctx.output(party, urs_output(&urs));
            }
        }
        if let Some(m) = self.rbc[party].advance_clock(ctx, party) {
            if m == WAKE_UP {
                self.on_wake(ctx);
            }
        }
        Ok(())
    }

    fn corrupt(&mut self, _ctx: &mut Ctx, party: usize) -> Value {
        json!({ "contributed": self.tags[party].is_some() })
    }

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError> {
        let p = action.party();
        if !ctx.is_corrupted(p) {
            ctx.warn(Some(p), "directive for an honest party ignored");
            return Ok(());
        }
        match action {
            Action::Inject { msg, .. } => self.injected.push((p, msg.0.clone())),
            Action::InjectRaw { payload, .. } => self.injected.push((p, payload.0.clone())),
            Action::Substitute { msg, .. } => {
                self.overrides.insert(p, Some(msg.0.clone()));
            }
            Action::Drop { .. } => {
                self.overrides.insert(p, None);
            }
            Action::Replay { .. } | Action::Equivocate { .. } => {
                ctx.warn(Some(p), "directive not expressible for the random beacon")
            }
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        for p in ctx.corrupted().clone() {
            let Some(tag) = self.tags[p].clone() else { continue };
            if self.settled[p] {
                continue;
            }
            self.settled[p] = true;
            let orig = self.sbc.tuples().iter().find(|t| t.tag == tag).map(|t| t.msg.clone());
            let msg = match self.overrides.remove(&p) {
                Some(m) => m,
                None => orig,
            };
            if let Some(m) = msg {
                self.sbc.allow(ctx, &tag, &m);
            }
        }
        if self.awake {
            for (p, m) in std::mem::take(&mut self.injected) {
                self.sbc.broadcast(ctx, p, &m);
            }
        }
        if let (false, Some((_, t_end))) = (self.leaked, self.sbc.window()) {
            if ctx.round() + self.alpha >= t_end + self.delta - self.phi {
                let msgs: Vec<Vec<u8>> = self.sbc.tuples().iter().filter(|t| t.bit).map(|t| t.msg.clone()).collect();
                self.leaked = true;
                ctx.adversary_event("urs", json!({ "urs": hx(&combine(&msgs)) }));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::OracleMode;
    use crate::kernel::{run_stack, Bytes, ScenarioScript, Trace};

    fn urs_outputs(tr: &Trace) -> Vec<(u64, String, String)> {
        tr.with_label("output")
            .map(|e| (e.round, e.actor.to_string(), e.payload["urs"].as_str().unwrap().to_string()))
            .collect()
    }

    #[test]
    fn combine_skips_malformed_entries() {
        let a = [1u8; 32];
        let b = [2u8; 32];
        assert_eq!(combine(&[a.to_vec(), b"short".to_vec(), b.to_vec()]), [3u8; 32]);
        assert_eq!(combine(&[a.to_vec()]), a);
    }

    #[test]
    fn gate() {
        assert!(durs_gate(2, 4, 2).is_ok());
        assert!(durs_gate(0, 4, 1).is_err());
        assert!(durs_gate(4, 4, 0).is_err());
        assert!(durs_gate(2, 4, 3).is_err());
    }

    #[test]
    fn adversary_request_waits_for_its_advantage() {
        let mut c = Ctx::new("t", 2, 1, 1, OracleMode::Concrete);
        let mut f = IdealDurs::new(2, 3, 1);
        assert!(f.request(&mut c, 0).is_none());
        assert!(f.sim_request(&c).is_none());
        let fid = c.func_id("F");
        c.clock.register(fid.clone()).unwrap();
        for _ in 0..2 {
            c.clock.advance(&fid).unwrap();
        }
        assert!(f.sim_request(&c).is_some());
    }

    #[test]
    fn protocol_and_ideal_deliver_in_the_same_rounds() {
        let s = ScenarioScript::new("durs", 3, 4)
            .act(1, 0, Input::Urs)
            .act(2, 1, Input::Urs)
            .act(9, 2, Input::Urs)
            .corrupt_at(0, 0, 2)
            .direct(2, 99, Action::Inject { party: 2, msg: Bytes(vec![0xff; 32]) });
        let mut ctx = Ctx::new("t", 3, 4, 1, OracleMode::Concrete);
        let real = run_stack(&s, &mut DursProtocol::new(3, 2, 4, 2), &mut ctx, 6).unwrap();
        let mut ctx = Ctx::new("t", 3, 4, 1, OracleMode::Concrete);
        let ideal = run_stack(&s, &mut DursIdealStack::new(3, 4, 2), &mut ctx, 6).unwrap();
        let r = urs_outputs(&real);
        let i = urs_outputs(&ideal);
        let rounds = |v: &[(u64, String, String)]| v.iter().map(|x| (x.0, x.1.clone())).collect::<Vec<_>>();
        assert_eq!(rounds(&r), rounds(&i));
        assert_eq!(r.iter().map(|x| x.0).collect::<Vec<_>>(), vec![5, 5]);
        assert!(r.iter().all(|x| x.2 == r[0].2));
        let batch = real.with_label("durs_batch").next().unwrap();
        let msgs: Vec<Vec<u8>> =
            batch.payload["msgs"].as_array().unwrap().iter().map(|m| hex::decode(m.as_str().unwrap()).unwrap()).collect();
        assert_eq!(msgs.len(), 3);
        assert_eq!(hx(&combine(&msgs)), r[0].2);
    }
}
