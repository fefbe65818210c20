use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::{decode, deliver_output, encode_data, Wire, WAKE_UP};
use crate::broadcast::IdealUbc;
use crate::crypto::{mask_expand, xor_bytes, Digest, LAMBDA};
use crate::error::SimError;
use crate::kernel::{hx, Action, Ctx, Input, Stack};
use crate::tle::{DecResult, IdealTle, TleCiphertext};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Window {
    t_awake: u64,
    t_end: u64,
    tau_rel: u64,
}

#[derive(Clone, Debug)]
struct Pend {
    rho: Digest,
    msg: Vec<u8>,
    nth: usize,
}

#[derive(Clone, Debug, Default)]
struct Party {
    first: Vec<Pend>,
    pend: Vec<Pend>,
    rec: Vec<(Vec<u8>, Vec<u8>)>,
    wake_sent: bool,
    inputs: usize,
}

/// Simultaneous broadcast over ideal unfair broadcast and ideal time-lock
/// encryption with the given `delay` (leak advantage `delay - 1`).
///
/// The first message of the period triggers a Wake_Up so that all parties
/// agree on `t_awake`; every message is masked under a fresh `rho` that is
/// time-locked until `tau_rel = t_awake + phi + delta`.
pub struct SbcProtocol {
    ubc: IdealUbc,
    tle: IdealTle,
    phi: u64,
    delta: u64,
    delay: u64,
    window: Option<Window>,
    parties: Vec<Party>,
    adv: Vec<(usize, Option<usize>, Vec<u8>)>,
    overrides: BTreeMap<(usize, usize), Option<Vec<u8>>>,
    raw: Vec<(usize, Vec<u8>)>,
    wires: Vec<Vec<Vec<u8>>>,
    seen: Vec<(Vec<u8>, Vec<u8>)>,
    recovered: BTreeSet<Vec<u8>>,
}

impl SbcProtocol {
    pub fn new(n: usize, phi: u64, delta: u64, delay: u64, q: u32) -> Self {
        Self {
            ubc: IdealUbc::new(),
            tle: IdealTle::new(delay.saturating_sub(1), delay, q),
            phi,
            delta,
            delay,
            window: None,
            parties: vec![Party::default(); n],
            adv: Vec::new(),
            overrides: BTreeMap::new(),
            raw: Vec::new(),
            wires: vec![Vec::new(); n],
            seen: Vec::new(),
            recovered: BTreeSet::new(),
        }
    }

    fn mask(ctx: &mut Ctx, rho: &[u8], data: &[u8]) -> Vec<u8> {
        let eta = mask_expand(&mut ctx.oracle, rho, data.len());
        xor_bytes(data, &eta)
    }

    fn enc(&mut self, ctx: &mut Ctx, p: usize, e: Pend) {
        let w = self.window.expect("encryption only after wake-up");
        self.tle.enc(ctx, p, &e.rho, w.tau_rel as i64);
        self.parties[p].pend.push(e);
    }

    fn on_wake(&mut self, ctx: &mut Ctx) {
        if self.window.is_some() {
            return;
        }
        let t_awake = ctx.round();
        let w = Window {
            t_awake,
            t_end: t_awake + self.phi,
            tau_rel: t_awake + self.phi + self.delta,
        };
        self.window = Some(w);
        for p in ctx.honest() {
            ctx.party_event(p, "sbc_awake", json!({ "t_awake": w.t_awake, "t_end": w.t_end, "tau_rel": w.tau_rel }));
        }
        for p in ctx.honest() {
            for e in std::mem::take(&mut self.parties[p].first) {
                self.enc(ctx, p, e);
            }
        }
    }

    fn on_data(&mut self, ctx: &mut Ctx, c: Vec<u8>, tau: i64, y: Vec<u8>) {
        let cl = ctx.round();
        self.seen.push((c.clone(), y.clone()));
        for p in ctx.honest() {
            let reason = match self.window {
                None => Some("not awake"),
                Some(w) if tau != w.tau_rel as i64 => Some("release time mismatch"),
                Some(w) if cl < w.t_awake || cl >= w.t_end => Some("outside the broadcast period"),
                _ if self.parties[p].rec.iter().any(|(c2, _)| *c2 == c) => Some("duplicate"),
                _ => None,
            };
            match reason {
                Some(r) => ctx.party_event(p, "sbc_drop", json!({ "reason": r })),
                None => self.parties[p].rec.push((c.clone(), y.clone())),
            }
        }
    }

    fn deliver(&mut self, ctx: &mut Ctx, from: usize, bytes: &[u8]) {
        match decode(bytes) {
            Some(Wire::WakeUp) => self.on_wake(ctx),
            Some(Wire::Data { c, tau, y }) => {
                self.wires[from].push(bytes.to_vec());
                self.on_data(ctx, c, tau, y);
            }
            None => ctx.warn(Some(from), "malformed simultaneous-broadcast payload"),
        }
    }

    /// Sends through the unfair channel; a corrupted sender's message is
    /// delivered at once.
    fn send(&mut self, ctx: &mut Ctx, from: usize, bytes: &[u8]) {
        if let Err(m) = self.ubc.broadcast(ctx, from, bytes) {
            self.deliver(ctx, from, &m);
        }
    }

    /// Matured encryptions of `p` that can still make the window.
    fn release(&mut self, ctx: &mut Ctx, p: usize) -> Vec<(Pend, Vec<u8>)> {
        let Some(w) = self.window else { return Vec::new() };
        let cl = ctx.round();
        if cl < w.t_awake || cl >= w.t_end {
            return Vec::new();
        }
        let ready = self.tle.retrieve(ctx, p);
        let mut out = Vec::new();
        for (rho, c, _) in ready {
            if let Some(i) = self.parties[p].pend.iter().position(|e| e.rho[..] == rho[..]) {
                out.push((self.parties[p].pend.remove(i), c));
            }
        }
        out
    }

    fn wire_for(ctx: &mut Ctx, w: Window, rho: &Digest, msg: &[u8], c: &[u8]) -> Vec<u8> {
        let y = Self::mask(ctx, rho, msg);
        encode_data(c, w.tau_rel as i64, &y)
    }

    fn release_at_deadline(&mut self, ctx: &mut Ctx, p: usize, w: Window) {
        let mut msgs = Vec::new();
        for (c, y) in self.parties[p].rec.clone() {
            match self.tle.dec(ctx, &c, w.tau_rel as i64, |_, _, _| None) {
                DecResult::Msg(rho) if rho.len() == LAMBDA => msgs.push(Self::mask(ctx, &rho, &y)),
                other => ctx.party_event(p, "sbc_skip", json!({ "result": other.label() })),
            }
        }
        ctx.output(p, deliver_output(&msgs));
    }

    fn adversary_recovers(&mut self, ctx: &mut Ctx) {
        let leaked: Vec<(Vec<u8>, Vec<u8>, i64)> = self
            .tle
            .leakage(ctx)
            .into_iter()
            .filter(|(_, r)| r.owner.is_some_and(|o| !ctx.is_corrupted(o)))
            .filter_map(|(_, r)| Some((r.c.clone()?, r.msg.clone(), r.tau)))
            .collect();
        for (c, rho, tau) in leaked {
            if self.recovered.contains(&c) {
                continue;
            }
            let Some((_, y)) = self.seen.iter().find(|(c2, _)| *c2 == c).cloned() else {
                continue;
            };
            self.recovered.insert(c);
            let m = Self::mask(ctx, &rho, &y);
            ctx.adversary_event("sbc_recovered", json!({ "msg": hx(&m), "tau": tau }));
        }
    }
}

impl Stack for SbcProtocol {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_UBC".into(), "F_TLE".into()]
    }

    fn latency(&self) -> u64 {
        self.phi + self.delta + 1
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        let Input::Broadcast { msg } = input else {
            ctx.warn(Some(party), &format!("input `{}` not understood by this stack", input.name()));
            return Ok(());
        };
        let nth = self.parties[party].inputs;
        self.parties[party].inputs += 1;
        if ctx.is_corrupted(party) {
            self.adv.push((party, Some(nth), msg.0.clone()));
            return Ok(());
        }
        let cl = ctx.round();
        let e = Pend {
            rho: ctx.random_block(),
            msg: msg.0.clone(),
            nth,
        };
        match self.window {
            None => {
                self.parties[party].first.push(e);
                if !self.parties[party].wake_sent {
                    self.parties[party].wake_sent = true;
                    self.send(ctx, party, WAKE_UP);
                }
            }
            Some(w) if cl + self.delay >= w.t_end => {
                ctx.party_event(party, "sbc_late", json!({ "nth": nth }));
            }
            Some(_) => self.enc(ctx, party, e),
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        if let Some(w) = self.window {
            for (e, c) in self.release(ctx, party) {
                let wire = Self::wire_for(ctx, w, &e.rho, &e.msg, &c);
                self.send(ctx, party, &wire);
            }
            if ctx.round() == w.tau_rel {
                self.release_at_deadline(ctx, party, w);
            }
        }
        for m in self.ubc.advance_clock(ctx, party) {
            self.deliver(ctx, party, &m);
        }
        Ok(())
    }

    fn corrupt(&mut self, _ctx: &mut Ctx, party: usize) -> Value {
        let first = std::mem::take(&mut self.parties[party].first);
        for e in &first {
            self.adv.push((party, Some(e.nth), e.msg.clone()));
        }
        let pend: Vec<Value> = self.parties[party]
            .pend
            .iter()
            .map(|e| json!({ "msg": hx(&e.msg), "rho": hx(&e.rho) }))
            .collect();
        json!({ "pending": pend, "unsent": first.iter().map(|e| hx(&e.msg)).collect::<Vec<_>>() })
    }

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError> {
        let p = action.party();
        if !ctx.is_corrupted(p) {
            ctx.warn(Some(p), "directive for an honest party ignored");
            return Ok(());
        }
        match action {
            Action::Substitute { nth, msg, .. } => {
                self.overrides.insert((p, *nth), Some(msg.0.clone()));
            }
            Action::Drop { nth, .. } => {
                self.overrides.insert((p, *nth), None);
            }
            Action::Inject { msg, .. } => self.adv.push((p, None, msg.0.clone())),
            Action::InjectRaw { payload, .. } => self.raw.push((p, payload.0.clone())),
            Action::Replay { source, nth, .. } => match self.wires.get(*source).and_then(|w| w.get(*nth)) {
                Some(w) => self.raw.push((p, w.clone())),
                None => ctx.warn(Some(p), "replay source unknown"),
            },
            Action::Equivocate { .. } => ctx.warn(Some(p), "equivocation is not expressible against the ideal channel"),
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let cl = ctx.round();
        for p in ctx.corrupted().clone() {
            let Some(w) = self.window else { break };
            for (e, c) in self.release(ctx, p) {
                let msg = match self.overrides.remove(&(p, e.nth)) {
                    Some(None) => continue,
                    Some(Some(m)) => m,
                    None => e.msg,
                };
                let wire = Self::wire_for(ctx, w, &e.rho, &msg, &c);
                self.send(ctx, p, &wire);
            }
            if cl + 1 >= w.t_end {
                self.parties[p].pend.clear();
            }
        }
        let queued: Vec<(usize, Vec<u8>)> = std::mem::take(&mut self.adv)
            .into_iter()
            .filter_map(|(p, nth, m)| match nth.and_then(|k| self.overrides.remove(&(p, k))) {
                Some(None) => None,
                Some(Some(x)) => Some((p, x)),
                None => Some((p, m)),
            })
            .collect();
        if let Some(&(p, _)) = queued.first() {
            if self.window.is_none() {
                self.send(ctx, p, WAKE_UP);
            }
        }
        for (p, m) in queued {
            let w = self.window.expect("woken above");
            let rho = ctx.random_block();
            let i = self.tle.enc(ctx, p, &rho, w.tau_rel as i64).expect("release time is non-negative");
            let tag = self.tle.records()[i].tag.clone().expect("encryptions carry a tag");
            let tau_dec = w.tau_rel.saturating_sub(cl + self.delay) as u32;
            let c = ctx.random_bytes(TleCiphertext::encoded_len(LAMBDA, tau_dec, ctx.q()));
            self.tle.update_cipher(&tag, c.clone());
            let wire = Self::wire_for(ctx, w, &rho, &m, &c);
            self.send(ctx, p, &wire);
        }
        for (p, payload) in std::mem::take(&mut self.raw) {
            self.send(ctx, p, &payload);
        }
        self.adversary_recovers(ctx);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::OracleMode;
    use crate::kernel::{run_stack, Bytes, ScenarioScript, Trace};
    use crate::sbc::SbcIdealStack;

    fn deliveries(tr: &Trace) -> Vec<(u64, String, Vec<String>)> {
        tr.with_label("output")
            .map(|e| {
                let mut msgs: Vec<String> =
                    e.payload["msgs"].as_array().unwrap().iter().map(|m| m.as_str().unwrap().to_string()).collect();
                msgs.sort();
                (e.round, e.actor.to_string(), msgs)
            })
            .collect()
    }

    fn both(s: &ScenarioScript) -> (Trace, Trace) {
        let mut ctx = Ctx::new("t", s.n, s.seed, 1, OracleMode::Concrete);
        let real = run_stack(s, &mut SbcProtocol::new(s.n, 4, 3, 3, 1), &mut ctx, 9).unwrap();
        let mut ctx = Ctx::new("t", s.n, s.seed, 1, OracleMode::Concrete);
        let ideal = run_stack(s, &mut SbcIdealStack::new(s.n, 4, 3, 3, 3), &mut ctx, 9).unwrap();
        (real, ideal)
    }

    fn b(s: &str) -> Input {
        Input::Broadcast { msg: Bytes::from_text(s) }
    }

    #[test]
    fn three_parties_output_same_multiset_at_release() {
        let s = ScenarioScript::new("sbc", 3, 7).act(2, 0, b("alpha")).act(2, 1, b("beta")).act(3, 2, b("late"));
        let (real, ideal) = both(&s);
        let got = deliveries(&real);
        assert_eq!(got.len(), 3);
        for (round, _, msgs) in &got {
            assert_eq!(*round, 2 + 4 + 3);
            assert_eq!(msgs, &vec![hx(b"alpha"), hx(b"beta")]);
        }
        assert_eq!(got, deliveries(&ideal));
        assert_eq!(real.with_label("sbc_late").count(), 1);
        let awake: BTreeSet<String> = real.with_label("sbc_awake").map(|e| e.payload.to_string()).collect();
        assert_eq!(awake.len(), 1);
    }

    #[test]
    fn replayed_pair_dropped() {
        let s = ScenarioScript::new("sbc", 3, 8)
            .act(0, 0, b("one"))
            .corrupt_at(0, 0, 2)
            .direct(3, 99, Action::Replay { party: 2, source: 0, nth: 0 });
        let (real, ideal) = both(&s);
        let got = deliveries(&real);
        assert!(got.iter().all(|(r, _, m)| *r == 7 && m == &vec![hx(b"one")]));
        assert_eq!(got, deliveries(&ideal));
        assert!(real.with_label("sbc_drop").any(|e| e.payload["reason"] == "duplicate"));
    }

    #[test]
    fn corrupted_sender_substitution_matches_ideal() {
        let s = ScenarioScript::new("sbc", 3, 9)
            .act(1, 0, b("honest"))
            .act(1, 1, b("orig"))
            .corrupt_at(2, 99, 1)
            .direct(2, 99, Action::Substitute { party: 1, nth: 0, msg: Bytes::from_text("swap") });
        let (real, ideal) = both(&s);
        let got = deliveries(&real);
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|(_, _, m)| m == &vec![hx(b"honest"), hx(b"swap")]));
        assert_eq!(got, deliveries(&ideal));
    }

    #[test]
    fn adversary_learns_honest_message_only_near_release() {
        let s = ScenarioScript::new("sbc", 3, 10).act(0, 0, b("secret")).corrupt_at(0, 0, 2);
        let (real, _) = both(&s);
        let tau_rel = 7;
        for e in real.events.iter().filter(|e| e.adversary_visible()) {
            if e.payload.to_string().contains(&hx(b"secret")) {
                assert!(e.round + 2 >= tau_rel, "leak in round {}", e.round);
            }
        }
        assert_eq!(real.with_label("sbc_recovered").count(), 1);
    }
}
