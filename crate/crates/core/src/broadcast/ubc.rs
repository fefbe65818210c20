use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::rbc::{RbcBackend, RbcOut};
use crate::error::SimError;
use crate::kernel::{hx, Action, Ctx, Input, Stack};

/// Ideal unfair broadcast. Honest messages wait for the sender's clock
/// signal; the adversary learns them immediately and may replace the
/// pending messages of corrupted senders.
#[derive(Clone, Debug, Default)]
pub struct IdealUbc {
    pend: Vec<(String, Vec<u8>, usize)>,
    flushed: BTreeMap<usize, u64>,
}

impl IdealUbc {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the tag of a pending message, or the message itself when it
    /// is delivered at once (corrupted sender).
    pub fn broadcast(&mut self, ctx: &mut Ctx, from: usize, msg: &[u8]) -> Result<String, Vec<u8>> {
        if ctx.is_corrupted(from) {
            return Err(msg.to_vec());
        }
        let tag = ctx.tag();
        ctx.leak("F_UBC", json!({ "event": "broadcast", "tag": tag, "msg": hx(msg), "party": from }));
        self.pend.push((tag.clone(), msg.to_vec(), from));
        Ok(tag)
    }

    pub fn allow(&mut self, ctx: &mut Ctx, tag: &str, msg: &[u8]) -> Option<Vec<u8>> {
        let i = self.pend.iter().position(|(t, _, _)| t == tag)?;
        if !ctx.is_corrupted(self.pend[i].2) {
            return None;
        }
        self.pend.remove(i);
        Some(msg.to_vec())
    }

    /// Flushes the sender's pending messages on its first signal of the round.
    pub fn advance_clock(&mut self, ctx: &mut Ctx, from: usize) -> Vec<Vec<u8>> {
        if ctx.is_corrupted(from) {
            return Vec::new();
        }
        let r = ctx.round();
        if self.flushed.get(&from) == Some(&r) {
            return Vec::new();
        }
        self.flushed.insert(from, r);
        let (mine, rest): (Vec<_>, Vec<_>) = self.pend.drain(..).partition(|(_, _, p)| *p == from);
        self.pend = rest;
        mine.into_iter().map(|(_, m, _)| m).collect()
    }

    pub fn pending_of(&self, p: usize) -> Vec<(String, Vec<u8>)> {
        self.pend
            .iter()
            .filter(|(_, _, o)| *o == p)
            .map(|(t, m, _)| (t.clone(), m.clone()))
            .collect()
    }

    pub fn is_pending(&self, tag: &str) -> bool {
        self.pend.iter().any(|(t, _, _)| t == tag)
    }
}

fn deliver_all(ctx: &mut Ctx, msg: &[u8]) {
    for p in 0..ctx.n {
        ctx.output(p, json!({ "kind": "deliver", "msg": hx(msg) }));
    }
}

/// Adversary-held replacement for a message a corrupted party had queued.
#[derive(Clone, Debug)]
enum Override {
    Replace(Vec<u8>),
    Drop,
}

/// Unfair broadcast protocol: one relaxed broadcast instance per message,
/// released at the sender's end of round.
pub struct UbcProtocol<B: RbcBackend> {
    backend: B,
    total: Vec<u64>,
    count: Vec<u64>,
    held: Vec<Vec<(u64, Vec<u8>)>>,
    overrides: BTreeMap<(usize, u64), Override>,
    fresh: Vec<Vec<Vec<u8>>>,
    sent: Vec<Vec<Vec<u8>>>,
}

impl<B: RbcBackend> UbcProtocol<B> {
    pub fn new(n: usize, backend: B) -> Self {
        Self {
            backend,
            total: vec![0; n],
            count: vec![0; n],
            held: vec![Vec::new(); n],
            overrides: BTreeMap::new(),
            fresh: vec![Vec::new(); n],
            sent: vec![Vec::new(); n],
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn backend_mut(&mut self) -> &mut B {
        &mut self.backend
    }

    fn deliver(&mut self, ctx: &mut Ctx, outs: Vec<RbcOut>) {
        for o in outs {
            for p in o.to {
                ctx.output(p, json!({ "kind": "deliver", "msg": hx(&o.msg) }));
            }
        }
    }

    fn next_index(&mut self, p: usize) -> u64 {
        let i = self.total[p];
        self.total[p] += 1;
        self.count[p] += 1;
        i
    }
}

impl<B: RbcBackend> Stack for UbcProtocol<B> {
    fn functionalities(&self) -> Vec<String> {
        vec![self.backend.name()]
    }

    fn latency(&self) -> u64 {
        self.backend.latency()
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        let Input::Broadcast { msg } = input else {
            ctx.warn(Some(party), &format!("input `{}` not understood by this stack", input.name()));
            return Ok(());
        };
        self.sent[party].push(msg.0.clone());
        if ctx.is_corrupted(party) {
            self.fresh[party].push(msg.0.clone());
            return Ok(());
        }
        let idx = self.next_index(party);
        let outs = self.backend.submit(ctx, (party, idx), &msg.0);
        self.deliver(ctx, outs);
        self.held[party].push((idx, msg.0.clone()));
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        for (idx, _) in std::mem::take(&mut self.held[party]) {
            let outs = self.backend.trigger(ctx, (party, idx));
            self.deliver(ctx, outs);
        }
        self.count[party] = 0;
        let outs = self.backend.party_round_end(ctx, party);
        self.deliver(ctx, outs);
        Ok(())
    }

    fn corrupt(&mut self, _ctx: &mut Ctx, party: usize) -> Value {
        json!({
            "total": self.total[party],
            "count": self.count[party],
            "pending": self.held[party].iter().map(|(i, m)| json!({ "index": i, "msg": hx(m) })).collect::<Vec<_>>(),
        })
    }

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError> {
        let p = action.party();
        if !ctx.is_corrupted(p) {
            ctx.warn(Some(p), "directive for an honest party ignored");
            return Ok(());
        }
        match action {
            Action::Substitute { nth, msg, .. } => {
                if self.held[p].iter().any(|(i, _)| *i == *nth as u64) {
                    self.overrides.insert((p, *nth as u64), Override::Replace(msg.0.clone()));
                } else {
                    ctx.warn(Some(p), "substitution target already released");
                }
            }
            Action::Drop { nth, .. } => {
                if self.held[p].iter().any(|(i, _)| *i == *nth as u64) {
                    self.overrides.insert((p, *nth as u64), Override::Drop);
                } else {
                    ctx.warn(Some(p), "drop target already released");
                }
            }
            Action::Inject { msg, .. } => self.fresh[p].push(msg.0.clone()),
            Action::InjectRaw { payload, .. } => self.fresh[p].push(payload.0.clone()),
            Action::Replay { source, nth, .. } => match self.sent[*source].get(*nth) {
                Some(m) => {
                    let m = m.clone();
                    self.fresh[p].push(m)
                }
                None => ctx.warn(Some(p), "replay source unknown"),
            },
            Action::Equivocate { msgs, split, .. } => {
                let idx = self.next_index(p);
                let outs = self.backend.equivocate(ctx, (p, idx), &msgs[0].0, &msgs[1].0, split);
                self.deliver(ctx, outs);
            }
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let corrupted: Vec<usize> = ctx.corrupted().iter().copied().collect();
        for p in corrupted {
            for (idx, m) in std::mem::take(&mut self.held[p]) {
                let outs = match self.overrides.remove(&(p, idx)) {
                    Some(Override::Drop) => continue,
                    Some(Override::Replace(x)) => self.backend.allow(ctx, (p, idx), &x),
                    None => self.backend.allow(ctx, (p, idx), &m),
                };
                self.deliver(ctx, outs);
            }
            for m in std::mem::take(&mut self.fresh[p]) {
                let idx = self.next_index(p);
                let outs = self.backend.submit(ctx, (p, idx), &m);
                self.deliver(ctx, outs);
            }
            self.count[p] = 0;
        }
        let outs = self.backend.adversary_round_end(ctx);
        self.deliver(ctx, outs);
        Ok(())
    }
}

/// The ideal unfair broadcast driven by a semi-honest adversary that
/// releases corrupted parties' messages at the end of each round.
pub struct UbcIdealStack {
    f: IdealUbc,
    tags: Vec<Vec<String>>,
    overrides: BTreeMap<String, Override>,
    fresh: Vec<Vec<Vec<u8>>>,
    sent: Vec<Vec<Vec<u8>>>,
}

impl UbcIdealStack {
    pub fn new(n: usize) -> Self {
        Self {
            f: IdealUbc::new(),
            tags: vec![Vec::new(); n],
            overrides: BTreeMap::new(),
            fresh: vec![Vec::new(); n],
            sent: vec![Vec::new(); n],
        }
    }
}

impl Stack for UbcIdealStack {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_UBC".into()]
    }

    fn latency(&self) -> u64 {
        0
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        let Input::Broadcast { msg } = input else {
            ctx.warn(Some(party), &format!("input `{}` not understood by this stack", input.name()));
            return Ok(());
        };
        self.sent[party].push(msg.0.clone());
        if ctx.is_corrupted(party) {
            self.fresh[party].push(msg.0.clone());
            return Ok(());
        }
        match self.f.broadcast(ctx, party, &msg.0) {
            Ok(tag) => self.tags[party].push(tag),
            Err(m) => deliver_all(ctx, &m),
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        for m in self.f.advance_clock(ctx, party) {
            deliver_all(ctx, &m);
        }
        Ok(())
    }

    fn corrupt(&mut self, _ctx: &mut Ctx, party: usize) -> Value {
        json!({ "pending": self.f.pending_of(party).iter().map(|(t, m)| json!({ "tag": t, "msg": hx(m) })).collect::<Vec<_>>() })
    }

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError> {
        let p = action.party();
        if !ctx.is_corrupted(p) {
            ctx.warn(Some(p), "directive for an honest party ignored");
            return Ok(());
        }
        let pending_tag = |s: &Self, nth: usize| s.tags[p].get(nth).filter(|t| s.f.is_pending(t)).cloned();
        match action {
            Action::Substitute { nth, msg, .. } => match pending_tag(self, *nth) {
                Some(t) => {
                    self.overrides.insert(t, Override::Replace(msg.0.clone()));
                }
                None => ctx.warn(Some(p), "substitution target already released"),
            },
            Action::Drop { nth, .. } => match pending_tag(self, *nth) {
                Some(t) => {
                    self.overrides.insert(t, Override::Drop);
                }
                None => ctx.warn(Some(p), "drop target already released"),
            },
            Action::Inject { msg, .. } => self.fresh[p].push(msg.0.clone()),
            Action::InjectRaw { payload, .. } => self.fresh[p].push(payload.0.clone()),
            Action::Replay { source, nth, .. } => match self.sent[*source].get(*nth) {
                Some(m) => {
                    let m = m.clone();
                    self.fresh[p].push(m)
                }
                None => ctx.warn(Some(p), "replay source unknown"),
            },
            Action::Equivocate { .. } => ctx.warn(Some(p), "equivocation is not expressible against the ideal channel"),
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let corrupted: Vec<usize> = ctx.corrupted().iter().copied().collect();
        for p in corrupted {
            for (tag, m) in self.f.pending_of(p) {
                let out = match self.overrides.get(&tag) {
                    Some(Override::Drop) => continue,
                    Some(Override::Replace(x)) => {
                        let x = x.clone();
                        self.overrides.remove(&tag);
                        self.f.allow(ctx, &tag, &x)
                    }
                    None => self.f.allow(ctx, &tag, &m),
                };
                if let Some(m) = out {
                    deliver_all(ctx, &m);
                }
            }
            for m in std::mem::take(&mut self.fresh[p]) {
                if let Err(m) = self.f.broadcast(ctx, p, &m) {
                    deliver_all(ctx, &m);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::OracleMode;

    #[test]
    fn flush_preserves_order_and_is_idempotent() {
        let mut c = Ctx::new("t", 2, 1, 1, OracleMode::Concrete);
        let mut f = IdealUbc::new();
        f.broadcast(&mut c, 0, b"a").unwrap();
        f.broadcast(&mut c, 1, b"x").unwrap();
        f.broadcast(&mut c, 0, b"b").unwrap();
        assert_eq!(f.advance_clock(&mut c, 0), vec![b"a".to_vec(), b"b".to_vec()]);
        assert!(f.advance_clock(&mut c, 0).is_empty());
        assert_eq!(f.pending_of(1).len(), 1);
    }

    #[test]
    fn allow_only_for_corrupted_owner() {
        let mut c = Ctx::new("t", 2, 1, 1, OracleMode::Concrete);
        let mut f = IdealUbc::new();
        let tag = f.broadcast(&mut c, 1, b"m").unwrap();
        assert_eq!(f.allow(&mut c, &tag, b"z"), None);
        c.set_corrupted(1);
        assert_eq!(f.allow(&mut c, &tag, b"z"), Some(b"z".to_vec()));
        assert!(!f.is_pending(&tag));
        assert_eq!(f.broadcast(&mut c, 1, b"now"), Err(b"now".to_vec()));
    }
}
