use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::ubc::IdealUbc;
use crate::astrolabous::{ast_dec, AstCiphertext, ChainSolver};
use crate::crypto::{mask_expand, sha256, xor_bytes, Caller, Digest};
use crate::error::SimError;
use crate::kernel::{hx, Action, Ctx, Input, Stack};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FbcTuple {
    pub tag: String,
    pub msg: Vec<u8>,
    pub owner: usize,
    pub cl: u64,
}

/// Ideal fair broadcast with delay `delta` and simulator advantage `alpha`.
#[derive(Clone, Debug)]
pub struct IdealFbc {
    delta: u64,
    alpha: u64,
    pend: Vec<FbcTuple>,
    lock: Vec<FbcTuple>,
    signalled: BTreeMap<usize, u64>,
}

impl IdealFbc {
    pub fn new(delta: u64, alpha: u64) -> Self {
        assert!(delta >= alpha, "fair broadcast needs delta >= alpha");
        Self {
            delta,
            alpha,
            pend: Vec::new(),
            lock: Vec::new(),
            signalled: BTreeMap::new(),
        }
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn alpha(&self) -> u64 {
        self.alpha
    }

    pub fn broadcast(&mut self, ctx: &mut Ctx, from: usize, msg: &[u8]) -> String {
        let tag = ctx.tag();
        let cl = ctx.round();
        self.pend.push(FbcTuple {
            tag: tag.clone(),
            msg: msg.to_vec(),
            owner: from,
            cl,
        });
        ctx.leak("F_FBC", json!({ "event": "broadcast", "tag": tag, "party": from }));
        tag
    }

    pub fn output_request(&mut self, ctx: &mut Ctx, tag: &str) -> Option<FbcTuple> {
        let cl = ctx.round();
        let i = self
            .pend
            .iter()
            .position(|t| t.tag == tag && cl.checked_sub(t.cl) == Some(self.delta - self.alpha))?;
        let t = self.pend.remove(i);
        self.lock.push(t.clone());
        ctx.leak(
            "F_FBC",
            json!({ "event": "output_request", "tag": t.tag, "msg": hx(&t.msg), "party": t.owner, "cl": t.cl }),
        );
        Some(t)
    }

    pub fn corruption_request(&mut self, ctx: &mut Ctx) -> Vec<FbcTuple> {
        let out: Vec<FbcTuple> = self.pend.iter().filter(|t| ctx.is_corrupted(t.owner)).cloned().collect();
        ctx.leak(
            "F_FBC",
            json!({ "event": "corruption_request",
                    "pending": out.iter().map(|t| json!({ "tag": t.tag, "msg": hx(&t.msg), "party": t.owner })).collect::<Vec<_>>() }),
        );
        out
    }

    /// Returns true when the replacement took effect.
    pub fn allow(&mut self, ctx: &mut Ctx, tag: &str, msg: &[u8], owner: usize) -> bool {
        if !ctx.is_corrupted(owner) {
            return false;
        }
        let Some(i) = self.pend.iter().position(|t| t.tag == tag && t.owner == owner) else {
            return false;
        };
        let t = self.pend.remove(i);
        if !self.lock.iter().any(|l| l.tag == tag) {
            self.lock.push(FbcTuple {
                msg: msg.to_vec(),
                ..t
            });
        }
        true
    }

    pub fn is_pending(&self, tag: &str) -> bool {
        self.pend.iter().any(|t| t.tag == tag)
    }

    pub fn is_locked(&self, tag: &str) -> bool {
        self.lock.iter().any(|t| t.tag == tag)
    }

    pub fn pending(&self) -> &[FbcTuple] {
        &self.pend
    }

    pub fn tuple(&self, tag: &str) -> Option<&FbcTuple> {
        self.pend.iter().chain(self.lock.iter()).find(|t| t.tag == tag)
    }

    /// Messages due for `from` on its first clock signal of the round, in
    /// lexicographic order.
    pub fn advance_clock(&mut self, ctx: &mut Ctx, from: usize) -> Vec<Vec<u8>> {
        if ctx.is_corrupted(from) {
            return Vec::new();
        }
        let cl = ctx.round();
        if self.signalled.insert(from, cl) == Some(cl) {
            return Vec::new();
        }
        let mut all: Vec<&FbcTuple> = self.pend.iter().chain(self.lock.iter()).collect();
        all.sort_by(|a, b| a.msg.cmp(&b.msg));
        all.into_iter()
            .filter(|t| cl.checked_sub(t.cl) == Some(self.delta))
            .map(|t| t.msg.clone())
            .collect()
    }

    /// Output requests for every pending tuple (optionally of one owner)
    /// that reached the lock point this round.
    pub fn request_due(&mut self, ctx: &mut Ctx, owner: Option<usize>) -> Vec<FbcTuple> {
        let cl = ctx.round();
        let lag = self.delta - self.alpha;
        let due: Vec<String> = self
            .pend
            .iter()
            .filter(|t| t.cl + lag == cl && owner.is_none_or(|o| o == t.owner))
            .map(|t| t.tag.clone())
            .collect();
        due.iter().filter_map(|tag| self.output_request(ctx, tag)).collect()
    }

    /// Drops tuples that can no longer be delivered.
    pub fn prune(&mut self, cl: u64) {
        let d = self.delta;
        self.pend.retain(|t| t.cl + d >= cl);
        self.lock.retain(|t| t.cl + d >= cl);
    }
}

/// Wire encoding of the fair-broadcast pair (c, y).
pub fn encode_pair(c: &AstCiphertext, y: &[u8]) -> Vec<u8> {
    let cb = c.to_bytes();
    let mut out = Vec::with_capacity(4 + cb.len() + y.len());
    out.extend_from_slice(&(cb.len() as u32).to_be_bytes());
    out.extend_from_slice(&cb);
    out.extend_from_slice(y);
    out
}

pub fn decode_pair(bytes: &[u8]) -> Option<(AstCiphertext, Vec<u8>)> {
    let mut r = crate::astrolabous::Reader::new(bytes);
    let len = r.u32().ok()? as usize;
    let c = AstCiphertext::from_bytes(r.take(len).ok()?).ok()?;
    Some((c, r.rest().to_vec()))
}

/// Short identifier of a puzzle used to correlate trace events.
pub fn puzzle_id(c: &AstCiphertext) -> String {
    hx(&sha256(&[&c.to_bytes()])[..8])
}

#[derive(Clone, Debug)]
struct WaitEntry {
    c: AstCiphertext,
    y: Vec<u8>,
    received: u64,
    solver: ChainSolver,
}

#[derive(Clone, Debug)]
enum Queued {
    Own(usize, Vec<u8>),
    Plain(Vec<u8>),
    Raw(Vec<u8>),
    Replay(usize, usize),
}

struct Job {
    msg: Vec<u8>,
    rho: Digest,
    key: Digest,
    rs: Vec<Digest>,
}

/// The fair broadcast protocol: each message is masked with a random value
/// hidden in a two-round puzzle and sent over unfair broadcast.
pub struct FbcProtocol {
    ubc: IdealUbc,
    q: u32,
    pend: Vec<Vec<(usize, Vec<u8>)>>,
    wait: Vec<Vec<WaitEntry>>,
    inputs: Vec<usize>,
    overrides: BTreeMap<(usize, usize), Vec<u8>>,
    fresh: Vec<Vec<Queued>>,
    wire: Vec<Vec<Option<Vec<u8>>>>,
}

impl FbcProtocol {
    pub fn new(n: usize, q: u32) -> Self {
        Self {
            ubc: IdealUbc::new(),
            q,
            pend: vec![Vec::new(); n],
            wait: vec![Vec::new(); n],
            inputs: vec![0; n],
            overrides: BTreeMap::new(),
            fresh: vec![Vec::new(); n],
            wire: vec![Vec::new(); n],
        }
    }

    fn receive_all(&mut self, ctx: &mut Ctx, wire: &[u8]) {
        let cl = ctx.round();
        for p in 0..ctx.n {
            if ctx.is_corrupted(p) {
                continue;
            }
            match decode_pair(wire) {
                Some((c, y)) if c.tau_dec == 2 && c.q == self.q && c.check_shape().is_ok() => {
                    ctx.party_event(p, "fbc_receive", json!({ "id": puzzle_id(&c) }));
                    self.wait[p].push(WaitEntry {
                        c,
                        y,
                        received: cl,
                        solver: ChainSolver::new(),
                    });
                }
                _ => ctx.warn(Some(p), "malformed fair-broadcast ciphertext dropped"),
            }
        }
    }

    fn make_jobs(&self, ctx: &mut Ctx, msgs: Vec<Vec<u8>>) -> Vec<Job> {
        let l = 2 * self.q as usize;
        msgs.into_iter()
            .map(|msg| Job {
                msg,
                rho: ctx.random_block(),
                key: ctx.random_block(),
                rs: (0..l).map(|_| ctx.random_block()).collect(),
            })
            .collect()
    }

    /// Builds (c, y) for each job from the puzzle-generation answers.
    fn seal(&self, ctx: &mut Ctx, jobs: &[Job], hs: &[Digest], sender: Option<usize>) -> Vec<Vec<u8>> {
        let l = 2 * self.q as usize;
        let mut out = Vec::new();
        for (i, job) in jobs.iter().enumerate() {
            let c = AstCiphertext::assemble(2, self.q, &job.key, &job.rho, &job.rs, &hs[i * l..(i + 1) * l]);
            let eta = mask_expand(&mut ctx.oracle, &job.rho, job.msg.len());
            let y = xor_bytes(&job.msg, &eta);
            let payload = json!({ "id": puzzle_id(&c), "q": self.q, "steps": l, "honest": sender.is_some() });
            match sender {
                Some(p) => ctx.party_event(p, "fbc_emit", payload),
                None => ctx.adversary_event("fbc_emit", payload),
            }
            out.push(encode_pair(&c, &y));
        }
        out
    }

    fn honest_round_end(&mut self, ctx: &mut Ctx, p: usize) {
        let cl = ctx.round();
        let msgs: Vec<(usize, Vec<u8>)> = std::mem::take(&mut self.pend[p]);
        let jobs = self.make_jobs(ctx, msgs.iter().map(|(_, m)| m.clone()).collect());
        self.wait[p].retain(|e| e.received + 2 >= cl);
        let active: Vec<usize> = (0..self.wait[p].len())
            .filter(|&i| {
                let r = self.wait[p][i].received;
                r + 1 == cl || r + 2 == cl
            })
            .collect();
        let mut gen_hashes = Vec::new();
        if !jobs.is_empty() || !active.is_empty() {
            for j in 0..self.q {
                let mut batch: Vec<Vec<u8>> = Vec::new();
                if j == 0 {
                    batch.extend(jobs.iter().flat_map(|job| job.rs.iter().map(|r| r.to_vec())));
                }
                let gen = batch.len();
                for &i in &active {
                    let e = &self.wait[p][i];
                    if let Some(x) = e.solver.next_query(&e.c) {
                        batch.push(x.to_vec());
                    }
                }
                let answers = match ctx.evaluate(Caller::Party(p), &batch) {
                    Ok(a) => a,
                    Err(e) => {
                        ctx.party_event(p, "fault", json!({ "msg": e.to_string() }));
                        return;
                    }
                };
                gen_hashes.extend_from_slice(&answers[..gen]);
                let mut k = gen;
                for &i in &active {
                    let e = &mut self.wait[p][i];
                    if !e.solver.is_complete(&e.c) {
                        e.solver.absorb(answers[k]);
                        k += 1;
                    }
                }
            }
        }
        let wires = self.seal(ctx, &jobs, &gen_hashes, Some(p));
        for ((nth, _), w) in msgs.iter().zip(&wires) {
            let _ = self.ubc.broadcast(ctx, p, w);
            record(&mut self.wire[p], *nth, Some(w.clone()));
        }
        let mut ready = Vec::new();
        let (done, keep): (Vec<WaitEntry>, Vec<WaitEntry>) =
            std::mem::take(&mut self.wait[p]).into_iter().partition(|e| e.received + 2 == cl);
        self.wait[p] = keep;
        for e in done {
            if !e.solver.is_complete(&e.c) {
                ctx.party_event(p, "fault", json!({ "msg": "puzzle unsolved at its deadline" }));
                continue;
            }
            ctx.party_event(p, "witness_complete", json!({ "id": puzzle_id(&e.c), "calls": e.solver.done() }));
            let Ok(rho) = ast_dec(&e.c, &e.solver.witness()) else { continue };
            let eta = mask_expand(&mut ctx.oracle, &rho, e.y.len());
            ready.push(xor_bytes(&e.y, &eta));
        }
        ready.sort();
        for m in ready {
            ctx.output(p, json!({ "kind": "deliver", "msg": hx(&m) }));
        }
        for w in self.ubc.advance_clock(ctx, p) {
            self.receive_all(ctx, &w);
        }
    }
}

fn record<T: Clone + Default>(list: &mut Vec<T>, nth: usize, item: T) {
    if list.len() <= nth {
        list.resize(nth + 1, T::default());
    }
    list[nth] = item;
}

impl Stack for FbcProtocol {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_UBC".into()]
    }

    fn latency(&self) -> u64 {
        2
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        let Input::Broadcast { msg } = input else {
            ctx.warn(Some(party), &format!("input `{}` not understood by this stack", input.name()));
            return Ok(());
        };
        let nth = self.inputs[party];
        self.inputs[party] += 1;
        if ctx.is_corrupted(party) {
            self.fresh[party].push(Queued::Own(nth, msg.0.clone()));
        } else {
            self.pend[party].push((nth, msg.0.clone()));
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        self.honest_round_end(ctx, party);
        Ok(())
    }

    fn corrupt(&mut self, _ctx: &mut Ctx, party: usize) -> Value {
        json!({
            "pending": self.pend[party].iter().map(|(_, m)| hx(m)).collect::<Vec<_>>(),
            "waiting": self.wait[party].len(),
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
                if self.pend[p].iter().any(|(i, _)| i == nth) {
                    self.overrides.insert((p, *nth), msg.0.clone());
                } else {
                    ctx.warn(Some(p), "substitution target already sent");
                }
            }
            Action::Drop { nth, .. } => {
                if self.pend[p].iter().any(|(i, _)| i == nth) {
                    ctx.warn(Some(p), "a queued fair-broadcast message cannot be withdrawn");
                } else {
                    ctx.warn(Some(p), "drop target already sent");
                }
            }
            Action::Inject { msg, .. } => self.fresh[p].push(Queued::Plain(msg.0.clone())),
            Action::InjectRaw { payload, .. } => self.fresh[p].push(Queued::Raw(payload.0.clone())),
            Action::Replay { source, nth, .. } => self.fresh[p].push(Queued::Replay(*source, *nth)),
            Action::Equivocate { .. } => ctx.warn(Some(p), "equivocation is not expressible over unfair broadcast"),
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let corrupted: Vec<usize> = ctx.corrupted().iter().copied().collect();
        let mut plan: Vec<(usize, Option<usize>, Queued)> = Vec::new();
        for &p in &corrupted {
            for (nth, m) in std::mem::take(&mut self.pend[p]) {
                let m = self.overrides.remove(&(p, nth)).unwrap_or(m);
                plan.push((p, Some(nth), Queued::Plain(m)));
            }
            for q in std::mem::take(&mut self.fresh[p]) {
                match q {
                    Queued::Own(nth, m) => plan.push((p, Some(nth), Queued::Plain(m))),
                    other => plan.push((p, None, other)),
                }
            }
        }
        let plain: Vec<Vec<u8>> = plan
            .iter()
            .filter_map(|(_, _, q)| match q {
                Queued::Plain(m) => Some(m.clone()),
                _ => None,
            })
            .collect();
        let jobs = self.make_jobs(ctx, plain);
        let mut hs = Vec::new();
        if !jobs.is_empty() {
            let batch: Vec<Vec<u8>> = jobs.iter().flat_map(|j| j.rs.iter().map(|r| r.to_vec())).collect();
            match ctx.evaluate(Caller::Corrupted, &batch) {
                Ok(a) => hs = a,
                Err(e) => {
                    ctx.adversary_event("fault", json!({ "msg": e.to_string() }));
                    return Ok(());
                }
            }
        }
        let mut sealed = self.seal(ctx, &jobs, &hs, None).into_iter();
        for (p, nth, q) in plan {
            let w = match q {
                Queued::Plain(_) | Queued::Own(..) => sealed.next().expect("one sealed pair per plain message"),
                Queued::Raw(b) => b,
                Queued::Replay(s, k) => match self.wire[s].get(k).cloned().flatten() {
                    Some(w) => w,
                    None => {
                        ctx.warn(Some(p), "replay source not yet sent");
                        continue;
                    }
                },
            };
            if let Some(nth) = nth {
                record(&mut self.wire[p], nth, Some(w.clone()));
            }
            if let Err(w) = self.ubc.broadcast(ctx, p, &w) {
                self.receive_all(ctx, &w);
            }
        }
        Ok(())
    }
}

/// The ideal fair broadcast driven by the harness adversary.
///
/// Honest messages are locked at their sender's end of round (or at the
/// start of round Cl* + delta - alpha when that is later); corrupted
/// parties' queued messages are released at the end of the round.
pub struct FbcIdealStack {
    f: IdealFbc,
    tags: Vec<Vec<String>>,
    overrides: BTreeMap<String, Option<Vec<u8>>>,
    fresh: Vec<Vec<Queued>>,
    plain: Vec<Vec<Option<Vec<u8>>>>,
}

impl FbcIdealStack {
    pub fn new(n: usize, delta: u64, alpha: u64) -> Self {
        Self {
            f: IdealFbc::new(delta, alpha),
            tags: vec![Vec::new(); n],
            overrides: BTreeMap::new(),
            fresh: vec![Vec::new(); n],
            plain: vec![Vec::new(); n],
        }
    }

    fn lock_due(&mut self, ctx: &mut Ctx, owner: Option<usize>) {
        for t in self.f.request_due(ctx, owner) {
            if let Some(nth) = self.tags[t.owner].iter().position(|x| *x == t.tag) {
                record(&mut self.plain[t.owner], nth, Some(t.msg));
            }
        }
    }
}

impl Stack for FbcIdealStack {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_FBC".into()]
    }

    fn latency(&self) -> u64 {
        self.f.delta()
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        let Input::Broadcast { msg } = input else {
            ctx.warn(Some(party), &format!("input `{}` not understood by this stack", input.name()));
            return Ok(());
        };
        if ctx.is_corrupted(party) {
            self.fresh[party].push(Queued::Own(self.tags[party].len(), msg.0.clone()));
            self.tags[party].push(String::new());
        } else {
            let tag = self.f.broadcast(ctx, party, &msg.0);
            self.tags[party].push(tag);
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        if self.f.delta() == self.f.alpha() {
            self.lock_due(ctx, Some(party));
        }
        for m in self.f.advance_clock(ctx, party) {
            ctx.output(party, json!({ "kind": "deliver", "msg": hx(&m) }));
        }
        Ok(())
    }

    fn round_opening(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        if self.f.delta() > self.f.alpha() {
            self.lock_due(ctx, None);
        }
        let cl = ctx.round();
        self.f.prune(cl);
        Ok(())
    }

    fn corrupt(&mut self, ctx: &mut Ctx, party: usize) -> Value {
        let pend = self.f.corruption_request(ctx);
        json!({ "pending": pend.iter().filter(|t| t.owner == party).map(|t| hx(&t.msg)).collect::<Vec<_>>() })
    }

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError> {
        let p = action.party();
        if !ctx.is_corrupted(p) {
            ctx.warn(Some(p), "directive for an honest party ignored");
            return Ok(());
        }
        let cl = ctx.round();
        let open = |s: &Self, nth: usize| {
            s.tags[p]
                .get(nth)
                .filter(|t| s.f.is_pending(t) && s.f.tuple(t).is_some_and(|x| x.cl == cl))
                .cloned()
        };
        match action {
            Action::Substitute { nth, msg, .. } => match open(self, *nth) {
                Some(t) => {
                    self.overrides.insert(t, Some(msg.0.clone()));
                }
                None => ctx.warn(Some(p), "substitution target already sent"),
            },
            Action::Drop { nth, .. } => match open(self, *nth) {
                Some(t) => {
                    self.overrides.insert(t, None);
                }
                None => ctx.warn(Some(p), "drop target already sent"),
            },
            Action::Inject { msg, .. } => self.fresh[p].push(Queued::Plain(msg.0.clone())),
            Action::InjectRaw { payload, .. } => self.fresh[p].push(Queued::Raw(payload.0.clone())),
            Action::Replay { source, nth, .. } => self.fresh[p].push(Queued::Replay(*source, *nth)),
            Action::Equivocate { .. } => ctx.warn(Some(p), "equivocation is not expressible over unfair broadcast"),
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let cl = ctx.round();
        let corrupted: Vec<usize> = ctx.corrupted().iter().copied().collect();
        for p in corrupted {
            let open: Vec<(usize, String)> = self.tags[p]
                .iter()
                .enumerate()
                .filter(|(_, t)| self.f.is_pending(t) && self.f.tuple(t).is_some_and(|x| x.cl == cl))
                .map(|(i, t)| (i, t.clone()))
                .collect();
            for (nth, tag) in open {
                let current = self.f.tuple(&tag).map(|t| t.msg.clone()).unwrap_or_default();
                match self.overrides.remove(&tag) {
                    Some(None) => ctx.warn(Some(p), "a queued fair-broadcast message cannot be withdrawn"),
                    Some(Some(x)) => {
                        self.f.allow(ctx, &tag, &x, p);
                        record(&mut self.plain[p], nth, Some(x));
                    }
                    None => {
                        self.f.allow(ctx, &tag, &current, p);
                        record(&mut self.plain[p], nth, Some(current));
                    }
                }
            }
            for q in std::mem::take(&mut self.fresh[p]) {
                let (slot, m) = match q {
                    Queued::Own(nth, m) => (Some(nth), m),
                    Queued::Plain(m) => (None, m),
                    Queued::Raw(_) => continue,
                    Queued::Replay(s, k) => match self.plain[s].get(k).cloned().flatten() {
                        Some(m) => (None, m),
                        None => {
                            ctx.warn(Some(p), "replay source not yet sent");
                            continue;
                        }
                    },
                };
                let tag = self.f.broadcast(ctx, p, &m);
                self.f.allow(ctx, &tag, &m, p);
                if let Some(slot) = slot {
                    self.tags[p][slot] = tag;
                    record(&mut self.plain[p], slot, Some(m));
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

    fn ctx() -> Ctx {
        Ctx::new("t", 3, 5, 1, OracleMode::Concrete)
    }

    #[test]
    fn output_request_window() {
        let mut c = ctx();
        let mut f = IdealFbc::new(2, 2);
        let tag = f.broadcast(&mut c, 0, b"m");
        assert!(f.output_request(&mut c, &tag).is_some());
        assert!(f.is_locked(&tag));
        let mut f = IdealFbc::new(3, 1);
        let tag = f.broadcast(&mut c, 0, b"m");
        assert!(f.output_request(&mut c, &tag).is_none());
    }

    #[test]
    fn locked_message_survives_corruption() {
        let mut c = ctx();
        let mut f = IdealFbc::new(2, 2);
        let tag = f.broadcast(&mut c, 0, b"orig");
        f.output_request(&mut c, &tag);
        c.set_corrupted(0);
        assert!(!f.allow(&mut c, &tag, b"evil", 0));
        assert_eq!(f.tuple(&tag).unwrap().msg, b"orig");
    }

    #[test]
    fn pending_corrupted_message_replaced() {
        let mut c = ctx();
        let mut f = IdealFbc::new(2, 2);
        let tag = f.broadcast(&mut c, 0, b"orig");
        c.set_corrupted(0);
        assert!(f.allow(&mut c, &tag, b"evil", 0));
        assert_eq!(f.tuple(&tag).unwrap().msg, b"evil");
    }

    #[test]
    fn pair_encoding_roundtrip() {
        let mut c = ctx();
        let ct = crate::astrolabous::ast_enc(b"rho", 2, 1, &mut c.rng, &mut c.oracle);
        let w = encode_pair(&ct, b"yy");
        assert_eq!(decode_pair(&w), Some((ct, b"yy".to_vec())));
        assert_eq!(decode_pair(b"\x00\x00\x00\x09abc"), None);
    }
}
