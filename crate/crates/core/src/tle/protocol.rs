use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::{dec_output, decode_wire, enc_output, encode_wire, open, retrieve_output, seal, DecResult, TleCiphertext};
use crate::astrolabous::{AstCiphertext, ChainSolver};
use crate::broadcast::{puzzle_id, IdealFbc};
use crate::crypto::{Caller, Digest};
use crate::error::SimError;
use crate::kernel::{hx, Action, CipherRef, Ctx, Input, Stack};

#[derive(Clone, Debug, Default)]
struct Rec {
    msg: Vec<u8>,
    tau: i64,
    cl: u64,
    c: Option<Vec<u8>>,
    wire: Option<Vec<u8>>,
    live: bool,
    adversarial: bool,
    dropped: bool,
}

#[derive(Clone, Debug)]
struct Puzzle {
    c: Vec<u8>,
    ct: TleCiphertext,
    tau: i64,
    solver: ChainSolver,
    t: u32,
}

struct Job {
    msg: Vec<u8>,
    tau: i64,
    tau_dec: u32,
    rho: Digest,
    key: Digest,
    rs: Vec<Digest>,
}

/// Time-lock encryption over fair broadcast: ciphertexts are produced in
/// the sender's end-of-round pass, broadcast, and every receiver spends its
/// per-round oracle budget unrolling the puzzles it holds.
pub struct TleProtocol {
    fbc: IdealFbc,
    q: u32,
    recs: Vec<Vec<Rec>>,
    puzzles: Vec<Vec<Puzzle>>,
    advanced: Vec<Option<u64>>,
    overrides: BTreeMap<(usize, usize), Option<Vec<u8>>>,
    fresh: Vec<(usize, Vec<u8>)>,
}

impl TleProtocol {
    pub fn new(n: usize, delta: u64, alpha: u64, q: u32) -> Self {
        Self {
            fbc: IdealFbc::new(delta, alpha),
            q,
            recs: vec![Vec::new(); n],
            puzzles: vec![Vec::new(); n],
            advanced: vec![None; n],
            overrides: BTreeMap::new(),
            fresh: Vec::new(),
        }
    }

    fn delta(&self) -> u64 {
        self.fbc.delta()
    }

    fn receive(&mut self, ctx: &mut Ctx, p: usize, wire: &[u8]) {
        let parsed = decode_wire(wire).and_then(|(c, tau)| {
            let ct = TleCiphertext::from_bytes(&c).ok()?;
            (ct.c1.q == self.q).then_some((c, ct, tau))
        });
        let Some((c, ct, tau)) = parsed else {
            ctx.warn(Some(p), "malformed time-lock ciphertext dropped");
            return;
        };
        let id = puzzle_id(&ct.c1);
        ctx.party_event(p, "tle_receive", json!({ "id": id, "tau": tau, "tau_dec": ct.c1.tau_dec }));
        let t = ct.c1.tau_dec;
        if t == 0 {
            ctx.party_event(p, "witness_complete", json!({ "id": id, "calls": 0 }));
        }
        self.puzzles[p].push(Puzzle {
            c,
            ct,
            tau,
            solver: ChainSolver::new(),
            t,
        });
    }

    fn make_jobs(&self, ctx: &mut Ctx, recs: &[(Vec<u8>, i64, u64)]) -> Vec<Job> {
        let d = self.delta();
        recs.iter()
            .map(|(msg, tau, cl)| {
                let tau_dec = (*tau - (cl + d + 1) as i64) as u32;
                let l = tau_dec as usize * self.q as usize;
                Job {
                    msg: msg.clone(),
                    tau: *tau,
                    tau_dec,
                    rho: ctx.random_block(),
                    key: ctx.random_block(),
                    rs: (0..l).map(|_| ctx.random_block()).collect(),
                }
            })
            .collect()
    }

    fn build(&self, ctx: &mut Ctx, jobs: &[Job], hs: &[Digest], sender: Option<usize>) -> Vec<(Vec<u8>, Vec<u8>)> {
        let mut at = 0;
        let mut out = Vec::new();
        for job in jobs {
            let l = job.rs.len();
            let c1 = AstCiphertext::assemble(job.tau_dec, self.q, &job.key, &job.rho, &job.rs, &hs[at..at + l]);
            at += l;
            let id = puzzle_id(&c1);
            let c = seal(&mut ctx.oracle, c1, &job.rho, &job.msg).to_bytes();
            let payload = json!({ "id": id, "tau": job.tau, "tau_dec": job.tau_dec, "q": self.q, "steps": l,
                                  "honest": sender.is_some() });
            match sender {
                Some(p) => ctx.party_event(p, "tle_emit", payload),
                None => ctx.adversary_event("tle_emit", payload),
            }
            let wire = encode_wire(&c, job.tau);
            out.push((c, wire));
        }
        out
    }

    /// The combined encrypt-and-solve pass of one honest party.
    fn encrypt_and_solve(&mut self, ctx: &mut Ctx, p: usize) {
        let cl = ctx.round();
        let new: Vec<usize> = (0..self.recs[p].len())
            .filter(|&k| {
                let r = &self.recs[p][k];
                r.live && r.c.is_none() && r.cl == cl
            })
            .collect();
        let spec: Vec<(Vec<u8>, i64, u64)> = new.iter().map(|&k| {
            let r = &self.recs[p][k];
            (r.msg.clone(), r.tau, r.cl)
        }).collect();
        let jobs = self.make_jobs(ctx, &spec);
        let active: Vec<usize> = (0..self.puzzles[p].len()).filter(|&i| self.puzzles[p][i].t > 0).collect();
        let mut gen = Vec::new();
        if !jobs.is_empty() || !active.is_empty() {
            for j in 0..self.q {
                let mut batch: Vec<Vec<u8>> = Vec::new();
                if j == 0 {
                    batch.extend(jobs.iter().flat_map(|job| job.rs.iter().map(|r| r.to_vec())));
                }
                let g = batch.len();
                for &i in &active {
                    let z = &self.puzzles[p][i];
                    if let Some(x) = z.solver.next_query(&z.ct.c1) {
                        batch.push(x.to_vec());
                    }
                }
                if batch.is_empty() {
                    continue;
                }
                let answers = match ctx.evaluate(Caller::Party(p), &batch) {
                    Ok(a) => a,
                    Err(e) => {
                        ctx.party_event(p, "fault", json!({ "msg": e.to_string() }));
                        return;
                    }
                };
                gen.extend_from_slice(&answers[..g]);
                let mut k = g;
                for &i in &active {
                    let z = &mut self.puzzles[p][i];
                    if !z.solver.is_complete(&z.ct.c1) {
                        z.solver.absorb(answers[k]);
                        k += 1;
                    }
                }
            }
            for &i in &active {
                let z = &mut self.puzzles[p][i];
                z.t -= 1;
                if z.t == 0 {
                    let payload = json!({ "id": puzzle_id(&z.ct.c1), "calls": z.solver.done() });
                    ctx.party_event(p, "witness_complete", payload);
                }
            }
        }
        let built = self.build(ctx, &jobs, &gen, Some(p));
        for (&k, (c, wire)) in new.iter().zip(built) {
            self.fbc.broadcast(ctx, p, &wire);
            let r = &mut self.recs[p][k];
            r.c = Some(c);
            r.wire = Some(wire);
        }
    }

    fn resolve(&self, ctx: &Ctx, cipher: &CipherRef) -> Option<Vec<u8>> {
        match cipher {
            CipherRef::Raw(b) => Some(b.0.clone()),
            CipherRef::Retrieved { party, nth } => {
                let r = self.recs.get(*party)?.get(*nth)?;
                if r.wire.is_some() && ctx.round() > r.cl + self.delta() {
                    r.c.clone()
                } else {
                    None
                }
            }
        }
    }

    fn dec(&mut self, ctx: &mut Ctx, p: usize, c: &[u8], tau: i64) -> DecResult {
        if tau < 0 {
            return DecResult::Bot;
        }
        let cl = ctx.round() as i64;
        if cl < tau {
            return DecResult::MoreTime;
        }
        let Some(z) = self.puzzles[p].iter().find(|z| z.c == c && z.t == 0) else {
            return DecResult::Bot;
        };
        if tau < z.tau && z.tau <= cl {
            return DecResult::InvalidTime;
        }
        match open(&mut ctx.oracle, &z.ct, &z.solver.witness()) {
            Some(m) => DecResult::Msg(m),
            None => DecResult::Bot,
        }
    }
}

impl Stack for TleProtocol {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_FBC".into()]
    }

    fn latency(&self) -> u64 {
        self.delta() + 1
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        let cl = ctx.round();
        match input {
            Input::Enc { msg, tau } => {
                let adversarial = ctx.is_corrupted(party);
                let ecl = if !adversarial && self.advanced[party] == Some(cl) { cl + 1 } else { cl };
                let mut rec = Rec {
                    msg: msg.0.clone(),
                    tau: *tau,
                    cl: ecl,
                    adversarial,
                    ..Rec::default()
                };
                if *tau < 0 {
                    ctx.output(party, enc_output("bot"));
                } else if *tau - (ecl + self.delta() + 1) as i64 <= 0 {
                    ctx.party_event(party, "tle_rejected", json!({ "tau": tau, "cl": ecl }));
                    ctx.output(party, enc_output("rejected"));
                } else {
                    rec.live = true;
                    ctx.output(party, enc_output("encrypting"));
                }
                self.recs[party].push(rec);
            }
            Input::Retrieve => {
                let d = self.delta();
                let recs: Vec<(Vec<u8>, Vec<u8>, i64)> = self.recs[party]
                    .iter()
                    .filter(|r| r.wire.is_some() && cl > r.cl + d)
                    .map(|r| (r.msg.clone(), r.c.clone().unwrap_or_default(), r.tau))
                    .collect();
                ctx.output(party, retrieve_output(&recs));
            }
            Input::Dec { cipher, tau } => {
                let res = match self.resolve(ctx, cipher) {
                    None => DecResult::Unresolved,
                    Some(c) => self.dec(ctx, party, &c, *tau),
                };
                let cref = serde_json::to_value(cipher).expect("cipher references serialize");
                ctx.output(party, dec_output(cref, *tau, &res));
            }
            other => ctx.warn(Some(party), &format!("input `{}` not understood by this stack", other.name())),
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        self.advanced[party] = Some(ctx.round());
        for w in self.fbc.advance_clock(ctx, party) {
            self.receive(ctx, party, &w);
        }
        self.encrypt_and_solve(ctx, party);
        if self.fbc.delta() == self.fbc.alpha() {
            self.fbc.request_due(ctx, Some(party));
        }
        Ok(())
    }

    fn round_opening(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        if self.fbc.delta() > self.fbc.alpha() {
            self.fbc.request_due(ctx, None);
        }
        let cl = ctx.round();
        self.fbc.prune(cl);
        Ok(())
    }

    fn corrupt(&mut self, _ctx: &mut Ctx, party: usize) -> Value {
        json!({
            "records": self.recs[party].iter().filter(|r| r.live).map(|r| json!({ "msg": hx(&r.msg), "tau": r.tau })).collect::<Vec<_>>(),
            "puzzles": self.puzzles[party].len(),
        })
    }

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError> {
        let p = action.party();
        if !ctx.is_corrupted(p) {
            ctx.warn(Some(p), "directive for an honest party ignored");
            return Ok(());
        }
        let cl = ctx.round();
        let open = |s: &Self, nth: usize| {
            s.recs[p].get(nth).is_some_and(|r| r.adversarial && r.live && r.c.is_none() && !r.dropped && r.cl == cl)
        };
        match action {
            Action::Substitute { nth, msg, .. } => {
                if open(self, *nth) {
                    self.overrides.insert((p, *nth), Some(msg.0.clone()));
                } else {
                    ctx.warn(Some(p), "substitution target is not an open adversarial encryption");
                }
            }
            Action::Drop { nth, .. } => {
                if open(self, *nth) {
                    self.overrides.insert((p, *nth), None);
                } else {
                    ctx.warn(Some(p), "drop target is not an open adversarial encryption");
                }
            }
            Action::InjectRaw { payload, .. } => self.fresh.push((p, payload.0.clone())),
            Action::Replay { source, nth, .. } => match self.recs[*source].get(*nth).and_then(|r| r.wire.clone()) {
                Some(w) => self.fresh.push((p, w)),
                None => ctx.warn(Some(p), "replay source not yet sent"),
            },
            Action::Inject { .. } | Action::Equivocate { .. } => {
                ctx.warn(Some(p), "directive not expressible for time-lock encryption")
            }
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let cl = ctx.round();
        let corrupted: Vec<usize> = ctx.corrupted().iter().copied().collect();
        let mut slots = Vec::new();
        let mut spec = Vec::new();
        for &p in &corrupted {
            for k in 0..self.recs[p].len() {
                let r = &self.recs[p][k];
                if !r.live || r.c.is_some() || r.dropped || r.cl != cl {
                    continue;
                }
                let msg = match self.overrides.remove(&(p, k)) {
                    Some(None) => {
                        self.recs[p][k].dropped = true;
                        continue;
                    }
                    Some(Some(m)) => {
                        self.recs[p][k].msg = m.clone();
                        m
                    }
                    None => r.msg.clone(),
                };
                slots.push((p, k));
                spec.push((msg, self.recs[p][k].tau, cl));
            }
        }
        let jobs = self.make_jobs(ctx, &spec);
        let batch: Vec<Vec<u8>> = jobs.iter().flat_map(|j| j.rs.iter().map(|r| r.to_vec())).collect();
        let mut hs = Vec::new();
        if !batch.is_empty() {
            match ctx.evaluate(Caller::Corrupted, &batch) {
                Ok(a) => hs = a,
                Err(e) => {
                    ctx.adversary_event("fault", json!({ "msg": e.to_string() }));
                    return Ok(());
                }
            }
        }
        let built = self.build(ctx, &jobs, &hs, None);
        let mut out: Vec<(usize, Vec<u8>)> = Vec::new();
        for ((p, k), (c, wire)) in slots.into_iter().zip(built) {
            let r = &mut self.recs[p][k];
            r.c = Some(c);
            r.wire = Some(wire.clone());
            out.push((p, wire));
        }
        out.extend(std::mem::take(&mut self.fresh));
        for (p, wire) in out {
            let tag = self.fbc.broadcast(ctx, p, &wire);
            self.fbc.allow(ctx, &tag, &wire, p);
        }
        Ok(())
    }
}
