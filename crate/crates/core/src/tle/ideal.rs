use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::{dec_output, decode_wire, enc_output, open_wire, retrieve_output, TleCiphertext};
use crate::error::SimError;
use crate::kernel::{hx, Action, CipherRef, Ctx, Input, Stack};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecResult {
    Msg(Vec<u8>),
    Bot,
    MoreTime,
    InvalidTime,
    Unresolved,
}

impl DecResult {
    pub fn label(&self) -> &'static str {
        match self {
            DecResult::Msg(_) => "msg",
            DecResult::Bot => "bot",
            DecResult::MoreTime => "more_time",
            DecResult::InvalidTime => "invalid_time",
            DecResult::Unresolved => "unresolved",
        }
    }
}

/// `(M, c, tau, tag, Cl, P)`; simulator registrations carry no tag or owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TleRecord {
    pub msg: Vec<u8>,
    pub c: Option<Vec<u8>>,
    pub tau: i64,
    pub tag: Option<String>,
    pub cl: u64,
    pub owner: Option<usize>,
}

/// The ideal time-lock encryption functionality with `leak(Cl) = Cl + alpha`
/// and a fixed `delay`.
#[derive(Clone, Debug)]
pub struct IdealTle {
    alpha: u64,
    delay: u64,
    q: u32,
    recs: Vec<TleRecord>,
}

impl IdealTle {
    pub fn new(alpha: u64, delay: u64, q: u32) -> Self {
        Self {
            alpha,
            delay,
            q,
            recs: Vec::new(),
        }
    }

    pub fn delay(&self) -> u64 {
        self.delay
    }

    pub fn alpha(&self) -> u64 {
        self.alpha
    }

    pub fn records(&self) -> &[TleRecord] {
        &self.recs
    }

    /// Returns the record index, or `None` for a negative deadline.
    pub fn enc(&mut self, ctx: &mut Ctx, from: usize, msg: &[u8], tau: i64) -> Option<usize> {
        if tau < 0 {
            return None;
        }
        let tag = ctx.tag();
        let cl = ctx.round();
        self.recs.push(TleRecord {
            msg: msg.to_vec(),
            c: None,
            tau,
            tag: Some(tag.clone()),
            cl,
            owner: Some(from),
        });
        ctx.leak(
            "F_TLE",
            json!({ "event": "enc", "tau": tau, "tag": tag, "cl": cl, "msg": hx(&vec![0u8; msg.len()]), "party": from }),
        );
        Some(self.recs.len() - 1)
    }

    /// Simulator update binding a ciphertext to a tagged record.
    pub fn update_cipher(&mut self, tag: &str, c: Vec<u8>) {
        if let Some(r) = self.recs.iter_mut().find(|r| r.tag.as_deref() == Some(tag) && r.c.is_none()) {
            r.c = Some(c);
        }
    }

    /// Simulator update registering an adversarial `(c, M, tau)`.
    pub fn register(&mut self, c: Vec<u8>, msg: Vec<u8>, tau: i64) -> usize {
        self.recs.push(TleRecord {
            msg,
            c: Some(c),
            tau,
            tag: None,
            cl: 0,
            owner: None,
        });
        self.recs.len() - 1
    }

    fn cipher_len(&self, r: &TleRecord) -> usize {
        let tau_dec = (r.tau - (r.cl + self.delay) as i64).max(0) as u32;
        TleCiphertext::encoded_len(r.msg.len(), tau_dec, self.q)
    }

    /// The ciphertext of record `i` once it is old enough to be handed out,
    /// sampling one if none was bound yet.
    pub fn reveal(&mut self, ctx: &mut Ctx, i: usize) -> Option<Vec<u8>> {
        let cl = ctx.round();
        let r = self.recs.get(i)?;
        if r.owner.is_some() && cl < r.cl + self.delay {
            return None;
        }
        if r.c.is_none() {
            let len = self.cipher_len(r);
            self.recs[i].c = Some(ctx.random_bytes(len));
        }
        self.recs[i].c.clone()
    }

    pub fn retrieve(&mut self, ctx: &mut Ctx, from: usize) -> Vec<(Vec<u8>, Vec<u8>, i64)> {
        let mine: Vec<usize> = (0..self.recs.len()).filter(|&i| self.recs[i].owner == Some(from)).collect();
        mine.into_iter()
            .filter_map(|i| {
                let c = self.reveal(ctx, i)?;
                Some((self.recs[i].msg.clone(), c, self.recs[i].tau))
            })
            .collect()
    }

    /// Decryption. `sim` answers for ciphertexts with no record.
    pub fn dec<F>(&mut self, ctx: &mut Ctx, c: &[u8], tau: i64, sim: F) -> DecResult
    where
        F: FnOnce(&mut Ctx, &[u8], i64) -> Option<Vec<u8>>,
    {
        if tau < 0 {
            return DecResult::Bot;
        }
        let cl = ctx.round() as i64;
        if cl < tau {
            return DecResult::MoreTime;
        }
        let hits: Vec<&TleRecord> = self.recs.iter().filter(|r| r.c.as_deref() == Some(c)).collect();
        if hits.iter().any(|r| r.msg != hits[0].msg) {
            return DecResult::Bot;
        }
        let Some(r) = hits.first() else {
            ctx.leak("F_TLE", json!({ "event": "dec", "c": hx(c), "tau": tau }));
            return match sim(ctx, c, tau) {
                Some(m) => {
                    self.register(c.to_vec(), m.clone(), tau);
                    DecResult::Msg(m)
                }
                None => DecResult::Bot,
            };
        };
        let tau_dec = hits.iter().map(|r| r.tau).min().unwrap_or(r.tau);
        if tau >= tau_dec {
            DecResult::Msg(r.msg.clone())
        } else if cl < tau_dec {
            DecResult::MoreTime
        } else {
            DecResult::InvalidTime
        }
    }

    /// Records with `tau <= Cl + alpha`, plus every record of a corrupted
    /// party.
    pub fn leakage(&self, ctx: &Ctx) -> Vec<(usize, &TleRecord)> {
        let horizon = (ctx.round() + self.alpha) as i64;
        self.recs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.tau <= horizon || r.owner.is_some_and(|p| ctx.is_corrupted(p)))
            .collect()
    }
}

#[derive(Clone, Debug)]
enum Slot {
    None,
    Deferred { msg: Vec<u8>, tau: i64 },
    Func(usize),
    Sim { msg: Vec<u8>, tau: i64, cl: u64, reg: Option<usize>, dropped: bool },
}

/// The ideal time-lock encryption with delay `delta + 1` and leakage
/// `Cl + alpha`, driven by the harness adversary.
pub struct TleIdealStack {
    f: IdealTle,
    delta: u64,
    slots: Vec<Vec<Slot>>,
    advanced: Vec<Option<u64>>,
    wire: BTreeSet<Vec<u8>>,
    raw: Vec<(usize, Vec<u8>)>,
    leaked: BTreeSet<usize>,
    substitutes: BTreeMap<(usize, usize), Option<Vec<u8>>>,
}

impl TleIdealStack {
    pub fn new(n: usize, delta: u64, alpha: u64, q: u32) -> Self {
        Self {
            f: IdealTle::new(alpha, delta + 1, q),
            delta,
            slots: vec![Vec::new(); n],
            advanced: vec![None; n],
            wire: BTreeSet::new(),
            raw: Vec::new(),
            leaked: BTreeSet::new(),
            substitutes: BTreeMap::new(),
        }
    }

    pub fn functionality(&self) -> &IdealTle {
        &self.f
    }

    fn resolve(&mut self, ctx: &mut Ctx, cipher: &CipherRef) -> Option<Vec<u8>> {
        match cipher {
            CipherRef::Raw(b) => Some(b.0.clone()),
            CipherRef::Retrieved { party, nth } => match self.slots.get(*party)?.get(*nth)? {
                Slot::Func(i) => self.f.reveal(ctx, *i),
                Slot::Sim { reg: Some(i), cl, .. } if ctx.round() > cl + self.delta => {
                    self.f.records()[*i].c.clone()
                }
                _ => None,
            },
        }
    }

    fn emit_leakage(&mut self, ctx: &mut Ctx) {
        let fresh: Vec<Value> = self
            .f
            .leakage(ctx)
            .into_iter()
            .filter(|(i, _)| !self.leaked.contains(i))
            .map(|(i, r)| json!({ "index": i, "msg": hx(&r.msg), "tau": r.tau, "party": r.owner }))
            .collect();
        if fresh.is_empty() {
            return;
        }
        for v in &fresh {
            self.leaked.insert(v["index"].as_u64().unwrap_or_default() as usize);
        }
        ctx.leak("F_TLE", json!({ "event": "leakage", "records": fresh }));
    }
}

impl Stack for TleIdealStack {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_TLE".into()]
    }

    fn latency(&self) -> u64 {
        self.delta + 1
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        let cl = ctx.round();
        match input {
            Input::Enc { msg, tau } => {
                let corrupted = ctx.is_corrupted(party);
                let late = !corrupted && self.advanced[party] == Some(cl);
                let ecl = if late { cl + 1 } else { cl };
                let slot = if *tau < 0 {
                    ctx.output(party, enc_output("bot"));
                    Slot::None
                } else if *tau - (ecl + self.delta + 1) as i64 <= 0 {
                    ctx.output(party, enc_output("rejected"));
                    Slot::None
                } else {
                    ctx.output(party, enc_output("encrypting"));
                    if corrupted {
                        Slot::Sim { msg: msg.0.clone(), tau: *tau, cl, reg: None, dropped: false }
                    } else if late {
                        Slot::Deferred { msg: msg.0.clone(), tau: *tau }
                    } else {
                        let i = self.f.enc(ctx, party, &msg.0, *tau).expect("deadline is non-negative");
                        Slot::Func(i)
                    }
                };
                self.slots[party].push(slot);
            }
            Input::Retrieve => {
                let recs = self.f.retrieve(ctx, party);
                ctx.output(party, retrieve_output(&recs));
            }
            Input::Dec { cipher, tau } => {
                let res = match self.resolve(ctx, cipher) {
                    None => DecResult::Unresolved,
                    Some(c) => {
                        let seen = self.wire.contains(&c);
                        self.f.dec(ctx, &c, *tau, |ctx, c, _| if seen { open_wire(&mut ctx.oracle, c) } else { None })
                    }
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
        Ok(())
    }

    fn round_opening(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let cl = ctx.round();
        for p in 0..self.slots.len() {
            for k in 0..self.slots[p].len() {
                if let Slot::Deferred { msg, tau } = self.slots[p][k].clone() {
                    self.slots[p][k] = if ctx.is_corrupted(p) {
                        Slot::Sim { msg, tau, cl, reg: None, dropped: false }
                    } else {
                        Slot::Func(self.f.enc(ctx, p, &msg, tau).expect("deadline is non-negative"))
                    };
                }
            }
        }
        self.emit_leakage(ctx);
        Ok(())
    }

    fn corrupt(&mut self, ctx: &mut Ctx, party: usize) -> Value {
        let recs: Vec<Value> = self
            .f
            .leakage(ctx)
            .into_iter()
            .filter(|(_, r)| r.owner == Some(party))
            .map(|(_, r)| json!({ "msg": hx(&r.msg), "tau": r.tau }))
            .collect();
        json!({ "records": recs })
    }

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError> {
        let p = action.party();
        if !ctx.is_corrupted(p) {
            ctx.warn(Some(p), "directive for an honest party ignored");
            return Ok(());
        }
        let cl = ctx.round();
        let open = |s: &Self, nth: usize| matches!(s.slots[p].get(nth), Some(Slot::Sim { reg: None, cl: c, .. }) if *c == cl);
        match action {
            Action::Substitute { nth, msg, .. } => {
                if open(self, *nth) {
                    self.substitutes.insert((p, *nth), Some(msg.0.clone()));
                } else {
                    ctx.warn(Some(p), "substitution target is not an open adversarial encryption");
                }
            }
            Action::Drop { nth, .. } => {
                if open(self, *nth) {
                    self.substitutes.insert((p, *nth), None);
                } else {
                    ctx.warn(Some(p), "drop target is not an open adversarial encryption");
                }
            }
            Action::InjectRaw { payload, .. } => self.raw.push((p, payload.0.clone())),
            Action::Replay { .. } => {}
            Action::Inject { .. } | Action::Equivocate { .. } => {
                ctx.warn(Some(p), "directive not expressible for time-lock encryption")
            }
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let cl = ctx.round();
        let q = ctx.q();
        for p in 0..self.slots.len() {
            for k in 0..self.slots[p].len() {
                let Slot::Sim { msg, tau, cl: c, reg: None, dropped: false } = self.slots[p][k].clone() else {
                    continue;
                };
                if c != cl {
                    continue;
                }
                let msg = match self.substitutes.remove(&(p, k)) {
                    Some(None) => {
                        self.slots[p][k] = Slot::Sim { msg, tau, cl: c, reg: None, dropped: true };
                        continue;
                    }
                    Some(Some(m)) => m,
                    None => msg,
                };
                let tau_dec = (tau - (c + self.delta + 1) as i64) as u32;
                let bytes = ctx.random_bytes(TleCiphertext::encoded_len(msg.len(), tau_dec, q));
                let i = self.f.register(bytes, msg.clone(), tau);
                self.slots[p][k] = Slot::Sim { msg, tau, cl: c, reg: Some(i), dropped: false };
            }
        }
        for (p, payload) in std::mem::take(&mut self.raw) {
            let Some((c, tau)) = decode_wire(&payload) else {
                ctx.warn(Some(p), "malformed time-lock broadcast");
                continue;
            };
            self.wire.insert(c.clone());
            if let Some(m) = open_wire(&mut ctx.oracle, &c) {
                self.f.register(c, m, tau);
            }
        }
        Ok(())
    }
}
