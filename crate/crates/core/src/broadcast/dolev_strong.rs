use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde_json::json;

use super::rbc::{InstanceId, RbcBackend, RbcOut};
use crate::crypto::CertAuthority;
use crate::kernel::{hx, Ctx};

/// Full identity of a Dolev-Strong run: sender, sender index, start round.
pub type DsKey = (usize, u64, u64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignChain {
    pub key: DsKey,
    pub msg: Vec<u8>,
    pub sigs: Vec<(usize, Vec<u8>)>,
}

/// Bytes covered by the signature of the next signer after `prior`.
pub fn signed_content(key: DsKey, msg: &[u8], prior: &[(usize, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + msg.len() + prior.len() * 68);
    out.extend_from_slice(b"ds");
    out.extend_from_slice(&(key.0 as u32).to_be_bytes());
    out.extend_from_slice(&key.1.to_be_bytes());
    out.extend_from_slice(&key.2.to_be_bytes());
    out.extend_from_slice(&(msg.len() as u32).to_be_bytes());
    out.extend_from_slice(msg);
    for (s, sig) in prior {
        out.extend_from_slice(&(*s as u32).to_be_bytes());
        out.extend_from_slice(sig);
    }
    out
}

#[derive(Clone, Debug, Default)]
struct View {
    accepted: Vec<Vec<u8>>,
    decided: bool,
}

/// Signature-chain broadcast running `t + 1` rounds per instance. Messages
/// sent during round r are processed by their recipients at the end of
/// round r + 1; the decision is taken at the end of round start + t + 1.
pub struct DolevStrongPool {
    n: usize,
    t: u64,
    certs: CertAuthority,
    pending: BTreeMap<InstanceId, Vec<u8>>,
    order: BTreeMap<DsKey, u64>,
    inbox: BTreeMap<usize, Vec<(u64, SignChain)>>,
    views: BTreeMap<(usize, DsKey), View>,
    defaults: u64,
}

impl DolevStrongPool {
    pub fn new<R: RngCore>(n: usize, t_plus_one: u64, rng: &mut R) -> Self {
        assert!(t_plus_one >= 1);
        let seeds = (0..n)
            .map(|_| {
                let mut s = [0u8; 32];
                rng.fill_bytes(&mut s);
                s
            })
            .collect();
        Self {
            n,
            t: t_plus_one - 1,
            certs: CertAuthority::new(seeds),
            pending: BTreeMap::new(),
            order: BTreeMap::new(),
            inbox: BTreeMap::new(),
            views: BTreeMap::new(),
            defaults: 0,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Number of default decisions taken so far.
    pub fn defaults(&self) -> u64 {
        self.defaults
    }

    fn note_order(&mut self, key: DsKey) {
        let next = self.order.len() as u64;
        self.order.entry(key).or_insert(next);
    }

    /// Appends `signer`'s signature to `chain`. Used by honest relays and by
    /// the adversary for corrupted signers.
    pub fn sign_extend(&mut self, signer: usize, chain: &SignChain) -> Option<SignChain> {
        let content = signed_content(chain.key, &chain.msg, &chain.sigs);
        let sig = self.certs.sign(signer, &content)?;
        let mut c = chain.clone();
        c.sigs.push((signer, sig));
        Some(c)
    }

    /// Queues `chain` for `to`, as sent in the current round.
    pub fn send(&mut self, ctx: &mut Ctx, from: usize, to: usize, chain: &SignChain) {
        self.note_order(chain.key);
        ctx.leak(
            "DS",
            json!({ "event": "send", "from": from, "to": to, "sender": chain.key.0, "index": chain.key.1,
                    "start": chain.key.2, "msg": hx(&chain.msg), "sigs": chain.sigs.len() }),
        );
        let r = ctx.round();
        self.inbox.entry(to).or_default().push((r, chain.clone()));
    }

    fn send_all(&mut self, ctx: &mut Ctx, from: usize, chain: &SignChain, recipients: &[usize]) {
        for &to in recipients {
            if to != from {
                self.send(ctx, from, to, chain);
            }
        }
    }

    fn start(&mut self, ctx: &mut Ctx, inst: InstanceId, msg: &[u8], recipients: &[usize]) {
        let key = (inst.0, inst.1, ctx.round());
        let base = SignChain {
            key,
            msg: msg.to_vec(),
            sigs: Vec::new(),
        };
        let Some(chain) = self.sign_extend(inst.0, &base) else {
            ctx.warn(Some(inst.0), "signing instance halted");
            return;
        };
        self.note_order(key);
        self.views.entry((inst.0, key)).or_default().accepted = vec![msg.to_vec()];
        self.send_all(ctx, inst.0, &chain, recipients);
    }

    fn valid(&mut self, ctx: &Ctx, chain: &SignChain, needed: usize) -> bool {
        if chain.sigs.len() < needed || chain.sigs.first().map(|s| s.0) != Some(chain.key.0) {
            return false;
        }
        let mut seen = BTreeSet::new();
        for (i, (signer, sig)) in chain.sigs.iter().enumerate() {
            if *signer >= self.n || !seen.insert(*signer) {
                return false;
            }
            let content = signed_content(chain.key, &chain.msg, &chain.sigs[..i]);
            if !self.certs.verify(*signer, &content, sig, ctx.is_corrupted(*signer)) {
                return false;
            }
        }
        true
    }

    /// Processes `party`'s arrivals for the current round and takes due decisions.
    pub fn process(&mut self, ctx: &mut Ctx, party: usize) -> Vec<RbcOut> {
        let cl = ctx.round();
        let arrivals: Vec<SignChain> = {
            let q = self.inbox.entry(party).or_default();
            let (now, later): (Vec<_>, Vec<_>) = q.drain(..).partition(|(sent, _)| *sent + 1 == cl);
            *q = later.into_iter().filter(|(sent, _)| *sent + 1 > cl).collect();
            now.into_iter().map(|(_, c)| c).collect()
        };
        let everyone: Vec<usize> = (0..self.n).collect();
        for chain in arrivals {
            let start = chain.key.2;
            if start >= cl || cl - start > self.t + 1 {
                continue;
            }
            let k = (cl - start) as usize;
            if !self.valid(ctx, &chain, k) {
                ctx.party_event(party, "ds_invalid_chain", json!({ "sender": chain.key.0, "index": chain.key.1 }));
                continue;
            }
            self.note_order(chain.key);
            let view = self.views.entry((party, chain.key)).or_default();
            if view.decided || view.accepted.len() >= 2 || view.accepted.contains(&chain.msg) {
                continue;
            }
            view.accepted.push(chain.msg.clone());
            if (k as u64) <= self.t && !chain.sigs.iter().any(|s| s.0 == party) {
                if let Some(ext) = self.sign_extend(party, &chain) {
                    self.send_all(ctx, party, &ext, &everyone);
                }
            }
        }
        let mut due: Vec<(u64, DsKey)> = self
            .views
            .iter()
            .filter(|((p, key), v)| *p == party && !v.decided && key.2 + self.t + 1 == cl)
            .map(|((_, key), _)| (self.order.get(key).copied().unwrap_or(u64::MAX), *key))
            .collect();
        due.sort();
        let mut out = Vec::new();
        for (_, key) in due {
            let v = self.views.get_mut(&(party, key)).expect("view exists");
            v.decided = true;
            if v.accepted.len() == 1 {
                out.push(RbcOut {
                    to: vec![party],
                    inst: (key.0, key.1),
                    msg: v.accepted[0].clone(),
                });
            } else {
                self.defaults += 1;
                ctx.party_event(
                    party,
                    "rbc_default",
                    json!({ "sender": key.0, "index": key.1, "values": v.accepted.len() }),
                );
            }
        }
        out
    }
}

impl RbcBackend for DolevStrongPool {
    fn name(&self) -> String {
        "F_CERT".into()
    }

    fn latency(&self) -> u64 {
        self.t + 1
    }

    fn submit(&mut self, ctx: &mut Ctx, inst: InstanceId, msg: &[u8]) -> Vec<RbcOut> {
        if ctx.is_corrupted(inst.0) {
            let all: Vec<usize> = (0..self.n).collect();
            self.start(ctx, inst, msg, &all);
        } else {
            self.pending.insert(inst, msg.to_vec());
        }
        Vec::new()
    }

    fn trigger(&mut self, ctx: &mut Ctx, inst: InstanceId) -> Vec<RbcOut> {
        if ctx.is_corrupted(inst.0) {
            return Vec::new();
        }
        if let Some(m) = self.pending.remove(&inst) {
            let all: Vec<usize> = (0..self.n).collect();
            self.start(ctx, inst, &m, &all);
        }
        Vec::new()
    }

    fn allow(&mut self, ctx: &mut Ctx, inst: InstanceId, msg: &[u8]) -> Vec<RbcOut> {
        if ctx.is_corrupted(inst.0) && self.pending.remove(&inst).is_some() {
            let all: Vec<usize> = (0..self.n).collect();
            self.start(ctx, inst, msg, &all);
        }
        Vec::new()
    }

    fn party_round_end(&mut self, ctx: &mut Ctx, party: usize) -> Vec<RbcOut> {
        self.process(ctx, party)
    }

    fn adversary_round_end(&mut self, ctx: &mut Ctx) -> Vec<RbcOut> {
        let corrupted: Vec<usize> = ctx.corrupted().iter().copied().collect();
        corrupted.into_iter().flat_map(|p| self.process(ctx, p)).collect()
    }

    fn equivocate(&mut self, ctx: &mut Ctx, inst: InstanceId, m1: &[u8], m2: &[u8], first: &[usize]) -> Vec<RbcOut> {
        if !ctx.is_corrupted(inst.0) {
            ctx.warn(Some(inst.0), "equivocation requires a corrupted sender");
            return Vec::new();
        }
        self.pending.remove(&inst);
        let key = (inst.0, inst.1, ctx.round());
        let rest: Vec<usize> = (0..self.n).filter(|p| !first.contains(p)).collect();
        for (m, group) in [(m1, first.to_vec()), (m2, rest)] {
            let base = SignChain {
                key,
                msg: m.to_vec(),
                sigs: Vec::new(),
            };
            if let Some(c) = self.sign_extend(inst.0, &base) {
                self.send_all(ctx, inst.0, &c, &group);
            }
        }
        Vec::new()
    }
}
