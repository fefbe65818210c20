use std::collections::BTreeSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use super::{EntityId, GlobalClock, Trace};
use crate::crypto::{random_block, BudgetLedger, Caller, Digest, OracleMode, RandomOracle, Refused};

/// Shared state of one simulation: clock, randomness, oracles, the query
/// budget ledger, the trace and the corruption set.
pub struct Ctx {
    pub sid: String,
    pub n: usize,
    pub clock: GlobalClock,
    pub rng: ChaCha20Rng,
    pub oracle: RandomOracle,
    pub budget: BudgetLedger,
    pub trace: Trace,
    corrupted: BTreeSet<usize>,
}

pub fn hx(b: &[u8]) -> String {
    hex::encode(b)
}

impl Ctx {
    pub fn new(sid: &str, n: usize, seed: u64, q: u32, mode: OracleMode) -> Self {
        Self {
            sid: sid.to_string(),
            n,
            clock: GlobalClock::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            oracle: RandomOracle::new(mode, seed),
            budget: BudgetLedger::new(q.max(1)),
            trace: Trace::default(),
            corrupted: BTreeSet::new(),
        }
    }

    pub fn round(&self) -> u64 {
        self.clock.read()
    }

    pub fn q(&self) -> u32 {
        self.budget.q()
    }

    pub fn is_corrupted(&self, p: usize) -> bool {
        self.corrupted.contains(&p)
    }

    pub fn corrupted(&self) -> &BTreeSet<usize> {
        &self.corrupted
    }

    pub fn honest(&self) -> Vec<usize> {
        (0..self.n).filter(|p| !self.corrupted.contains(p)).collect()
    }

    pub(crate) fn set_corrupted(&mut self, p: usize) -> bool {
        let id = self.party_id(p);
        self.clock.mark_corrupted(&id);
        self.corrupted.insert(p)
    }

    pub fn party_id(&self, p: usize) -> EntityId {
        EntityId::party(p, &self.sid)
    }

    pub fn func_id(&self, name: &str) -> EntityId {
        EntityId::functionality(name, &self.sid)
    }

    pub fn emit(&mut self, actor: EntityId, label: &str, payload: Value) {
        let r = self.round();
        self.trace.push(r, actor, label, payload);
    }

    pub fn party_event(&mut self, p: usize, label: &str, payload: Value) {
        let id = self.party_id(p);
        self.emit(id, label, payload);
    }

    pub fn func_event(&mut self, name: &str, label: &str, payload: Value) {
        let id = self.func_id(name);
        self.emit(id, label, payload);
    }

    pub fn adversary_event(&mut self, label: &str, payload: Value) {
        let id = EntityId::adversary(&self.sid);
        self.emit(id, label, payload);
    }

    /// Information handed to the adversary by a functionality.
    pub fn leak(&mut self, source: &str, mut payload: Value) {
        if let Value::Object(m) = &mut payload {
            m.insert("from".into(), Value::String(source.to_string()));
        }
        self.adversary_event("leak", payload);
    }

    /// Output of party `p` to its environment. Outputs of corrupted parties
    /// go to the adversary instead.
    pub fn output(&mut self, p: usize, mut payload: Value) {
        if self.is_corrupted(p) {
            if let Value::Object(m) = &mut payload {
                m.insert("party".into(), json!(p));
            }
            self.adversary_event("adv_output", payload);
        } else {
            self.party_event(p, "output", payload);
        }
    }

    pub fn warn(&mut self, p: Option<usize>, msg: &str) {
        let payload = json!({ "msg": msg });
        match p {
            Some(p) => self.party_event(p, "warning", payload),
            None => self.emit(EntityId::environment(&self.sid.clone()), "warning", payload),
        }
    }

    /// One wrapper batch against the star oracle.
    pub fn evaluate(&mut self, caller: Caller, batch: &[Vec<u8>]) -> Result<Vec<Digest>, Refused> {
        let round = self.round();
        let res = self.budget.evaluate(&mut self.oracle, caller, round, batch);
        let used = self.budget.used(caller, round);
        let label = if res.is_ok() { "ro_batch" } else { "ro_refused" };
        let payload = json!({ "caller": caller, "size": batch.len(), "used": used });
        match caller {
            Caller::Party(p) => self.party_event(p, label, payload),
            Caller::Corrupted => self.adversary_event(label, payload),
        }
        res
    }

    pub fn tag(&mut self) -> String {
        let mut b = [0u8; 16];
        self.rng.fill_bytes(&mut b);
        hx(&b)
    }

    pub fn random_block(&mut self) -> Digest {
        random_block(&mut self.rng)
    }

    pub fn random_bytes(&mut self, len: usize) -> Vec<u8> {
        let mut b = vec![0u8; len];
        self.rng.fill_bytes(&mut b);
        b
    }
}
