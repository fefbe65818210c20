use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Digest, RandomOracle, Table};

/// Who is charged for a wrapper batch. All corrupted parties share one ledger.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Caller {
    Party(usize),
    Corrupted,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("query budget exhausted for {caller:?} in round {round} (q = {q})")]
pub struct Refused {
    pub caller: Caller,
    pub round: u64,
    pub q: u32,
}

/// Per-round query budget: each caller may issue at most `q` batches per round.
#[derive(Clone, Debug)]
pub struct BudgetLedger {
    q: u32,
    used: BTreeMap<Caller, (u64, u32)>,
}

impl BudgetLedger {
    pub fn new(q: u32) -> Self {
        assert!(q >= 1, "q must be positive");
        Self {
            q,
            used: BTreeMap::new(),
        }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn used(&self, caller: Caller, round: u64) -> u32 {
        match self.used.get(&caller) {
            Some(&(r, n)) if r == round => n,
            _ => 0,
        }
    }

    /// Charges one batch to `caller` for `round`, returning the new count.
    pub fn charge(&mut self, caller: Caller, round: u64) -> Result<u32, Refused> {
        let entry = self.used.entry(caller).or_insert((round, 0));
        if entry.0 != round {
            *entry = (round, 0);
        }
        if entry.1 >= self.q {
            return Err(Refused {
                caller,
                round,
                q: self.q,
            });
        }
        entry.1 += 1;
        Ok(entry.1)
    }

    /// Answers a whole batch against the star table for one budget unit.
    pub fn evaluate(
        &mut self,
        oracle: &mut RandomOracle,
        caller: Caller,
        round: u64,
        batch: &[Vec<u8>],
    ) -> Result<Vec<Digest>, Refused> {
        self.charge(caller, round)?;
        Ok(batch.iter().map(|x| oracle.query(Table::Star, x)).collect())
    }
}
