use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Party,
    Functionality,
    Adversary,
    Environment,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId {
    pub kind: EntityKind,
    pub pid: String,
    pub sid: String,
}

impl EntityId {
    pub fn party(i: usize, sid: &str) -> Self {
        Self {
            kind: EntityKind::Party,
            pid: format!("P{i}"),
            sid: sid.to_string(),
        }
    }

    pub fn functionality(name: &str, sid: &str) -> Self {
        Self {
            kind: EntityKind::Functionality,
            pid: name.to_string(),
            sid: sid.to_string(),
        }
    }

    pub fn adversary(sid: &str) -> Self {
        Self {
            kind: EntityKind::Adversary,
            pid: "A".to_string(),
            sid: sid.to_string(),
        }
    }

    pub fn environment(sid: &str) -> Self {
        Self {
            kind: EntityKind::Environment,
            pid: "Z".to_string(),
            sid: sid.to_string(),
        }
    }

    /// Party index for `P<i>` identities.
    pub fn party_index(&self) -> Option<usize> {
        if self.kind != EntityKind::Party {
            return None;
        }
        self.pid.strip_prefix('P')?.parse().ok()
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.pid, self.sid)
    }
}

/// Global clock with the quorum rule: the round advances once every honest
/// registered party and every registered functionality has signalled.
#[derive(Clone, Debug, Default)]
pub struct GlobalClock {
    cl: u64,
    registered: BTreeSet<EntityId>,
    corrupted: BTreeSet<EntityId>,
    advanced: BTreeSet<EntityId>,
}

impl GlobalClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, e: EntityId) -> Result<(), SimError> {
        if !self.registered.insert(e.clone()) {
            return Err(SimError::DuplicateEntity(e.to_string()));
        }
        Ok(())
    }

    pub fn read(&self) -> u64 {
        self.cl
    }

    pub fn quorum(&self) -> BTreeSet<EntityId> {
        self.registered.difference(&self.corrupted).cloned().collect()
    }

    pub fn quorum_size(&self) -> usize {
        self.registered.len() - self.corrupted.len()
    }

    pub fn is_registered(&self, e: &EntityId) -> bool {
        self.registered.contains(e)
    }

    pub fn mark_corrupted(&mut self, e: &EntityId) {
        if e.kind == EntityKind::Party && self.registered.contains(e) {
            self.corrupted.insert(e.clone());
            self.advanced.remove(e);
        }
    }

    pub fn has_advanced(&self, e: &EntityId) -> bool {
        self.advanced.contains(e)
    }

    /// Records the signal; returns true when it completed the quorum.
    pub fn advance(&mut self, e: &EntityId) -> Result<bool, SimError> {
        if !self.registered.contains(e) {
            return Err(SimError::UnknownEntity(e.to_string()));
        }
        if self.corrupted.contains(e) {
            return Ok(false);
        }
        self.advanced.insert(e.clone());
        if self.advanced.len() == self.quorum_size() {
            self.cl += 1;
            self.advanced.clear();
            return Ok(true);
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn functionality_holds_back_quorum() {
        let mut c = GlobalClock::new();
        for i in 0..3 {
            c.register(EntityId::party(i, "s")).unwrap();
        }
        let f = EntityId::functionality("F_UBC", "s");
        c.register(f.clone()).unwrap();
        for i in 0..3 {
            assert!(!c.advance(&EntityId::party(i, "s")).unwrap());
        }
        assert_eq!(c.read(), 0);
        assert!(c.advance(&f).unwrap());
        assert_eq!(c.read(), 1);
    }

    #[test]
    fn duplicate_registration_and_idempotent_signals() {
        let mut c = GlobalClock::new();
        let p = EntityId::party(0, "s");
        c.register(p.clone()).unwrap();
        assert!(c.register(p.clone()).is_err());
        assert!(c.advance(&EntityId::party(5, "s")).is_err());
        assert!(c.advance(&p).unwrap());
        assert_eq!(c.read(), 1);
    }

    #[test]
    fn corruption_shrinks_quorum() {
        let mut c = GlobalClock::new();
        let p0 = EntityId::party(0, "s");
        let p1 = EntityId::party(1, "s");
        c.register(p0.clone()).unwrap();
        c.register(p1.clone()).unwrap();
        c.mark_corrupted(&p1);
        assert!(c.advance(&p0).unwrap());
        assert!(!c.advance(&p1).unwrap());
        assert_eq!(c.read(), 1);
    }
}
