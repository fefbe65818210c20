use serde_json::json;

use crate::kernel::{hx, Ctx};

/// Identifies one relaxed-broadcast instance: the designated sender and
/// the sender-local index of the message it carries.
pub type InstanceId = (usize, u64);

/// Delivery of `msg` from instance `inst` to the listed parties.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RbcOut {
    pub to: Vec<usize>,
    pub inst: InstanceId,
    pub msg: Vec<u8>,
}

/// A single relaxed broadcast functionality with a fixed sender.
#[derive(Clone, Debug)]
pub struct IdealRbc {
    pub sender: usize,
    output: Option<Vec<u8>>,
    halted: bool,
}

impl IdealRbc {
    pub fn new(sender: usize) -> Self {
        Self {
            sender,
            output: None,
            halted: false,
        }
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn recorded(&self) -> Option<&[u8]> {
        self.output.as_deref()
    }

    fn deliver(&mut self, m: Vec<u8>) -> Option<Vec<u8>> {
        self.halted = true;
        Some(m)
    }

    /// Broadcast from `from`. Returns the message if it is delivered now.
    pub fn broadcast(&mut self, ctx: &mut Ctx, from: usize, m: &[u8]) -> Option<Vec<u8>> {
        if self.halted || from != self.sender || self.output.is_some() {
            return None;
        }
        if ctx.is_corrupted(from) {
            return self.deliver(m.to_vec());
        }
        self.output = Some(m.to_vec());
        ctx.leak("F_RBC", json!({ "event": "broadcast", "sender": from, "msg": hx(m) }));
        None
    }

    /// Adversary replacement; only effective for a corrupted recorded sender.
    pub fn allow(&mut self, ctx: &mut Ctx, m: &[u8]) -> Option<Vec<u8>> {
        if self.halted || self.output.is_none() || !ctx.is_corrupted(self.sender) {
            return None;
        }
        self.deliver(m.to_vec())
    }

    pub fn advance_clock(&mut self, ctx: &mut Ctx, from: usize) -> Option<Vec<u8>> {
        if self.halted || from != self.sender || ctx.is_corrupted(from) {
            return None;
        }
        let m = self.output.clone()?;
        self.deliver(m)
    }
}

/// The relaxed broadcast instances used underneath the unfair broadcast
/// protocol, either ideal or realized by Dolev-Strong.
pub trait RbcBackend {
    fn name(&self) -> String;

    /// Extra rounds between a sender's trigger and delivery.
    fn latency(&self) -> u64;

    /// Broadcast request to a fresh instance. A corrupted sender's request
    /// is acted on immediately.
    fn submit(&mut self, ctx: &mut Ctx, inst: InstanceId, msg: &[u8]) -> Vec<RbcOut>;

    /// The honest sender's clock signal to the instance.
    fn trigger(&mut self, ctx: &mut Ctx, inst: InstanceId) -> Vec<RbcOut>;

    /// Adversary replacement for a recorded instance whose sender is corrupted.
    fn allow(&mut self, ctx: &mut Ctx, inst: InstanceId, msg: &[u8]) -> Vec<RbcOut>;

    /// Per-party end-of-round work (message processing for Dolev-Strong).
    fn party_round_end(&mut self, _ctx: &mut Ctx, _party: usize) -> Vec<RbcOut> {
        Vec::new()
    }

    /// End-of-round work carried out by the adversary for corrupted parties.
    fn adversary_round_end(&mut self, _ctx: &mut Ctx) -> Vec<RbcOut> {
        Vec::new()
    }

    /// A corrupted sender sends different values to different parties.
    fn equivocate(&mut self, ctx: &mut Ctx, inst: InstanceId, _m1: &[u8], _m2: &[u8], _first: &[usize]) -> Vec<RbcOut> {
        ctx.warn(Some(inst.0), "equivocation is not expressible against an ideal instance");
        Vec::new()
    }
}

/// One ideal instance per (sender, index).
#[derive(Default)]
pub struct IdealRbcPool {
    n: usize,
    instances: std::collections::BTreeMap<InstanceId, IdealRbc>,
}

impl IdealRbcPool {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            instances: Default::default(),
        }
    }

    fn all(&self, inst: InstanceId, m: Option<Vec<u8>>) -> Vec<RbcOut> {
        m.map(|msg| RbcOut {
            to: (0..self.n).collect(),
            inst,
            msg,
        })
        .into_iter()
        .collect()
    }
}

impl RbcBackend for IdealRbcPool {
    fn name(&self) -> String {
        "F_RBC".into()
    }

    fn latency(&self) -> u64 {
        0
    }

    fn submit(&mut self, ctx: &mut Ctx, inst: InstanceId, msg: &[u8]) -> Vec<RbcOut> {
        let f = self.instances.entry(inst).or_insert_with(|| IdealRbc::new(inst.0));
        let m = f.broadcast(ctx, inst.0, msg);
        self.all(inst, m)
    }

    fn trigger(&mut self, ctx: &mut Ctx, inst: InstanceId) -> Vec<RbcOut> {
        let m = match self.instances.get_mut(&inst) {
            Some(f) => f.advance_clock(ctx, inst.0),
            None => None,
        };
        self.all(inst, m)
    }

    fn allow(&mut self, ctx: &mut Ctx, inst: InstanceId, msg: &[u8]) -> Vec<RbcOut> {
        let m = match self.instances.get_mut(&inst) {
            Some(f) => f.allow(ctx, msg),
            None => None,
        };
        self.all(inst, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::OracleMode;

    fn ctx(n: usize) -> Ctx {
        Ctx::new("t", n, 1, 1, OracleMode::Concrete)
    }

    #[test]
    fn honest_sender_delivers_on_clock() {
        let mut c = ctx(3);
        let mut f = IdealRbc::new(0);
        assert_eq!(f.broadcast(&mut c, 0, b"m"), None);
        assert_eq!(f.advance_clock(&mut c, 0), Some(b"m".to_vec()));
        assert!(f.is_halted());
        assert_eq!(f.advance_clock(&mut c, 0), None);
    }

    #[test]
    fn corrupted_recorded_sender_can_be_replaced() {
        let mut c = ctx(3);
        let mut f = IdealRbc::new(0);
        f.broadcast(&mut c, 0, b"m");
        assert_eq!(f.allow(&mut c, b"x"), None);
        c.set_corrupted(0);
        assert_eq!(f.allow(&mut c, b"x"), Some(b"x".to_vec()));
        assert_eq!(f.allow(&mut c, b"y"), None);
    }

    #[test]
    fn corrupted_broadcast_is_immediate() {
        let mut c = ctx(2);
        c.set_corrupted(1);
        let mut f = IdealRbc::new(1);
        assert_eq!(f.broadcast(&mut c, 1, b"z"), Some(b"z".to_vec()));
    }
}
