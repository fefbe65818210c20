use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::{decode, deliver_output, IdealSbc, Wire};
use crate::error::SimError;
use crate::kernel::{hx, Action, Ctx, Input, Stack};

#[derive(Clone, Debug, Default)]
struct Slot {
    msg: Vec<u8>,
    tag: Option<String>,
    cl: u64,
    sent: bool,
    settled: bool,
}

/// The ideal simultaneous broadcast driven by a simulator that follows the
/// protocol's wake-up schedule: it opens the window when the protocol's
/// Wake_Up would be delivered, and stops taking honest messages once they
/// could no longer be released before the window closes.
pub struct SbcIdealStack {
    f: IdealSbc,
    delay: u64,
    phi: u64,
    delta: u64,
    awake: Option<u64>,
    wake_sent: Vec<bool>,
    wake_pending: Vec<bool>,
    early: Vec<Vec<usize>>,
    slots: Vec<Vec<Slot>>,
    adv: Vec<(usize, Option<usize>, Vec<u8>)>,
    overrides: BTreeMap<(usize, usize), Option<Vec<u8>>>,
}

impl SbcIdealStack {
    pub fn new(n: usize, phi: u64, delta: u64, alpha: u64, delay: u64) -> Self {
        Self {
            f: IdealSbc::new(phi, delta, alpha),
            delay,
            phi,
            delta,
            awake: None,
            wake_sent: vec![false; n],
            wake_pending: vec![false; n],
            early: vec![Vec::new(); n],
            slots: vec![Vec::new(); n],
            adv: Vec::new(),
            overrides: BTreeMap::new(),
        }
    }

    pub fn functionality(&self) -> &IdealSbc {
        &self.f
    }

    fn wake(&mut self, ctx: &mut Ctx) {
        let cl = ctx.round();
        self.awake = Some(cl);
        for p in ctx.honest() {
            ctx.party_event(
                p,
                "sbc_awake",
                json!({ "t_awake": cl, "t_end": cl + self.phi, "tau_rel": cl + self.phi + self.delta }),
            );
        }
        for p in ctx.honest() {
            for k in std::mem::take(&mut self.early[p]) {
                let msg = self.slots[p][k].msg.clone();
                self.slots[p][k].tag = self.f.broadcast(ctx, p, &msg);
                self.slots[p][k].cl = cl;
            }
        }
    }

    fn t_end(&self) -> Option<u64> {
        self.awake.map(|a| a + self.phi)
    }
}

impl Stack for SbcIdealStack {
    fn functionalities(&self) -> Vec<String> {
        vec!["F_SBC".into()]
    }

    fn latency(&self) -> u64 {
        self.phi + self.delta + 1
    }

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError> {
        let Input::Broadcast { msg } = input else {
            ctx.warn(Some(party), &format!("input `{}` not understood by this stack", input.name()));
            return Ok(());
        };
        let nth = self.slots[party].len();
        self.slots[party].push(Slot {
            msg: msg.0.clone(),
            ..Slot::default()
        });
        if ctx.is_corrupted(party) {
            self.adv.push((party, Some(nth), msg.0.clone()));
            return Ok(());
        }
        let cl = ctx.round();
        match self.t_end() {
            None => {
                self.early[party].push(nth);
                if !self.wake_sent[party] {
                    self.wake_sent[party] = true;
                    self.wake_pending[party] = true;
                }
            }
            Some(end) if cl + self.delay >= end => {
                ctx.party_event(party, "sbc_late", json!({ "nth": nth }));
            }
            Some(_) => {
                self.slots[party][nth].tag = self.f.broadcast(ctx, party, &msg.0);
                self.slots[party][nth].cl = cl;
            }
        }
        Ok(())
    }

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError> {
        let cl = ctx.round();
        if let Some(end) = self.t_end() {
            for s in self.slots[party].iter_mut().filter(|s| s.tag.is_some()) {
                if s.cl + self.delay <= cl && cl < end {
                    s.sent = true;
                }
            }
        }
        if let Some(msgs) = self.f.advance_clock(ctx, party) {
            ctx.output(party, deliver_output(&msgs));
        }
        if std::mem::take(&mut self.wake_pending[party]) && self.awake.is_none() {
            self.wake(ctx);
        }
        Ok(())
    }

    fn corrupt(&mut self, ctx: &mut Ctx, party: usize) -> Value {
        self.wake_pending[party] = false;
        for k in std::mem::take(&mut self.early[party]) {
            self.adv.push((party, Some(k), self.slots[party][k].msg.clone()));
        }
        let pending: Vec<Value> = self
            .f
            .corruption_request(ctx)
            .into_iter()
            .filter(|t| t.owner == party)
            .map(|t| json!({ "tag": t.tag, "msg": hx(&t.msg) }))
            .collect();
        for k in 0..self.slots[party].len() {
            let s = &self.slots[party][k];
            if let (Some(tag), true) = (s.tag.clone(), s.sent) {
                let msg = s.msg.clone();
                self.f.allow(ctx, &tag, &msg);
                self.slots[party][k].settled = true;
            }
        }
        json!({ "pending": pending })
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
            Action::InjectRaw { payload, .. } => {
                if decode(&payload.0) == Some(Wire::WakeUp) && self.awake.is_none() {
                    ctx.warn(Some(p), "a bare wake-up cannot open the ideal window");
                }
            }
            Action::Replay { .. } => {}
            Action::Equivocate { .. } => ctx.warn(Some(p), "equivocation is not expressible against the ideal channel"),
        }
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError> {
        let cl = ctx.round();
        if let Some(end) = self.t_end() {
            for p in ctx.corrupted().clone() {
                for k in 0..self.slots[p].len() {
                    let s = &self.slots[p][k];
                    let Some(tag) = s.tag.clone() else { continue };
                    if s.settled || s.sent || s.cl + self.delay > cl || cl >= end {
                        continue;
                    }
                    let msg = match self.overrides.remove(&(p, k)) {
                        Some(None) => None,
                        Some(Some(m)) => Some(m),
                        None => Some(s.msg.clone()),
                    };
                    self.slots[p][k].settled = true;
                    if let Some(m) = msg {
                        self.f.allow(ctx, &tag, &m);
                    }
                }
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
        if !queued.is_empty() && self.awake.is_none() {
            self.wake(ctx);
        }
        for (p, m) in queued {
            self.f.broadcast(ctx, p, &m);
        }
        Ok(())
    }
}
