use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::{Action, Ctx, EntityId, Input, ScenarioScript, Trace};
use crate::error::SimError;

/// A protocol stack (or its ideal twin) as seen by the kernel.
///
/// The kernel owns the round structure: it feeds scripted inputs, calls
/// `advance` on the first clock signal of each honest party, applies
/// corruptions and directives at their trigger points, and finally lets the
/// stack act for the adversary in `round_closing` before the registered
/// functionalities signal the clock.
pub trait Stack {
    fn functionalities(&self) -> Vec<String>;

    /// Rounds a message may take to surface, used for the drain horizon.
    fn latency(&self) -> u64;

    fn input(&mut self, ctx: &mut Ctx, party: usize, input: &Input) -> Result<(), SimError>;

    fn advance(&mut self, ctx: &mut Ctx, party: usize) -> Result<(), SimError>;

    /// Called after the party is marked corrupted; returns the state handed
    /// to the adversary.
    fn corrupt(&mut self, ctx: &mut Ctx, party: usize) -> Value;

    fn directive(&mut self, ctx: &mut Ctx, action: &Action) -> Result<(), SimError>;

    fn round_opening(&mut self, _ctx: &mut Ctx) -> Result<(), SimError> {
        Ok(())
    }

    fn round_closing(&mut self, ctx: &mut Ctx) -> Result<(), SimError>;
}

enum Pending<'a> {
    Corrupt(usize),
    Direct(&'a Action),
}

struct Loop<'a> {
    events: Vec<(u64, usize, usize, Pending<'a>)>,
    cursor: usize,
}

impl<'a> Loop<'a> {
    fn new(script: &'a ScenarioScript) -> Self {
        let mut events = Vec::new();
        for (i, c) in script.corruptions.iter().enumerate() {
            events.push((c.round, c.step, i, Pending::Corrupt(c.party)));
        }
        let base = script.corruptions.len();
        for (i, d) in script.adversary.iter().enumerate() {
            events.push((d.round, d.step, base + i, Pending::Direct(&d.action)));
        }
        events.sort_by_key(|e| (e.0, e.1, e.2));
        Self {
            events,
            cursor: 0,
        }
    }

    fn apply_due(&mut self, ctx: &mut Ctx, stack: &mut dyn Stack, round: u64, step: usize) -> Result<(), SimError> {
        while let Some(ev) = self.events.get(self.cursor) {
            if ev.0 != round || ev.1 > step {
                if ev.0 < round {
                    self.cursor += 1;
                    continue;
                }
                break;
            }
            match &ev.3 {
                Pending::Corrupt(p) => corrupt(ctx, stack, *p),
                Pending::Direct(a) => {
                    let payload = serde_json::to_value(a).expect("actions serialize");
                    ctx.adversary_event("directive", json!({ "step": step, "action": payload }));
                    stack.directive(ctx, a)?;
                }
            }
            self.cursor += 1;
        }
        Ok(())
    }
}

fn corrupt(ctx: &mut Ctx, stack: &mut dyn Stack, p: usize) {
    if ctx.is_corrupted(p) {
        ctx.warn(Some(p), "corruption of an already corrupted party ignored");
        return;
    }
    ctx.set_corrupted(p);
    let state = stack.corrupt(ctx, p);
    ctx.adversary_event("corrupt", json!({ "party": p, "state": state }));
}

fn signal(ctx: &mut Ctx, stack: &mut dyn Stack, advanced: &mut BTreeSet<usize>, p: usize) -> Result<(), SimError> {
    if ctx.is_corrupted(p) {
        ctx.adversary_event("adv_input", json!({ "party": p, "input": "advance_clock" }));
        return Ok(());
    }
    let first = advanced.insert(p);
    if first {
        stack.advance(ctx, p)?;
    }
    let id = ctx.party_id(p);
    ctx.emit(id.clone(), "advance_clock", json!({ "first": first }));
    if ctx.clock.advance(&id)? {
        return Err(SimError::Config("clock advanced before functionalities signalled".into()));
    }
    Ok(())
}

/// Runs `script` against `stack` and returns the trace.
pub fn run_stack(
    script: &ScenarioScript,
    stack: &mut dyn Stack,
    ctx: &mut Ctx,
    drain: u64,
) -> Result<Trace, SimError> {
    script.validate().map_err(SimError::Config)?;
    let funcs = stack.functionalities();
    if funcs.is_empty() {
        return Err(SimError::Config("stack registers no functionality".into()));
    }
    let env = EntityId::environment(&ctx.sid);
    ctx.emit(
        env.clone(),
        "scenario",
        json!({ "name": script.name, "stack": script.stack, "n": script.n, "seed": script.seed,
                "params": script.params, "oracle_mode": script.oracle_mode }),
    );
    for p in 0..script.n {
        let id = ctx.party_id(p);
        ctx.clock.register(id.clone())?;
        ctx.emit(id, "register", json!({}));
    }
    for f in &funcs {
        let id = ctx.func_id(f);
        ctx.clock.register(id.clone())?;
        ctx.emit(id, "register", json!({}));
    }

    let mut lp = Loop::new(script);
    let end = script.last_round() + drain;
    let mut next = 0usize;
    for r in 0..=end {
        stack.round_opening(ctx)?;
        let start = next;
        while next < script.activations.len() && script.activations[next].round == r {
            next += 1;
        }
        let acts = &script.activations[start..next];
        let mut advanced = BTreeSet::new();
        let mut step = 0usize;
        loop {
            lp.apply_due(ctx, stack, r, step)?;
            if let Some(a) = acts.get(step) {
                if let Input::AdvanceClock = a.input {
                    signal(ctx, stack, &mut advanced, a.party)?;
                } else if ctx.is_corrupted(a.party) {
                    ctx.adversary_event("adv_input", json!({ "party": a.party, "input": a.input }));
                    stack.input(ctx, a.party, &a.input)?;
                } else {
                    ctx.emit(env.clone(), "input", json!({ "party": a.party, "input": a.input }));
                    stack.input(ctx, a.party, &a.input)?;
                }
            } else if let Some(p) = (0..script.n).find(|p| !ctx.is_corrupted(*p) && !advanced.contains(p)) {
                signal(ctx, stack, &mut advanced, p)?;
            } else {
                break;
            }
            step += 1;
        }
        lp.apply_due(ctx, stack, r, usize::MAX)?;
        stack.round_closing(ctx)?;
        let mut moved = false;
        for f in &funcs {
            let id = ctx.func_id(f);
            ctx.emit(id.clone(), "advance_clock", json!({ "first": true }));
            moved |= ctx.clock.advance(&id)?;
        }
        if !moved {
            return Err(SimError::Config(format!("round {r} did not complete its clock quorum")));
        }
        ctx.emit(env.clone(), "round_advanced", json!({ "from": r }));
    }
    Ok(std::mem::take(&mut ctx.trace))
}
