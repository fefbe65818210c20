use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::apps::{durs_gate, vote_gate, DursIdealStack, DursProtocol, VoteIdealStack, VoteProtocol};
use crate::broadcast::{DolevStrongPool, FbcIdealStack, FbcProtocol, IdealRbcPool, UbcIdealStack, UbcProtocol};
use crate::error::SimError;
use crate::kernel::{run_stack, Ctx, ScenarioScript, Stack, Trace};
use crate::sbc::{sbc_gate, SbcIdealStack, SbcProtocol};
use crate::tle::{TleIdealStack, TleProtocol};

/// Base stack names accepted in scenario files. Each also exists with an
/// `_ideal` suffix naming its ideal twin.
pub const FAMILIES: [&str; 7] = ["rbc", "ubc", "fbc", "tle", "sbc", "durs", "vote"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Rbc,
    Ubc,
    Fbc,
    Tle,
    Sbc,
    Durs,
    Vote,
}

/// A stack name split into its family and world.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackName {
    pub family: Family,
    pub ideal: bool,
}

impl StackName {
    pub fn parse(name: &str) -> Result<Self, SimError> {
        let (base, ideal) = match name.strip_suffix("_ideal") {
            Some(b) => (b, true),
            None => (name, false),
        };
        let family = match base {
            "rbc" => Family::Rbc,
            "ubc" => Family::Ubc,
            "fbc" => Family::Fbc,
            "tle" => Family::Tle,
            "sbc" => Family::Sbc,
            "durs" => Family::Durs,
            "vote" => Family::Vote,
            _ => return Err(SimError::UnknownStack(name.to_string())),
        };
        Ok(Self { family, ideal })
    }
}

/// Parameters after defaults have been filled in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolved {
    pub phi: u64,
    pub delta: u64,
    pub alpha: u64,
    pub q: u32,
    pub t_plus_one: u64,
    pub delay: u64,
    pub candidates: u32,
    pub quota: usize,
    pub authority: usize,
}

impl Family {
    pub fn resolve(self, script: &ScenarioScript) -> Resolved {
        let p = &script.params;
        let (phi, delta, alpha) = match self {
            Family::Rbc | Family::Ubc => (0, 0, 0),
            Family::Fbc | Family::Tle => (0, p.delta.unwrap_or(2), p.alpha.unwrap_or(2)),
            Family::Sbc => {
                let delay = p.tle_delay.unwrap_or(3);
                (p.phi.unwrap_or(4), p.delta.unwrap_or(3), p.alpha.unwrap_or(delay))
            }
            Family::Durs => (p.phi.unwrap_or(2), p.delta.unwrap_or(4), p.alpha.unwrap_or(2)),
            Family::Vote => (p.phi.unwrap_or(2), p.delta.unwrap_or(3), p.alpha.unwrap_or(1)),
        };
        Resolved {
            phi,
            delta,
            alpha,
            q: p.q.unwrap_or(1),
            t_plus_one: p.t_plus_one_rounds.unwrap_or(script.n as u64),
            delay: p.tle_delay.unwrap_or(3),
            candidates: p.candidates.unwrap_or(3),
            quota: p.quota.unwrap_or(1),
            authority: p.authority.unwrap_or(script.n.saturating_sub(1)),
        }
    }

    /// Rounds by which protocol outputs trail the ideal twin's.
    pub fn shift(self, r: &Resolved) -> u64 {
        match self {
            Family::Rbc => r.t_plus_one,
            _ => 0,
        }
    }

    /// Parameter checks for one world of this family.
    pub fn gate(self, r: &Resolved, script: &ScenarioScript, ideal: bool) -> Result<(), SimError> {
        if r.q == 0 {
            return Err(SimError::Gate("q must be at least 1".into()));
        }
        match self {
            Family::Rbc | Family::Ubc => {
                if r.t_plus_one == 0 {
                    return Err(SimError::Gate("t_plus_one_rounds must be at least 1".into()));
                }
            }
            Family::Fbc => {
                if r.delta < r.alpha {
                    return Err(SimError::Gate(format!("need delta >= alpha, got {} < {}", r.delta, r.alpha)));
                }
                if !ideal && (r.delta, r.alpha) != (2, 2) {
                    return Err(SimError::Gate(format!(
                        "the fair broadcast protocol realizes delta = 2, alpha = 2 only, got ({}, {})",
                        r.delta, r.alpha
                    )));
                }
            }
            Family::Tle => {
                if r.delta < r.alpha {
                    return Err(SimError::Gate(format!("need delta >= alpha, got {} < {}", r.delta, r.alpha)));
                }
            }
            Family::Sbc => {
                if ideal {
                    if r.phi == 0 || r.delta < r.alpha {
                        return Err(SimError::Gate("need phi > 0 and delta >= alpha".into()));
                    }
                } else {
                    sbc_gate(r.phi, r.delta, script.params.alpha, r.delay)?;
                }
            }
            Family::Durs => durs_gate(r.phi, r.delta, r.alpha)?,
            Family::Vote => {
                vote_gate(r.phi, r.delta, r.alpha, r.candidates)?;
                if r.authority >= script.n {
                    return Err(SimError::Gate(format!("authority {} is not a party", r.authority)));
                }
                if r.quota == 0 {
                    return Err(SimError::Gate("quota must be at least 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Builds the stack for one world. The Dolev-Strong keys are drawn from the
/// simulation's randomness.
pub fn build_stack(name: StackName, script: &ScenarioScript, ctx: &mut Ctx) -> Result<Box<dyn Stack>, SimError> {
    let r = name.family.resolve(script);
    name.family.gate(&r, script, name.ideal)?;
    let n = script.n;
    Ok(match (name.family, name.ideal) {
        (Family::Rbc, false) => Box::new(UbcProtocol::new(n, DolevStrongPool::new(n, r.t_plus_one, &mut ctx.rng))),
        (Family::Rbc, true) | (Family::Ubc, false) => Box::new(UbcProtocol::new(n, IdealRbcPool::new(n))),
        (Family::Ubc, true) => Box::new(UbcIdealStack::new(n)),
        (Family::Fbc, false) => Box::new(FbcProtocol::new(n, r.q)),
        (Family::Fbc, true) => Box::new(FbcIdealStack::new(n, r.delta, r.alpha)),
        (Family::Tle, false) => Box::new(TleProtocol::new(n, r.delta, r.alpha, r.q)),
        (Family::Tle, true) => Box::new(TleIdealStack::new(n, r.delta, r.alpha, r.q)),
        (Family::Sbc, false) => Box::new(SbcProtocol::new(n, r.phi, r.delta, r.delay, r.q)),
        (Family::Sbc, true) => Box::new(SbcIdealStack::new(n, r.phi, r.delta, r.alpha, r.delay)),
        (Family::Durs, false) => Box::new(DursProtocol::new(n, r.phi, r.delta, r.alpha)),
        (Family::Durs, true) => Box::new(DursIdealStack::new(n, r.delta, r.alpha)),
        (Family::Vote, false) => {
            Box::new(VoteProtocol::new(n, r.phi, r.delta, r.alpha, r.candidates, r.quota, r.authority))
        }
        (Family::Vote, true) => {
            Box::new(VoteIdealStack::new(n, r.phi, r.delta, r.alpha, r.candidates, r.quota, r.authority))
        }
    })
}

fn fresh_ctx(script: &ScenarioScript, q: u32) -> Ctx {
    let sid = if script.name.is_empty() { "sim" } else { &script.name };
    Ctx::new(sid, script.n, script.seed, q, script.oracle_mode)
}

/// Drain horizon shared by both worlds of a family, so their traces cover
/// the same rounds.
pub fn drain_for(family: Family, script: &ScenarioScript) -> Result<u64, SimError> {
    if let Some(d) = script.params.drain {
        return Ok(d);
    }
    let r = family.resolve(script);
    let mut scratch = fresh_ctx(script, r.q.max(1));
    scratch.rng = ChaCha20Rng::seed_from_u64(0);
    let mut latency = 0;
    for ideal in [false, true] {
        let name = StackName { family, ideal };
        if family.gate(&r, script, ideal).is_ok() {
            latency = latency.max(build_stack(name, script, &mut scratch)?.latency());
        }
    }
    Ok(latency + family.shift(&r) + 2)
}

/// Runs one world of the script's family.
pub fn run_world(script: &ScenarioScript, name: StackName) -> Result<Trace, SimError> {
    script.validate().map_err(SimError::Config)?;
    let r = name.family.resolve(script);
    let drain = drain_for(name.family, script)?;
    let mut ctx = fresh_ctx(script, r.q);
    let mut stack = build_stack(name, script, &mut ctx)?;
    run_stack(script, stack.as_mut(), &mut ctx, drain)
}

/// Runs the stack named in the script.
pub fn run_scenario(script: &ScenarioScript) -> Result<Trace, SimError> {
    run_world(script, StackName::parse(&script.stack)?)
}

/// Runs the protocol and its ideal twin under the same script.
pub fn run_pair(script: &ScenarioScript) -> Result<(Trace, Trace), SimError> {
    let family = StackName::parse(&script.stack)?.family;
    let real = run_world(script, StackName { family, ideal: false })?;
    let ideal = run_world(script, StackName { family, ideal: true })?;
    Ok((real, ideal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Bytes, Input};

    #[test]
    fn names_parse() {
        assert_eq!(StackName::parse("sbc_ideal").unwrap(), StackName { family: Family::Sbc, ideal: true });
        assert!(matches!(StackName::parse("abc"), Err(SimError::UnknownStack(_))));
        for f in FAMILIES {
            assert!(!StackName::parse(f).unwrap().ideal);
        }
    }

    #[test]
    fn fbc_protocol_rejects_other_parameters() {
        let mut s = ScenarioScript::new("fbc", 2, 1);
        s.params.delta = Some(3);
        s.params.alpha = Some(1);
        assert!(matches!(run_scenario(&s), Err(SimError::Gate(_))));
        s.stack = "fbc_ideal".into();
        assert!(run_scenario(&s).is_ok());
    }

    #[test]
    fn both_worlds_share_the_horizon() {
        let s = ScenarioScript::new("rbc", 3, 4).act(0, 0, Input::Broadcast { msg: Bytes::from_text("m") });
        let (a, b) = run_pair(&s).unwrap();
        assert_eq!(a.events.last().unwrap().round, b.events.last().unwrap().round);
    }

    #[test]
    fn runs_are_deterministic() {
        let s = ScenarioScript::new("fbc", 3, 9).act(0, 1, Input::Broadcast { msg: Bytes::from_text("m") });
        assert_eq!(run_scenario(&s).unwrap().to_jsonl(), run_scenario(&s).unwrap().to_jsonl());
    }
}
