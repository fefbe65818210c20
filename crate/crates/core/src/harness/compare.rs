use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::Value;

use super::registry::{run_pair, Family, StackName};
use crate::error::SimError;
use crate::kernel::{EntityKind, ScenarioScript, Trace};

/// How outputs are normalized before comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    Exact,
    /// Drops the ciphertext bytes from retrieve records.
    StripCiphers,
    /// Treats each delivered batch as a multiset.
    Multiset,
    /// Hides the random string itself. Agreement among honest parties is
    /// checked separately on each side.
    MaskUrs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AlignRules {
    /// Subtracted from protocol-side rounds.
    pub shift: u64,
    pub normalize: Normalize,
}

impl AlignRules {
    pub fn exact() -> Self {
        Self {
            shift: 0,
            normalize: Normalize::Exact,
        }
    }

    pub fn for_script(script: &ScenarioScript) -> Result<Self, SimError> {
        let family = StackName::parse(&script.stack)?.family;
        let shift = family.shift(&family.resolve(script));
        let normalize = match family {
            Family::Tle => Normalize::StripCiphers,
            Family::Sbc => Normalize::Multiset,
            Family::Durs => Normalize::MaskUrs,
            _ => Normalize::Exact,
        };
        Ok(Self { shift, normalize })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projected {
    pub seq: u64,
    pub round: u64,
    pub output: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartyProjection {
    pub party: usize,
    pub protocol: Vec<Projected>,
    pub ideal: Vec<Projected>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Equal,
    Divergent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Divergence {
    pub party: Option<usize>,
    pub index: usize,
    pub protocol_seq: Option<u64>,
    pub ideal_seq: Option<u64>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub script: String,
    pub rules: AlignRules,
    pub parties: Vec<PartyProjection>,
    pub verdict: Verdict,
    pub first_divergence: Option<Divergence>,
}

impl EquivalenceReport {
    pub fn is_equal(&self) -> bool {
        self.verdict == Verdict::Equal
    }
}

fn parties_of(trace: &Trace) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut all = BTreeSet::new();
    let mut corrupted = BTreeSet::new();
    for e in &trace.events {
        if e.label == "register" {
            if let Some(p) = e.actor.party_index() {
                all.insert(p);
            }
        }
        if e.label == "corrupt" && e.actor.kind == EntityKind::Adversary {
            if let Some(p) = e.payload["party"].as_u64() {
                corrupted.insert(p as usize);
            }
        }
    }
    (all, corrupted)
}

fn normalize(v: &Value, how: Normalize) -> Value {
    let mut v = v.clone();
    match how {
        Normalize::Exact => {}
        Normalize::StripCiphers => {
            if let Some(recs) = v.get_mut("records").and_then(Value::as_array_mut) {
                for r in recs {
                    if let Some(m) = r.as_object_mut() {
                        m.remove("cipher");
                    }
                }
            }
        }
        Normalize::Multiset => {
            if let Some(msgs) = v.get_mut("msgs").and_then(Value::as_array_mut) {
                msgs.sort_by(|a, b| a.as_str().cmp(&b.as_str()));
            }
        }
        Normalize::MaskUrs => {
            if v.get("urs").is_some() {
                v["urs"] = Value::String("*".into());
            }
        }
    }
    v
}

fn project(trace: &Trace, party: usize, shift: u64, how: Normalize) -> Vec<Projected> {
    trace
        .events
        .iter()
        .filter(|e| e.label == "output" && e.actor.party_index() == Some(party))
        .map(|e| Projected {
            seq: e.seq,
            round: e.round.saturating_sub(shift),
            output: normalize(&e.payload, how),
        })
        .collect()
}

/// Honest parties whose raw urs outputs disagree within one trace.
fn urs_disagreement(trace: &Trace, honest: &BTreeSet<usize>) -> Option<(usize, u64)> {
    let mut first: Option<&Value> = None;
    for e in trace.events.iter().filter(|e| e.label == "output") {
        let Some(p) = e.actor.party_index() else { continue };
        if !honest.contains(&p) {
            continue;
        }
        let Some(u) = e.payload.get("urs") else { continue };
        match first {
            None => first = Some(u),
            Some(f) if f != u => return Some((p, e.seq)),
            _ => {}
        }
    }
    None
}

/// Projects the environment outputs of never-corrupted parties from both
/// traces and compares them party by party after the round shift.
pub fn align_and_compare(
    script_id: &str,
    protocol: &Trace,
    ideal: &Trace,
    rules: AlignRules,
) -> Result<EquivalenceReport, SimError> {
    let (pa, ca) = parties_of(protocol);
    let (pb, cb) = parties_of(ideal);
    if pa != pb || ca != cb {
        return Err(SimError::Config(format!(
            "traces disagree on parties: {pa:?} corrupted {ca:?} versus {pb:?} corrupted {cb:?}"
        )));
    }
    let honest: BTreeSet<usize> = pa.difference(&ca).copied().collect();
    let mut parties = Vec::new();
    let mut first: Option<Divergence> = None;
    for &p in &honest {
        let a = project(protocol, p, rules.shift, rules.normalize);
        let b = project(ideal, p, 0, rules.normalize);
        if first.is_none() {
            let len = a.len().max(b.len());
            for i in 0..len {
                let (x, y) = (a.get(i), b.get(i));
                let same = matches!((x, y), (Some(x), Some(y)) if x.round == y.round && x.output == y.output);
                if !same {
                    let reason = match (x, y) {
                        (Some(x), Some(y)) if x.round != y.round => {
                            format!("output round {} versus {}", x.round, y.round)
                        }
                        (Some(_), Some(_)) => "output content differs".to_string(),
                        (Some(_), None) => "extra protocol output".to_string(),
                        _ => "missing protocol output".to_string(),
                    };
                    first = Some(Divergence {
                        party: Some(p),
                        index: i,
                        protocol_seq: x.map(|o| o.seq),
                        ideal_seq: y.map(|o| o.seq),
                        reason,
                    });
                    break;
                }
            }
        }
        parties.push(PartyProjection {
            party: p,
            protocol: a,
            ideal: b,
        });
    }
    if rules.normalize == Normalize::MaskUrs && first.is_none() {
        for (side, t) in [("protocol", protocol), ("ideal", ideal)] {
            if let Some((p, seq)) = urs_disagreement(t, &honest) {
                let protocol_side = side == "protocol";
                first = Some(Divergence {
                    party: Some(p),
                    index: 0,
                    protocol_seq: protocol_side.then_some(seq),
                    ideal_seq: (!protocol_side).then_some(seq),
                    reason: format!("honest parties output different strings on the {side} side"),
                });
                break;
            }
        }
    }
    if rules.normalize == Normalize::Multiset && first.is_none() {
        let unsorted = ideal.events.iter().find(|e| {
            e.label == "output"
                && e.payload["msgs"]
                    .as_array()
                    .is_some_and(|m| m.windows(2).any(|w| w[0].as_str() > w[1].as_str()))
        });
        if let Some(e) = unsorted {
            first = Some(Divergence {
                party: e.actor.party_index(),
                index: 0,
                protocol_seq: None,
                ideal_seq: Some(e.seq),
                reason: "ideal batch is not in sorted order".into(),
            });
        }
    }
    Ok(EquivalenceReport {
        script: script_id.to_string(),
        rules,
        parties,
        verdict: if first.is_some() { Verdict::Divergent } else { Verdict::Equal },
        first_divergence: first,
    })
}

/// Runs both worlds of a script and compares them.
pub fn compare_scenario(script: &ScenarioScript) -> Result<EquivalenceReport, SimError> {
    let rules = AlignRules::for_script(script)?;
    let (real, ideal) = run_pair(script)?;
    let id = if script.name.is_empty() { script.stack.clone() } else { script.name.clone() };
    align_and_compare(&id, &real, &ideal, rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run_scenario;
    use crate::kernel::{Bytes, Input};

    fn sample() -> Trace {
        let s = ScenarioScript::new("ubc", 3, 5)
            .act(0, 0, Input::Broadcast { msg: Bytes::from_text("a") })
            .act(1, 2, Input::Broadcast { msg: Bytes::from_text("b") });
        run_scenario(&s).unwrap()
    }

    #[test]
    fn trace_equals_itself() {
        let t = sample();
        let r = align_and_compare("x", &t, &t, AlignRules::exact()).unwrap();
        assert!(r.is_equal());
        assert_eq!(r.parties.len(), 3);
    }

    #[test]
    fn flipped_byte_is_located() {
        let t = sample();
        let mut u = t.clone();
        let target = u.events.iter().position(|e| e.label == "output").unwrap();
        u.events[target].payload["msg"] = Value::String("62".into());
        let r = align_and_compare("x", &t, &u, AlignRules::exact()).unwrap();
        assert_eq!(r.verdict, Verdict::Divergent);
        let d = r.first_divergence.unwrap();
        assert_eq!(d.ideal_seq, Some(target as u64));
        assert_eq!(d.reason, "output content differs");
    }

    #[test]
    fn mismatched_parties_rejected() {
        let t = sample();
        let s = ScenarioScript::new("ubc", 2, 5);
        let u = run_scenario(&s).unwrap();
        assert!(align_and_compare("x", &t, &u, AlignRules::exact()).is_err());
    }

    #[test]
    fn multiset_ignores_batch_order() {
        let v = serde_json::json!({ "kind": "deliver", "msgs": ["62", "61"] });
        assert_eq!(normalize(&v, Normalize::Multiset)["msgs"], serde_json::json!(["61", "62"]));
    }
}
