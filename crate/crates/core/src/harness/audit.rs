use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use super::registry::StackName;
use crate::error::SimError;
use crate::kernel::{EntityKind, Params, ScenarioScript, Trace};

/// Highest oracle usage seen for one caller in one round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BudgetRow {
    pub round: u64,
    pub caller: String,
    pub used: u64,
    pub q: u64,
}

/// How the adversary's path to a witness is accounted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// The fair-broadcast puzzle itself.
    Fbc,
    /// Time-lock ciphertext whose fair-broadcast layer is the two-round
    /// puzzle protocol: the adversary sees the outer puzzle at emission and
    /// must unroll it before the inner one.
    Composed,
    /// Time-lock ciphertext over an ideal fair broadcast: the adversary gets
    /// the ciphertext at its output-request round.
    Hybrid,
}

/// Timing bounds for one honest ciphertext.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CipherAudit {
    pub id: String,
    pub sender: usize,
    pub emitted: u64,
    pub q: u64,
    /// Dependent oracle calls needed to open the puzzle.
    pub steps: u64,
    pub honest_designated: u64,
    pub honest_earliest: Option<u64>,
    pub accounting: Accounting,
    pub adversary_available: u64,
    pub adversary_chain: u64,
    pub adversary_designated: u64,
    /// `None` when no party is ever corrupted, so the adversary has no
    /// oracle access.
    pub adversary_earliest: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: String,
    pub round: u64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub stack: String,
    pub budget: Vec<BudgetRow>,
    pub ciphertexts: Vec<CipherAudit>,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn caller_name(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Object(m) => match m.get("party").and_then(Value::as_u64) {
            Some(p) => format!("P{p}"),
            None => v.to_string(),
        },
        other => other.to_string(),
    }
}

fn header(trace: &Trace) -> Result<(String, ScenarioScript), SimError> {
    let ev = trace
        .events
        .iter()
        .find(|e| e.label == "scenario")
        .ok_or_else(|| SimError::Config("trace has no scenario header".into()))?;
    let p = &ev.payload;
    let stack = p["stack"].as_str().unwrap_or_default().to_string();
    let n = p["n"].as_u64().unwrap_or_default() as usize;
    let mut script = ScenarioScript::new(&stack, n, p["seed"].as_u64().unwrap_or_default());
    script.params = serde_json::from_value::<Params>(p["params"].clone())
        .map_err(|e| SimError::Config(format!("trace header parameters: {e}")))?;
    Ok((stack, script))
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b.max(1))
}

/// Earliest round by which a chain of `chain` dependent calls, available
/// from round `from`, is finished at `q` calls per round.
fn finish(from: u64, chain: u64, q: u64) -> u64 {
    from + ceil_div(chain, q).max(1) - 1
}

/// Checks a trace against the per-round oracle budget and, for every
/// ciphertext produced by an honest party, bounds the earliest round any
/// party could hold its witness.
///
/// Honest parties are read off the trace. The adversary is accounted
/// analytically: from the round it can see the puzzle (and some party is
/// corrupted) it spends the whole shared corrupted budget on this single
/// chain.
pub fn audit(trace: &Trace) -> Result<AuditReport, SimError> {
    trace.check_well_formed().map_err(SimError::Config)?;
    let (stack, script) = header(trace)?;
    let family = StackName::parse(&stack)?.family;
    let r = family.resolve(&script);
    let q = r.q as u64;

    let mut usage: BTreeMap<(u64, String), u64> = BTreeMap::new();
    let mut first_corruption: Option<u64> = None;
    let mut completions: BTreeMap<String, Vec<(u64, u64)>> = BTreeMap::new();
    for e in &trace.events {
        match e.label.as_str() {
            "ro_batch" => {
                let used = e.payload["used"].as_u64().unwrap_or_default();
                let slot = usage.entry((e.round, caller_name(&e.payload["caller"]))).or_default();
                *slot = (*slot).max(used);
            }
            "corrupt" if e.actor.kind == EntityKind::Adversary => {
                first_corruption.get_or_insert(e.round);
            }
            "witness_complete" => {
                let id = e.payload["id"].as_str().unwrap_or_default().to_string();
                let calls = e.payload["calls"].as_u64().unwrap_or_default();
                completions.entry(id).or_default().push((e.round, calls));
            }
            _ => {}
        }
    }

    let mut violations = Vec::new();
    let budget: Vec<BudgetRow> = usage
        .into_iter()
        .map(|((round, caller), used)| BudgetRow { round, caller, used, q })
        .collect();
    for row in &budget {
        if row.used > q {
            violations.push(Violation {
                kind: "budget".into(),
                round: row.round,
                detail: format!("{} made {} calls with q = {q}", row.caller, row.used),
            });
        }
    }

    let composed = (r.delta, r.alpha) == (2, 2);
    let mut ciphertexts = Vec::new();
    for e in &trace.events {
        let is_fbc = e.label == "fbc_emit";
        if !(is_fbc || e.label == "tle_emit") || e.payload["honest"] != Value::Bool(true) {
            continue;
        }
        let Some(sender) = e.actor.party_index() else { continue };
        let id = e.payload["id"].as_str().unwrap_or_default().to_string();
        let steps = e.payload["steps"].as_u64().unwrap_or_default();
        let em = e.round;
        let mut c = if is_fbc {
            CipherAudit {
                id: id.clone(),
                sender,
                emitted: em,
                q,
                steps,
                honest_designated: em + 2,
                honest_earliest: None,
                accounting: Accounting::Fbc,
                adversary_available: em,
                adversary_chain: steps,
                adversary_designated: em + r.delta - r.alpha,
                adversary_earliest: None,
            }
        } else {
            let tau = e.payload["tau"].as_u64().unwrap_or_default();
            let tau_dec = e.payload["tau_dec"].as_u64().unwrap_or_default();
            let (accounting, available, chain) = if composed {
                (Accounting::Composed, em, 2 * q + steps)
            } else {
                (Accounting::Hybrid, em + r.delta - r.alpha, steps)
            };
            CipherAudit {
                id: id.clone(),
                sender,
                emitted: em,
                q,
                steps,
                honest_designated: em + r.delta + tau_dec.max(1) - 1,
                honest_earliest: None,
                accounting,
                adversary_available: available,
                adversary_chain: chain,
                adversary_designated: tau.saturating_sub(r.alpha),
                adversary_earliest: None,
            }
        };
        if let Some(done) = completions.get(&id) {
            c.honest_earliest = done.iter().map(|d| d.0).min();
            for &(round, calls) in done {
                if calls < steps {
                    violations.push(Violation {
                        kind: "witness".into(),
                        round,
                        detail: format!("{id} completed after {calls} of {steps} dependent calls"),
                    });
                }
            }
        }
        if let Some(h) = c.honest_earliest {
            if h < c.honest_designated {
                violations.push(Violation {
                    kind: "honest_early".into(),
                    round: h,
                    detail: format!("{id} opened by an honest party at {h}, designated {}", c.honest_designated),
                });
            }
        }
        c.adversary_earliest =
            first_corruption.map(|fc| finish(c.adversary_available.max(fc), c.adversary_chain, q));
        if let Some(a) = c.adversary_earliest {
            if a < c.adversary_designated {
                violations.push(Violation {
                    kind: "adversary_early".into(),
                    round: a,
                    detail: format!(
                        "{id} can be opened by the adversary at {a}, {} round(s) before its designated round {}",
                        c.adversary_designated - a,
                        c.adversary_designated
                    ),
                });
            }
        }
        ciphertexts.push(c);
    }
    Ok(AuditReport {
        stack,
        budget,
        ciphertexts,
        violations,
    })
}
