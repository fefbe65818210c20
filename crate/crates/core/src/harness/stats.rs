use std::collections::BTreeMap;

use serde::Serialize;

use super::registry::run_scenario;
use crate::error::SimError;
use crate::kernel::{EntityKind, ScenarioScript, Trace};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SBC_SIM_THREADS";

/// What one seeded run produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    /// Honest outputs rendered as one line per party, in party order.
    pub outputs: String,
    /// The first honest random-string output, if any.
    pub urs: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub scenario: String,
    pub trials: usize,
    pub threads: usize,
    /// Distinct honest output patterns and how often each occurred.
    pub outcomes: BTreeMap<String, usize>,
    /// Per-bit frequency of ones over the random-string outputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bit_frequency: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_bias: Option<f64>,
}

/// Worker count: the available parallelism, capped by the environment
/// variable and by the number of trials.
pub fn thread_count(trials: usize) -> usize {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&c| c > 0)
        .unwrap_or(avail);
    cap.min(avail).min(trials).max(1)
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

fn summarize(trial: usize, seed: u64, trace: &Trace) -> TrialSummary {
    let mut per_party: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut urs = None;
    for e in &trace.events {
        if e.label != "output" || e.actor.kind != EntityKind::Party {
            continue;
        }
        let Some(p) = e.actor.party_index() else { continue };
        if let Some(u) = e.payload.get("urs").and_then(|u| u.as_str()) {
            urs.get_or_insert_with(|| u.to_string());
            per_party.entry(p).or_default().push("urs".into());
        } else {
            per_party.entry(p).or_default().push(e.payload.to_string());
        }
    }
    let outputs = per_party
        .iter()
        .map(|(p, outs)| format!("P{p}: {}", outs.join(" ")))
        .collect::<Vec<_>>()
        .join("\n");
    TrialSummary {
        trial,
        seed,
        outputs,
        urs,
    }
}

/// Runs `trials` copies of the script with consecutive seeds and returns
/// their summaries in trial order.
pub fn run_trials(script: &ScenarioScript, trials: usize, threads: usize) -> Result<Vec<TrialSummary>, SimError> {
    let threads = threads.clamp(1, trials.max(1));
    let run_one = |i: usize| -> Result<TrialSummary, SimError> {
        let mut s = script.clone();
        s.seed = trial_seed(script.seed, i);
        let trace = run_scenario(&s)?;
        Ok(summarize(i, s.seed, &trace))
    };
    let mut slots: Vec<Option<Result<TrialSummary, SimError>>> = (0..trials).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = trials.div_ceil(threads).max(1);
        for (c, part) in slots.chunks_mut(chunk).enumerate() {
            let run_one = &run_one;
            scope.spawn(move || {
                for (k, slot) in part.iter_mut().enumerate() {
                    *slot = Some(run_one(c * chunk + k));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every trial ran")).collect()
}

fn bit_frequency(urs: &[Vec<u8>]) -> Option<Vec<f64>> {
    let len = urs.first()?.len();
    let mut ones = vec![0usize; len * 8];
    for u in urs.iter().filter(|u| u.len() == len) {
        for (i, byte) in u.iter().enumerate() {
            for b in 0..8 {
                if byte >> (7 - b) & 1 == 1 {
                    ones[i * 8 + b] += 1;
                }
            }
        }
    }
    Some(ones.into_iter().map(|c| c as f64 / urs.len() as f64).collect())
}

pub fn stats(script: &ScenarioScript, trials: usize, threads: usize) -> Result<StatsReport, SimError> {
    if trials == 0 {
        return Err(SimError::Config("trials must be at least 1".into()));
    }
    let threads = threads.clamp(1, trials);
    let runs = run_trials(script, trials, threads)?;
    let mut outcomes = BTreeMap::new();
    for r in &runs {
        *outcomes.entry(r.outputs.clone()).or_insert(0) += 1;
    }
    let urs: Vec<Vec<u8>> = runs
        .iter()
        .filter_map(|r| r.urs.as_ref().and_then(|h| hex::decode(h).ok()))
        .collect();
    let bit_frequency = if urs.is_empty() { None } else { bit_frequency(&urs) };
    let max_bias = bit_frequency
        .as_ref()
        .map(|f| f.iter().map(|x| (x - 0.5).abs()).fold(0.0, f64::max));
    Ok(StatsReport {
        scenario: if script.name.is_empty() { script.stack.clone() } else { script.name.clone() },
        trials,
        threads,
        outcomes,
        bit_frequency,
        max_bias,
    })
}
