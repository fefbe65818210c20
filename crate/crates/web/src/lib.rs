//! Browser bindings: pick or paste a scenario, run one world, compare the
//! two worlds, or audit the resulting trace.

use simulcast::harness::{self, StackName};
use simulcast::kernel::Trace;
use wasm_bindgen::prelude::*;

/// Scenarios bundled into the page, as `(name, json)`.
pub const PRESETS: [(&str, &str); 6] = [
    ("fbc_basic", include_str!("../../core/scenarios/fbc/fbc_basic.json")),
    ("fbc_postlock", include_str!("../../core/scenarios/fbc/fbc_postlock.json")),
    ("tle_31_static", include_str!("../../core/scenarios/tle_31/tle_31_static.json")),
    ("sbc_midround", include_str!("../../core/scenarios/sbc/sbc_midround.json")),
    ("durs_basic", include_str!("../../core/scenarios/durs/durs_basic.json")),
    ("vote_double", include_str!("../../core/scenarios/vote/vote_double.json")),
];

pub fn run_trace(scenario: &str, ideal: bool) -> Result<String, String> {
    let script = harness::parse_scenario(scenario).map_err(|e| e.to_string())?;
    let mut name = StackName::parse(&script.stack).map_err(|e| e.to_string())?;
    name.ideal |= ideal;
    let trace = harness::run_world(&script, name).map_err(|e| e.to_string())?;
    Ok(trace.to_jsonl())
}

pub fn compare_report(scenario: &str) -> Result<String, String> {
    let script = harness::parse_scenario(scenario).map_err(|e| e.to_string())?;
    let report = harness::compare_scenario(&script).map_err(|e| e.to_string())?;
    serde_json::to_string_pretty(&report).map_err(|e| e.to_string())
}

pub fn audit_report(trace: &str) -> Result<String, String> {
    let trace = Trace::from_jsonl(trace).map_err(|e| e.to_string())?;
    let report = harness::audit(&trace).map_err(|e| e.to_string())?;
    serde_json::to_string_pretty(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn preset_names() -> Vec<String> {
    PRESETS.iter().map(|(n, _)| n.to_string()).collect()
}

#[wasm_bindgen]
pub fn preset(name: &str) -> Option<String> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| s.to_string())
}

/// Runs the scenario and returns its trace as JSON lines.
#[wasm_bindgen]
pub fn run(scenario: &str, ideal: bool) -> Result<String, JsError> {
    run_trace(scenario, ideal).map_err(|e| JsError::new(&e))
}

/// Runs both worlds and returns the equivalence report.
#[wasm_bindgen]
pub fn compare(scenario: &str) -> Result<String, JsError> {
    compare_report(scenario).map_err(|e| JsError::new(&e))
}

/// Audits a trace produced by [`run`].
#[wasm_bindgen]
pub fn audit(trace: &str) -> Result<String, JsError> {
    audit_report(trace).map_err(|e| JsError::new(&e))
}
