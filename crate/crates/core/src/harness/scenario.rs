use std::path::Path;

use crate::error::SimError;
use crate::kernel::{ScenarioScript, Trace};

/// Parses a scenario script, reporting JSON syntax and shape errors with
/// their line and column.
pub fn parse_scenario(text: &str) -> Result<ScenarioScript, SimError> {
    let script: ScenarioScript = serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        SimError::Parse {
            line: e.line(),
            col: e.column(),
            msg: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
        }
    })?;
    script.validate().map_err(SimError::Config)?;
    Ok(script)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioScript, SimError> {
    let text = read(path)?;
    parse_scenario(&text)
}

pub fn load_trace(path: &Path) -> Result<Trace, SimError> {
    Trace::from_jsonl(&read(path)?)
}

fn read(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}
