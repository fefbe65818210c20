use std::path::{Path, PathBuf};

use super::scenario::load_scenario;
use crate::error::SimError;
use crate::kernel::ScenarioScript;

/// Directory holding the bundled scenarios, one subdirectory per suite.
pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), SimError> {
    let entries = std::fs::read_dir(dir).map_err(|e| SimError::Io(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| SimError::Io(e.to_string()))?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else if path.extension().is_some_and(|x| x == "json") {
            out.push(path);
        }
    }
    Ok(())
}

/// Every `.json` scenario below `dir`, sorted by path.
pub fn load_corpus(dir: &Path) -> Result<Vec<(PathBuf, ScenarioScript)>, SimError> {
    let mut paths = Vec::new();
    collect(dir, &mut paths)?;
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let s = load_scenario(&p).map_err(|e| SimError::Config(format!("{}: {e}", p.display())))?;
            Ok((p, s))
        })
        .collect()
}

/// The scenarios of one suite, such as `fbc` or `tle_31`.
pub fn load_suite(name: &str) -> Result<Vec<(PathBuf, ScenarioScript)>, SimError> {
    load_corpus(&corpus_dir().join(name))
}
