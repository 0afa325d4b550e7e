//! `replay`: re-run a manifest and compare every recorded output byte for
//! byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::run::{run_scenario, Manifest};

pub const REPLAY_REPORT: &str = "replay_report.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub file: String,
    /// 1-based line of the first difference, when both files exist.
    pub line: Option<usize>,
    pub original: Option<String>,
    pub replayed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub manifest: PathBuf,
    pub replay_dir: PathBuf,
    pub compared: usize,
    pub identical: bool,
    pub mismatches: Vec<Mismatch>,
}

fn first_difference(a: &str, b: &str) -> (usize, Option<String>, Option<String>) {
    let (mut la, mut lb) = (a.lines(), b.lines());
    let mut k = 1;
    loop {
        match (la.next(), lb.next()) {
            (Some(x), Some(y)) if x == y => k += 1,
            (None, None) => return (k, None, None),
            (x, y) => return (k, x.map(String::from), y.map(String::from)),
        }
    }
}

fn compare(file: &str, original: &Path, replayed: &Path) -> Result<Option<Mismatch>, CliError> {
    let a = std::fs::read(original).map_err(CliError::io(original))?;
    let b = match std::fs::read(replayed) {
        Ok(b) => b,
        Err(_) => return Ok(Some(Mismatch { file: file.into(), line: None, original: None, replayed: None })),
    };
    if a == b {
        return Ok(None);
    }
    let (line, x, y) = first_difference(&String::from_utf8_lossy(&a), &String::from_utf8_lossy(&b));
    Ok(Some(Mismatch { file: file.into(), line: Some(line), original: x, replayed: y }))
}

/// Re-run the manifest's config into `out` (default: `replay/` beside the
/// manifest) and compare each listed output with the original.
pub fn replay(manifest_path: &Path, out: Option<&Path>) -> Result<ReplayReport, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    for f in manifest.event_files.iter().chain(&manifest.outputs) {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(CliError::MissingInput(p));
        }
    }
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("replay"));
    if target == dir {
        return Err(CliError::Config("replay output directory must differ from the original run".into()));
    }
    run_scenario(&manifest.config, &target)?;
    let mut mismatches = Vec::new();
    for f in &manifest.outputs {
        if let Some(m) = compare(f, &dir.join(f), &target.join(f))? {
            mismatches.push(m);
        }
    }
    let report = ReplayReport {
        manifest: manifest_path.to_path_buf(),
        replay_dir: target.clone(),
        compared: manifest.outputs.len(),
        identical: mismatches.is_empty(),
        mismatches,
    };
    let path = target.join(REPLAY_REPORT);
    let text = serde_json::to_string_pretty(&report).expect("replay report serializes");
    std::fs::write(&path, text + "\n").map_err(CliError::io(&path))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_difference_locates_the_line() {
        assert_eq!(first_difference("a\nb\nc", "a\nb\nc"), (4, None, None));
        assert_eq!(first_difference("a\nb\nc", "a\nx\nc"), (2, Some("b".into()), Some("x".into())));
        assert_eq!(first_difference("a\nb", "a"), (2, Some("b".into()), None));
    }
}
