//! Scenario configuration files.
//!
//! A config is a TOML document with the fields of [`ScenarioConfig`]; unknown
//! keys are rejected. Family parameters go in a `[params]` table and fall
//! back to the family defaults listed by `levy-filter list-families`.
//!
//! ```toml
//! family = "linear_gaussian"
//! horizon = 1.0
//! steps = 1000
//! particles = 10000
//! replicas = 50
//! seed = 20240611
//! test_functions = ["one", "x", "x2"]
//! diagnostics = ["oracle-diff", "innovation"]
//!
//! [params]
//! a = -1.0
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use levy_filter::model::{build_family, test_functions, MarkRule, Scenario, SharedTest};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagnostic {
    /// Residuals of the normalized and unnormalized filtering equations.
    Residuals,
    /// Innovation increments and compensated jump counts.
    Innovation,
    /// Mollified energy `‖S_ε ρ_t‖²` and its Gronwall constant.
    Energy,
    /// Distance between two Zakai runs on the same record.
    UniquenessProbe,
    /// Comparison against the Kalman–Bucy filter, the prior, or the
    /// importance-sampling oracle, whichever applies.
    OracleDiff,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Diagnostic::Residuals => "residuals",
            Diagnostic::Innovation => "innovation",
            Diagnostic::Energy => "energy",
            Diagnostic::UniquenessProbe => "uniqueness-probe",
            Diagnostic::OracleDiff => "oracle-diff",
        };
        f.write_str(s)
    }
}

fn default_horizon() -> f64 {
    1.0
}
fn default_replicas() -> usize {
    1
}
fn default_eps() -> Vec<f64> {
    vec![0.5]
}
fn default_tests() -> Vec<String> {
    ["one", "bump", "hermite1", "hermite2"].map(String::from).to_vec()
}
fn default_resample() -> f64 {
    0.5
}
fn default_mark_order() -> usize {
    16
}
fn default_oracle_samples() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Name of a parametric family.
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Number of uniform grid steps on `[0, horizon]`.
    pub steps: usize,
    pub particles: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub seed: u64,
    /// Mollifier widths for the energy and probe diagnostics.
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_tests")]
    pub test_functions: Vec<String>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    /// Resample when ESS drops below this fraction of the particle count.
    #[serde(default = "default_resample")]
    pub resample_ess: f64,
    /// Quadrature nodes per mark coordinate for compensator integrals.
    #[serde(default = "default_mark_order")]
    pub mark_order: usize,
    /// Keep clouds every this many nodes for energy and probe; defaults to
    /// a fiftieth of the step count.
    #[serde(default)]
    pub cloud_stride: Option<usize>,
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn has(&self, d: Diagnostic) -> bool {
        self.diagnostics.contains(&d)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn stride(&self) -> usize {
        self.cloud_stride.unwrap_or((self.steps / 50).max(1))
    }

    /// Check field ranges and build the system. Errors name the field.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon", format!("must be positive and finite, got {}", self.horizon));
        }
        if self.steps == 0 {
            return bad("steps", "must be at least 1".into());
        }
        if self.particles < 2 {
            return bad("particles", format!("need at least 2, got {}", self.particles));
        }
        if self.replicas == 0 {
            return bad("replicas", "must be at least 1".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return bad("eps", format!("widths must be positive, got {e}"));
        }
        if !(0.0..=1.0).contains(&self.resample_ess) {
            return bad("resample_ess", format!("must lie in [0, 1], got {}", self.resample_ess));
        }
        if self.mark_order == 0 {
            return bad("mark_order", "must be at least 1".into());
        }
        if self.cloud_stride == Some(0) {
            return bad("cloud_stride", "must be at least 1".into());
        }
        if self.oracle_samples < 2 {
            return bad("oracle_samples", "need at least 2".into());
        }
        if (self.has(Diagnostic::Energy) || self.has(Diagnostic::UniquenessProbe)) && self.eps.is_empty() {
            return bad("eps", "energy and probe diagnostics need at least one width".into());
        }
        if self.params.contains_key("horizon") {
            return bad("params.horizon", "set the top-level `horizon` instead".into());
        }
        let mut params = self.params.clone();
        params.insert("horizon".into(), self.horizon);
        let scenario = build_family(&self.family, &params).map_err(|e| CliError::Config(e.to_string()))?;
        let scenario = Scenario {
            spec: scenario.spec.with_mark_rule(MarkRule::Quadrature { order: self.mark_order }),
            ..scenario
        };
        let n = scenario.spec.dims.n;
        let tests = self
            .test_functions
            .iter()
            .map(|name| test_functions::by_name(name, n))
            .collect::<levy_filter::Result<Vec<_>>>()
            .map_err(|e| CliError::Config(format!("test_functions: {e}")))?;
        Ok(Resolved { scenario, tests })
    }
}

/// A config whose names have all been resolved.
pub struct Resolved {
    pub scenario: Scenario,
    pub tests: Vec<SharedTest>,
}

impl fmt::Debug for Resolved {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Resolved")
            .field("scenario", &self.scenario)
            .field("tests", &self.tests.iter().map(|t| t.name()).collect::<Vec<_>>())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "family = \"linear_gaussian\"\nsteps = 10\nparticles = 100\nseed = 1\n";

    #[test]
    fn defaults_fill_in() {
        let c = ScenarioConfig::from_toml(MINIMAL, "t").unwrap();
        assert_eq!(c.replicas, 1);
        assert_eq!(c.horizon, 1.0);
        assert_eq!(c.test_functions.len(), 4);
        assert!(c.resolve().is_ok());
        assert!((c.dt() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_names_the_field() {
        let err = ScenarioConfig::from_toml(&format!("{MINIMAL}colour = 3\n"), "t").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn unknown_family_names_the_field() {
        let c = ScenarioConfig::from_toml(&MINIMAL.replace("linear_gaussian", "bogus"), "t").unwrap();
        let err = c.resolve().unwrap_err();
        assert!(err.to_string().contains("family"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn ranges_are_checked() {
        let c = ScenarioConfig::from_toml(&format!("{MINIMAL}resample_ess = 2.0\n"), "t").unwrap();
        assert!(c.resolve().unwrap_err().to_string().contains("resample_ess"));
        let c = ScenarioConfig::from_toml(&format!("{MINIMAL}test_functions = [\"nope\"]\n"), "t").unwrap();
        assert!(c.resolve().unwrap_err().to_string().contains("test_functions"));
        let c = ScenarioConfig::from_toml(&format!("{MINIMAL}[params]\nhorizon = 2.0\n"), "t").unwrap();
        assert!(c.resolve().unwrap_err().to_string().contains("params.horizon"));
    }

    #[test]
    fn diagnostics_parse_in_kebab_case() {
        let c = ScenarioConfig::from_toml(&format!("{MINIMAL}diagnostics = [\"uniqueness-probe\", \"oracle-diff\"]\n"), "t").unwrap();
        assert!(c.has(Diagnostic::UniquenessProbe) && c.has(Diagnostic::OracleDiff));
        assert_eq!(Diagnostic::UniquenessProbe.to_string(), "uniqueness-probe");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ScenarioConfig::from_toml(MINIMAL, "t").unwrap();
        let back = ScenarioConfig::from_toml(&toml::to_string(&c).unwrap(), "t").unwrap();
        assert_eq!(c, back);
    }
}
