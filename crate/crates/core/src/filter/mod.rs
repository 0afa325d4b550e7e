//! Weighted-particle Zakai filter, its Kallianpur–Striebel normalization,
//! innovations and residuals of both filtering equations.

mod cloud;
mod probe;
mod residual;
mod zakai;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use cloud::{estimate_moment, normalize, resample, systematic_indices, CloudKind, ParticleCloud, ResamplePolicy};
pub use probe::{pathwise_uniqueness_probe, DistancePath};
pub use residual::{innovation_process, ks_residual, zakai_residual, Innovations, ResidualPath};
pub use zakai::zakai_filter;

use crate::model::{MarkSample, SharedTest};
use crate::{Error, Exec, Result};

/// Particles per work item. Reductions sum inside a chunk first and then
/// across chunks in index order, so results do not depend on the backend.
pub const CHUNK: usize = 1024;

#[derive(Clone)]
pub struct FilterOptions {
    pub particles: usize,
    pub seed: u64,
    pub resample: ResamplePolicy,
    /// Test functions whose posterior moments are recorded at every node.
    pub tests: Vec<SharedTest>,
    /// Record the gain terms needed by the residual checks.
    pub track_residuals: bool,
    /// Keep the full cloud every `k` nodes (and at the last node).
    pub keep_clouds: Option<usize>,
    pub exec: Exec,
}

impl FilterOptions {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            seed,
            resample: ResamplePolicy::default(),
            tests: Vec::new(),
            track_residuals: false,
            keep_clouds: None,
            exec: Exec::default(),
        }
    }

    pub fn with_tests(mut self, tests: Vec<SharedTest>) -> Self {
        self.tests = tests;
        self
    }

    pub fn with_residuals(mut self, on: bool) -> Self {
        self.track_residuals = on;
        self
    }

    pub fn with_clouds(mut self, stride: usize) -> Self {
        self.keep_clouds = Some(stride.max(1));
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_resample(mut self, policy: ResamplePolicy) -> Self {
        self.resample = policy;
        self
    }
}

impl fmt::Debug for FilterOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterOptions")
            .field("particles", &self.particles)
            .field("seed", &self.seed)
            .field("resample", &self.resample)
            .field("tests", &self.tests.iter().map(|t| t.name()).collect::<Vec<_>>())
            .field("track_residuals", &self.track_residuals)
            .field("keep_clouds", &self.keep_clouds)
            .field("exec", &self.exec)
            .finish()
    }
}

/// Posterior summaries of the cloud at one node, before any resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub t: f64,
    pub log_mass: f64,
    /// `P̃_t(1)`
    pub mass: f64,
    pub ess: f64,
    /// `π_t(x_i)`
    pub mean: Vec<f64>,
    /// `π_t(x_i²)`
    pub second: Vec<f64>,
    /// `π_t(F_k)` for the configured test functions.
    pub tests: Vec<f64>,
    /// `P̃_t(F_k)`
    pub zakai_tests: Vec<f64>,
    /// `π_t(h)`
    pub h: Vec<f64>,
    /// `π_t(∫ λ ν₂)`
    pub lambda_bar: f64,
    pub resampled: bool,
}

impl NodeSummary {
    pub fn variance(&self, i: usize) -> f64 {
        self.second[i] - self.mean[i] * self.mean[i]
    }
}

/// Posterior quantities entering the gain terms at a node. Matrices are
/// row-major with one row per test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainData {
    /// `π(ℒF_k)`
    pub gen: Vec<f64>,
    /// `π(F_k h_l)`, `K × m`
    pub fh: Vec<f64>,
    /// `π((∇F_k)ᵀ C)_l`, `K × m`
    pub grad_c: Vec<f64>,
    /// `π(λ(·, u_q))` on the frozen observation mark sample
    pub lam: Vec<f64>,
    /// `π(F_k λ(·, u_q))`, `K × M`
    pub flam: Vec<f64>,
}

/// Pre-update posterior at an observed jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpGain {
    pub node: usize,
    pub t: f64,
    pub mark: Vec<f64>,
    /// `P_{τ−}(F_k)`
    pub tests: Vec<f64>,
    /// `P_{τ−}(λ(τ,·,u))`
    pub lam: f64,
    /// `P_{τ−}(F_k λ(τ,·,u))`
    pub flam: Vec<f64>,
    /// `P̃_{τ−}(1)`
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct FilterTrajectory {
    pub times: Vec<f64>,
    pub nodes: Vec<NodeSummary>,
    pub gains: Option<Vec<GainData>>,
    pub jumps: Vec<JumpGain>,
    pub test_names: Vec<String>,
    /// `(node, cloud)` pairs when clouds are kept.
    pub clouds: Vec<(usize, ParticleCloud)>,
    pub normalized: bool,
    pub marks2: MarkSample,
    pub particles: usize,
    pub seed: u64,
}

impl FilterTrajectory {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn test_index(&self, name: &str) -> Option<usize> {
        self.test_names.iter().position(|n| n == name)
    }

    /// `π_t(F_k)` along the trajectory.
    pub fn test_path(&self, k: usize) -> Vec<f64> {
        self.nodes.iter().map(|s| s.tests[k]).collect()
    }

    pub fn mean_path(&self, i: usize) -> Vec<f64> {
        self.nodes.iter().map(|s| s.mean[i]).collect()
    }

    pub fn mass_path(&self) -> Vec<f64> {
        self.nodes.iter().map(|s| s.mass).collect()
    }

    pub fn cloud_at(&self, node: usize) -> Option<&ParticleCloud> {
        self.clouds.iter().find(|(j, _)| *j == node).map(|(_, c)| c)
    }
}

/// Kallianpur–Striebel normalization of a Zakai trajectory: kept clouds are
/// normalized and the trajectory is flagged as representing `π_t`. Summaries
/// already carry `π_t(F) = P̃_t(F)/P̃_t(1)`.
pub fn normalize_ks(traj: &FilterTrajectory) -> Result<FilterTrajectory> {
    if let Some(s) = traj.nodes.iter().find(|s| !(s.mass > 0.0 && s.mass.is_finite())) {
        return Err(Error::Degeneracy { t: s.t, detail: format!("total mass {} cannot be normalized", s.mass) });
    }
    let clouds = traj
        .clouds
        .iter()
        .map(|(j, c)| Ok((*j, normalize(c)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FilterTrajectory { clouds, normalized: true, ..traj.clone() })
}
