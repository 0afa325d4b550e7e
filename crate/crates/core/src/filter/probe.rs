use serde::{Deserialize, Serialize};

use super::zakai::zakai_filter_with_drivers;
use super::FilterOptions;
use crate::girsanov::reconstruct_reference_drivers;
use crate::model::{Prior, SystemSpec};
use crate::mollify::{energy_distance_auto, Atoms};
use crate::simulate::ObservationRecord;
use crate::Result;

/// `t ↦ ‖S_ε(ρ¹_t − ρ²_t)‖` between two Zakai runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistancePath {
    pub eps: f64,
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
}

impl DistancePath {
    pub fn sup(&self) -> f64 {
        self.distance.iter().copied().fold(0.0, f64::max)
    }
}

/// Run the Zakai filter twice on the same record with particle seeds
/// `seeds.0` and `seeds.1` and compare the unnormalized clouds at every
/// kept node (every node unless `opts.keep_clouds` says otherwise).
pub fn pathwise_uniqueness_probe(
    obs: &ObservationRecord,
    spec: &SystemSpec,
    prior: &Prior,
    opts: &FilterOptions,
    seeds: (u64, u64),
    eps: f64,
) -> Result<DistancePath> {
    let drivers = reconstruct_reference_drivers(obs, spec)?;
    let stride = opts.keep_clouds.unwrap_or(1);
    let run = |seed| {
        let o = FilterOptions { seed, keep_clouds: Some(stride), tests: Vec::new(), track_residuals: false, ..opts.clone() };
        zakai_filter_with_drivers(obs, &drivers, spec, prior, &o)
    };
    let a = run(seeds.0)?;
    let b = run(seeds.1)?;
    let mut out = DistancePath { eps, times: Vec::with_capacity(a.clouds.len()), distance: Vec::with_capacity(a.clouds.len()) };
    for ((_, ca), (_, cb)) in a.clouds.iter().zip(&b.clouds) {
        let (ma, mb) = (Atoms::from_cloud(ca)?, Atoms::from_cloud(cb)?);
        out.times.push(ca.t);
        out.distance.push(energy_distance_auto(&ma, &mb, eps)?);
    }
    Ok(out)
}
