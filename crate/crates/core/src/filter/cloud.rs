use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SeedTree;
use crate::stats::pairwise_sum;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CloudKind {
    /// Represents `ρ_t = P̃_t`; the total mass is `exp(log_offset)·mean(exp(lw))`.
    Unnormalized,
    /// Represents `π_t`; `exp(lw)` sums to one.
    Normalized,
}

/// Weighted empirical measure `Σ wᵢ δ_{xᵢ}` with log-weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub t: f64,
    pub n: usize,
    pub positions: Vec<f64>,
    pub log_weights: Vec<f64>,
    /// Log of a scalar multiplier carried through resampling.
    pub log_offset: f64,
    pub kind: CloudKind,
}

impl ParticleCloud {
    /// Equal-weight unnormalized cloud of unit mass.
    pub fn uniform(t: f64, n: usize, positions: Vec<f64>) -> Self {
        let count = positions.len() / n.max(1);
        Self { t, n, positions, log_weights: vec![0.0; count], log_offset: 0.0, kind: CloudKind::Unnormalized }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.n..(i + 1) * self.n]
    }

    fn max_log_weight(&self, t: f64) -> Result<f64> {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max.is_finite() {
            Ok(max)
        } else {
            Err(Error::Degeneracy { t, detail: format!("largest log-weight is {max}") })
        }
    }

    /// `exp(lwᵢ − max)` and their sum.
    pub fn shifted_weights(&self) -> Result<(f64, Vec<f64>, f64)> {
        let max = self.max_log_weight(self.t)?;
        let e: Vec<f64> = self.log_weights.iter().map(|l| (l - max).exp()).collect();
        let s = pairwise_sum(&e);
        Ok((max, e, s))
    }

    /// Log of the total mass; zero for normalized clouds.
    pub fn log_mass(&self) -> Result<f64> {
        match self.kind {
            CloudKind::Normalized => Ok(0.0),
            CloudKind::Unnormalized => {
                let (max, _, s) = self.shifted_weights()?;
                let lm = self.log_offset + max + s.ln() - (self.len() as f64).ln();
                if lm.is_finite() {
                    Ok(lm)
                } else {
                    Err(Error::Degeneracy { t: self.t, detail: format!("total mass overflowed (log mass {lm})") })
                }
            }
        }
    }

    pub fn mass(&self) -> Result<f64> {
        Ok(self.log_mass()?.exp())
    }

    /// Normalized weights.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let (_, mut e, s) = self.shifted_weights()?;
        e.iter_mut().for_each(|w| *w /= s);
        Ok(e)
    }

    /// `1 / Σ wᵢ²` for the normalized weights.
    pub fn ess(&self) -> Result<f64> {
        let (_, e, s) = self.shifted_weights()?;
        let sq: Vec<f64> = e.iter().map(|w| w * w).collect();
        Ok(s * s / pairwise_sum(&sq))
    }
}

/// Kallianpur–Striebel normalization of a cloud. Already-normalized input is
/// returned unchanged.
pub fn normalize(cloud: &ParticleCloud) -> Result<ParticleCloud> {
    if cloud.kind == CloudKind::Normalized {
        return Ok(cloud.clone());
    }
    let (max, _, s) = cloud.shifted_weights()?;
    let ln_s = s.ln();
    Ok(ParticleCloud {
        t: cloud.t,
        n: cloud.n,
        positions: cloud.positions.clone(),
        log_weights: cloud.log_weights.iter().map(|l| l - max - ln_s).collect(),
        log_offset: 0.0,
        kind: CloudKind::Normalized,
    })
}

/// `⟨cloud, F⟩`: the weighted average for normalized clouds, the
/// mass-weighted sum for unnormalized ones.
pub fn estimate_moment(cloud: &ParticleCloud, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let (max, e, s) = cloud.shifted_weights()?;
    let mut terms = Vec::with_capacity(cloud.len());
    for (i, w) in e.iter().enumerate() {
        let v = f(cloud.position(i));
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "test function value".into(), index: i });
        }
        terms.push(w * v);
    }
    let sf = pairwise_sum(&terms);
    Ok(match cloud.kind {
        CloudKind::Normalized => sf / s,
        CloudKind::Unnormalized => (cloud.log_offset + max - (cloud.len() as f64).ln()).exp() * sf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplePolicy {
    /// Resample when `ESS < ess_threshold · N`; zero disables resampling.
    pub ess_threshold: f64,
}

impl Default for ResamplePolicy {
    fn default() -> Self {
        Self { ess_threshold: 0.5 }
    }
}

/// Systematic resampling indices for normalized weights and one uniform.
pub fn systematic_indices(weights: &[f64], u: f64, out: &mut Vec<usize>) {
    let n = weights.len();
    out.clear();
    let step = 1.0 / n as f64;
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let p = (u + i as f64) * step;
        while p > cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
}

/// Systematic resampling when the effective sample size falls below the
/// policy threshold. The total mass is kept in the log-offset.
pub fn resample(cloud: &ParticleCloud, policy: ResamplePolicy, seed: u64) -> Result<ParticleCloud> {
    let n = cloud.len();
    if cloud.ess()? >= policy.ess_threshold * n as f64 {
        return Ok(cloud.clone());
    }
    let u: f64 = SeedTree::new(seed).child("resample").rng().random();
    resample_with(cloud, u)
}

pub(crate) fn resample_with(cloud: &ParticleCloud, u: f64) -> Result<ParticleCloud> {
    let w = cloud.weights()?;
    let mut idx = Vec::with_capacity(w.len());
    systematic_indices(&w, u, &mut idx);
    let mut positions = Vec::with_capacity(cloud.positions.len());
    for &i in &idx {
        positions.extend_from_slice(cloud.position(i));
    }
    let log_offset = match cloud.kind {
        CloudKind::Unnormalized => cloud.log_mass()?,
        CloudKind::Normalized => 0.0,
    };
    let uniform = match cloud.kind {
        CloudKind::Unnormalized => 0.0,
        CloudKind::Normalized => -(w.len() as f64).ln(),
    };
    Ok(ParticleCloud {
        t: cloud.t,
        n: cloud.n,
        positions,
        log_weights: vec![uniform; w.len()],
        log_offset,
        kind: cloud.kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pos: &[f64], lw: &[f64], kind: CloudKind) -> ParticleCloud {
        ParticleCloud { t: 0.0, n: 1, positions: pos.to_vec(), log_weights: lw.to_vec(), log_offset: 0.0, kind }
    }

    #[test]
    fn moments_of_small_clouds() {
        let c = cloud(&[1.0, 3.0], &[0.0, 0.0], CloudKind::Unnormalized);
        let p = normalize(&c).unwrap();
        assert_eq!(estimate_moment(&p, |x| x[0]).unwrap(), 2.0);
        assert_eq!(estimate_moment(&p, |_| 1.0).unwrap(), 1.0);
        assert_eq!(estimate_moment(&p, |x| x[0] * x[0]).unwrap(), 5.0);
        assert!((estimate_moment(&c, |_| 1.0).unwrap() - c.mass().unwrap()).abs() < 1e-15);
    }

    #[test]
    fn normalization_is_idempotent() {
        let c = cloud(&[1.0, 2.0, 4.0], &[0.3, -1.0, 2.0], CloudKind::Unnormalized);
        let p = normalize(&c).unwrap();
        let q = normalize(&p).unwrap();
        assert_eq!(p.log_weights, q.log_weights);
        let s: f64 = p.weights().unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_limit_is_point_mass() {
        let c = cloud(&[1.0, 3.0], &[0.0, -1e300], CloudKind::Unnormalized);
        let p = normalize(&c).unwrap();
        assert_eq!(estimate_moment(&p, |x| x[0]).unwrap(), 1.0);
    }

    #[test]
    fn all_minus_infinity_is_degenerate() {
        let c = cloud(&[1.0, 3.0], &[f64::NEG_INFINITY; 2], CloudKind::Unnormalized);
        assert!(matches!(normalize(&c), Err(Error::Degeneracy { .. })));
    }

    #[test]
    fn non_finite_test_value_names_particle() {
        let c = cloud(&[1.0, 0.0], &[0.0, 0.0], CloudKind::Normalized);
        match estimate_moment(&c, |x| 1.0 / x[0]) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ess_and_resampling() {
        let half = cloud(&[0.0; 4], &[0.5f64.ln(), 0.5f64.ln(), f64::NEG_INFINITY, f64::NEG_INFINITY], CloudKind::Normalized);
        assert!((half.ess().unwrap() - 2.0).abs() < 1e-12);

        let flat = cloud(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], CloudKind::Unnormalized);
        assert_eq!(resample(&flat, ResamplePolicy { ess_threshold: 0.5 }, 1).unwrap(), flat);

        let point = cloud(&[1.0, 2.0, 3.0, 4.0], &[0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], CloudKind::Unnormalized);
        let r = resample(&point, ResamplePolicy { ess_threshold: 0.5 }, 1).unwrap();
        assert_eq!(r.positions, vec![1.0; 4]);
        assert!((r.mass().unwrap() - point.mass().unwrap()).abs() < 1e-15);
    }
}
