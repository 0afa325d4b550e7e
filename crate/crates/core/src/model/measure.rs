//! Finite-activity Lévy measures `ν = rate · law(u)` on a mark space `ℝᵏ`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One-dimensional quadrature nodes and weights.
type AxisRule = (Vec<f64>, Vec<f64>);

/// Distribution of a single mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MarkLaw {
    /// Every jump carries the same mark.
    Point(Vec<f64>),
    /// Finitely many marks with probabilities summing to one.
    Atoms { points: Vec<Vec<f64>>, probs: Vec<f64> },
    /// Independent Gaussian coordinates.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    /// Independent uniform coordinates on `[low, high]`.
    Uniform { low: Vec<f64>, high: Vec<f64> },
}

impl MarkLaw {
    pub fn dim(&self) -> usize {
        match self {
            MarkLaw::Point(p) => p.len(),
            MarkLaw::Atoms { points, .. } => points.first().map_or(0, Vec::len),
            MarkLaw::Gaussian { mean, .. } => mean.len(),
            MarkLaw::Uniform { low, .. } => low.len(),
        }
    }
}

/// How the compensator integrals `∫ g(u) ν(du)` are discretised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkRule {
    /// Exact atoms for atomic laws, Gauss–Hermite / Gauss–Legendre tensor
    /// rules with `order` nodes per coordinate otherwise.
    Quadrature { order: usize },
    /// `count` i.i.d. marks from the law, drawn once from `seed`.
    MonteCarlo { count: usize, seed: u64 },
}

impl Default for MarkRule {
    fn default() -> Self {
        MarkRule::Quadrature { order: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    Exact,
    Quadrature,
    MonteCarlo,
}

/// A frozen set of mark nodes with `ν`-mass weights. Reused by every
/// compensator evaluation so that repeated integrals share the same nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkSample {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: SampleKind,
}

impl MarkSample {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
            weights: Vec::new(),
            kind: SampleKind::Exact,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mark(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ g dν` on the frozen nodes.
    pub fn integrate(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|q| self.weights[q] * g(self.mark(q))).sum()
    }

    /// Estimator variance of [`integrate`](Self::integrate); zero unless the
    /// nodes are Monte Carlo draws.
    pub fn integrate_variance(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        if self.kind != SampleKind::MonteCarlo || self.len() < 2 {
            return 0.0;
        }
        let k = self.len() as f64;
        let mass = self.total_mass();
        let vals: Vec<f64> = (0..self.len()).map(|q| g(self.mark(q))).collect();
        let var = crate::stats::variance(&vals);
        mass * mass * var / k
    }
}

/// `ν(du) = rate · law(du)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasure {
    pub rate: f64,
    pub law: MarkLaw,
}

impl LevyMeasure {
    pub fn new(rate: f64, law: MarkLaw) -> Result<Self> {
        let m = Self { rate, law };
        m.validate()?;
        Ok(m)
    }

    /// The zero measure on a `dim`-dimensional mark space.
    pub fn none(dim: usize) -> Self {
        Self {
            rate: 0.0,
            law: MarkLaw::Point(vec![0.0; dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rate.is_finite() || self.rate < 0.0 {
            return Err(Error::param(format!(
                "Levy measure mass rate must be finite and >= 0, got {}",
                self.rate
            )));
        }
        let dim = self.dim();
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match &self.law {
            MarkLaw::Point(p) => {
                if !finite(p) {
                    return Err(Error::param("non-finite point mark"));
                }
            }
            MarkLaw::Atoms { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(Error::param("atom list and probabilities differ in length"));
                }
                if points.iter().any(|p| p.len() != dim || !finite(p)) {
                    return Err(Error::param("atoms must share one finite dimension"));
                }
                if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::param("atom probabilities must be >= 0 and sum to 1"));
                }
            }
            MarkLaw::Gaussian { mean, std } => {
                if mean.len() != std.len() || !finite(mean) || std.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                    return Err(Error::param("gaussian marks need matching finite mean and std >= 0"));
                }
            }
            MarkLaw::Uniform { low, high } => {
                if low.len() != high.len() || low.iter().zip(high).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
                    return Err(Error::param("uniform marks need low < high coordinatewise"));
                }
            }
        }
        Ok(())
    }

    /// `∫ ‖u‖² ν(du)`.
    pub fn second_moment(&self) -> f64 {
        let e: f64 = match &self.law {
            MarkLaw::Point(p) => p.iter().map(|v| v * v).sum(),
            MarkLaw::Atoms { points, probs } => points
                .iter()
                .zip(probs)
                .map(|(p, w)| w * p.iter().map(|v| v * v).sum::<f64>())
                .sum(),
            MarkLaw::Gaussian { mean, std } => {
                mean.iter().zip(std).map(|(m, s)| m * m + s * s).sum()
            }
            MarkLaw::Uniform { low, high } => low
                .iter()
                .zip(high)
                .map(|(a, b)| (a * a + a * b + b * b) / 3.0)
                .sum(),
        };
        self.rate * e
    }

    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.law {
            MarkLaw::Point(p) => out.copy_from_slice(p),
            MarkLaw::Atoms { points, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = points.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                out.copy_from_slice(&points[pick]);
            }
            MarkLaw::Gaussian { mean, std } => {
                for ((o, m), s) in out.iter_mut().zip(mean).zip(std) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = m + s * z;
                }
            }
            MarkLaw::Uniform { low, high } => {
                for ((o, l), h) in out.iter_mut().zip(low).zip(high) {
                    *o = l + (h - l) * rng.random::<f64>();
                }
            }
        }
    }

    /// Frozen node set for compensator integrals.
    pub fn frozen_sample(&self, rule: MarkRule) -> MarkSample {
        let dim = self.dim();
        if self.rate == 0.0 {
            return MarkSample::empty(dim);
        }
        match rule {
            MarkRule::MonteCarlo { count, seed } => {
                let count = count.max(1);
                let mut rng = crate::rng::SeedTree::new(seed).child("marks").rng();
                let mut points = vec![0.0; count * dim];
                for q in 0..count {
                    self.sample_mark(&mut rng, &mut points[q * dim..(q + 1) * dim]);
                }
                MarkSample {
                    dim,
                    points,
                    weights: vec![self.rate / count as f64; count],
                    kind: SampleKind::MonteCarlo,
                }
            }
            MarkRule::Quadrature { order } => self.quadrature_sample(order.max(1)),
        }
    }

    fn quadrature_sample(&self, order: usize) -> MarkSample {
        let dim = self.dim();
        let (axes, kind): (Vec<AxisRule>, SampleKind) = match &self.law {
            MarkLaw::Point(p) => {
                return MarkSample {
                    dim,
                    points: p.clone(),
                    weights: vec![self.rate],
                    kind: SampleKind::Exact,
                }
            }
            MarkLaw::Atoms { points, probs } => {
                return MarkSample {
                    dim,
                    points: points.iter().flatten().copied().collect(),
                    weights: probs.iter().map(|p| p * self.rate).collect(),
                    kind: SampleKind::Exact,
                }
            }
            MarkLaw::Gaussian { mean, std } => {
                let (z, w) = gauss_hermite(order);
                (
                    mean.iter()
                        .zip(std)
                        .map(|(m, s)| (z.iter().map(|v| m + s * v).collect(), w.clone()))
                        .collect(),
                    SampleKind::Quadrature,
                )
            }
            MarkLaw::Uniform { low, high } => {
                let (z, w) = gauss_legendre(order);
                (
                    low.iter()
                        .zip(high)
                        .map(|(a, b)| {
                            (z.iter().map(|v| a + (b - a) * (v + 1.0) / 2.0).collect(), w.iter().map(|x| x / 2.0).collect())
                        })
                        .collect(),
                    SampleKind::Quadrature,
                )
            }
        };
        // tensor product over coordinates
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        let mut weights = vec![self.rate];
        for (nodes, ws) in &axes {
            let mut np = Vec::with_capacity(points.len() * nodes.len());
            let mut nw = Vec::with_capacity(points.len() * nodes.len());
            for (p, w) in points.iter().zip(&weights) {
                for (z, wz) in nodes.iter().zip(ws) {
                    let mut q = p.clone();
                    q.push(*z);
                    np.push(q);
                    nw.push(w * wz);
                }
            }
            points = np;
            weights = nw;
        }
        MarkSample {
            dim,
            points: points.into_iter().flatten().collect(),
            weights,
            kind,
        }
    }
}

/// Golub–Welsch for a symmetric tridiagonal Jacobi matrix with zero diagonal.
fn golub_welsch(offdiag: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = offdiag.len() + 1;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for (k, b) in offdiag.iter().enumerate() {
        j[(k, k + 1)] = *b;
        j[(k + 1, k)] = *b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Probabilists' Gauss–Hermite rule: nodes and weights for `E[g(Z)]`,
/// `Z ~ N(0,1)`; weights sum to one.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    if order == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let off: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
    golub_welsch(&off, 1.0)
}

/// Gauss–Legendre rule on `[-1, 1]`; weights sum to two.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    if order == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let off: Vec<f64> = (1..order)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&off, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_integrates_gaussian_moments() {
        let (z, w) = gauss_hermite(8);
        let m = |p: i32| z.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (z, w) = gauss_legendre(5);
        let s: f64 = z.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((s - 2.0 / 5.0).abs() < 1e-13);
    }

    #[test]
    fn second_moments() {
        let g = LevyMeasure::new(2.0, MarkLaw::Gaussian { mean: vec![1.0], std: vec![2.0] }).unwrap();
        assert!((g.second_moment() - 10.0).abs() < 1e-12);
        let s = g.frozen_sample(MarkRule::default());
        assert!((s.integrate(|u| u[0] * u[0]) - 10.0).abs() < 1e-10);
        assert!((s.total_mass() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_rate() {
        assert!(LevyMeasure::new(-1.0, MarkLaw::Point(vec![0.0])).is_err());
        assert!(LevyMeasure::new(f64::INFINITY, MarkLaw::Point(vec![0.0])).is_err());
    }

    #[test]
    fn zero_rate_gives_empty_sample() {
        assert!(LevyMeasure::none(2).frozen_sample(MarkRule::default()).is_empty());
    }

    #[test]
    fn tensor_rule_in_two_dims() {
        let m = LevyMeasure::new(
            1.0,
            MarkLaw::Uniform { low: vec![0.0, -1.0], high: vec![1.0, 1.0] },
        )
        .unwrap();
        let s = m.frozen_sample(MarkRule::Quadrature { order: 4 });
        assert_eq!(s.len(), 16);
        let v = s.integrate(|u| u[0] * u[1] * u[1]);
        assert!((v - 0.5 / 3.0).abs() < 1e-13);
    }
}
