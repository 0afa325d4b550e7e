//! Gaussian mollifier `S_ε` on measures and functions and the `L²` norm of
//! mollified measures, all by tensor-product trapezoid quadrature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::exec::map_range;
use crate::filter::{CloudKind, FilterTrajectory, ParticleCloud};
use crate::model::TestFunction;
use crate::{Error, Exec, Result};

/// Largest supported state dimension.
pub const MAX_DIM: usize = 3;
/// Box margin and kernel truncation, in kernel standard deviations.
pub const TAIL: f64 = 8.0;
/// Quadrature refinement for pairings with test functions in the lemma
/// checks; narrow bumps need the larger factors.
fn lemma_refine(n: usize) -> f64 {
    match n {
        1 => 16.0,
        2 => 8.0,
        _ => 4.0,
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("eps: mollifier width must be positive, got {eps}")))
    }
}

fn check_dim(n: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(Error::Dimension(format!("mollification supports 1 to {MAX_DIM} dimensions, got {n}")))
    }
}

/// `(2πε)^{-n/2} exp(−|z|²/2ε)`
fn kernel(eps: f64, z2: f64, n: usize) -> f64 {
    (2.0 * PI * eps).powf(-(n as f64) / 2.0) * (-z2 / (2.0 * eps)).exp()
}

/// A finite signed measure `Σ mᵢ δ_{xᵢ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atoms {
    pub n: usize,
    pub points: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Atoms {
    pub fn new(n: usize, points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if n == 0 || points.len() != n * masses.len() {
            return Err(Error::Dimension(format!(
                "{} coordinates do not describe {} atoms in dimension {n}",
                points.len(),
                masses.len()
            )));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "atom coordinate".into(), index: i / n });
        }
        if let Some(i) = masses.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "atom mass".into(), index: i });
        }
        Ok(Self { n, points, masses })
    }

    pub fn zero(n: usize) -> Self {
        Self { n, points: Vec::new(), masses: Vec::new() }
    }

    /// Unit mass at `x`.
    pub fn dirac(x: &[f64]) -> Self {
        Self { n: x.len(), points: x.to_vec(), masses: vec![1.0] }
    }

    /// The measure represented by a particle cloud, including its total mass
    /// when unnormalized.
    pub fn from_cloud(cloud: &ParticleCloud) -> Result<Self> {
        let (max, e, _) = cloud.shifted_weights()?;
        let scale = match cloud.kind {
            CloudKind::Unnormalized => (cloud.log_offset + max - (cloud.len() as f64).ln()).exp(),
            CloudKind::Normalized => max.exp(),
        };
        Self::new(cloud.n, cloud.positions.clone(), e.iter().map(|w| w * scale).collect())
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, points: self.points.clone(), masses: self.masses.iter().map(|m| c * m).collect() }
    }

    /// The total-variation measure `|μ|`; exact when atom positions are
    /// distinct.
    pub fn abs(&self) -> Self {
        Self { n: self.n, points: self.points.clone(), masses: self.masses.iter().map(|m| m.abs()).collect() }
    }

    /// Positive and negative parts `(μ⁺, μ⁻)`, both as positive measures.
    pub fn split(&self) -> (Self, Self) {
        let mut pos = Self::zero(self.n);
        let mut neg = Self::zero(self.n);
        for (i, &m) in self.masses.iter().enumerate() {
            let (target, mass) = if m >= 0.0 { (&mut pos, m) } else { (&mut neg, -m) };
            target.points.extend_from_slice(self.point(i));
            target.masses.push(mass);
        }
        (pos, neg)
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = vec![f64::INFINITY; self.n];
        let mut hi = vec![f64::NEG_INFINITY; self.n];
        for i in 0..self.len() {
            for (a, &v) in self.point(i).iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        Some((lo, hi))
    }
}

/// Tensor-product trapezoid grid on a box. Node `k` has multi-index
/// `k = Σ k_a Π_{b>a} counts_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadGrid {
    pub n: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Nodes per axis, both ends included.
    pub counts: Vec<usize>,
}

impl QuadGrid {
    /// Grid on `[lo, hi]` with spacing at most `max_spacing` on every axis.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, max_spacing: f64) -> Result<Self> {
        let n = lo.len();
        check_dim(n)?;
        if hi.len() != n || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || !(max_spacing > 0.0) {
            return Err(Error::param("grid: need lo < hi on every axis and a positive spacing"));
        }
        let counts = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / max_spacing).ceil() as usize + 1).collect();
        Ok(Self { n, lo, hi, counts })
    }

    /// The box `[min atom − 8√ε, max atom + 8√ε]` with spacing `√ε/8`
    /// covering all given measures.
    pub fn auto(measures: &[&Atoms], eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let n = measures.first().map_or(1, |m| m.n);
        check_dim(n)?;
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        let mut any = false;
        for mu in measures {
            if mu.n != n {
                return Err(Error::Dimension("measures on a shared grid must have equal dimension".into()));
            }
            if let Some((a, b)) = mu.bounds() {
                if !any {
                    lo = a;
                    hi = b;
                    any = true;
                } else {
                    for i in 0..n {
                        lo[i] = lo[i].min(a[i]);
                        hi[i] = hi[i].max(b[i]);
                    }
                }
            }
        }
        let s = eps.sqrt();
        Self::new(lo.iter().map(|v| v - TAIL * s).collect(), hi.iter().map(|v| v + TAIL * s).collect(), s / 8.0)
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, a: usize) -> f64 {
        (self.hi[a] - self.lo[a]) / (self.counts[a] - 1) as f64
    }

    pub fn node(&self, k: usize, out: &mut [f64]) {
        let mut rem = k;
        for a in (0..self.n).rev() {
            let i = rem % self.counts[a];
            rem /= self.counts[a];
            out[a] = self.lo[a] + i as f64 * self.spacing(a);
        }
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        let mut rem = k;
        let mut w = 1.0;
        for a in (0..self.n).rev() {
            let i = rem % self.counts[a];
            rem /= self.counts[a];
            let end = i == 0 || i + 1 == self.counts[a];
            w *= if end { 0.5 } else { 1.0 } * self.spacing(a);
        }
        w
    }

    /// `∫ g` by the trapezoid rule on node values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let terms: Vec<f64> = values.iter().enumerate().map(|(k, v)| self.weight(k) * v).collect();
        crate::stats::pairwise_sum(&terms)
    }
}

/// Grid values of a mollified measure or function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierField {
    pub eps: f64,
    pub grid: QuadGrid,
    pub values: Vec<f64>,
}

impl MollifierField {
    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| c * v).collect(), ..self.clone() }
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Grid rows `(x_1..x_n, value)`.
    pub fn rows(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        (0..self.grid.len()).map(|k| {
            let mut x = vec![0.0; self.grid.n];
            self.grid.node(k, &mut x);
            (x, self.values[k])
        })
    }
}

/// `(S_ε μ)(x) = Σ mᵢ (2πε)^{-n/2} exp(−|x − xᵢ|²/2ε)` at every grid node.
pub fn mollify_measure(mu: &Atoms, eps: f64, grid: &QuadGrid) -> Result<MollifierField> {
    check_eps(eps)?;
    if mu.n != grid.n {
        return Err(Error::Dimension(format!("measure in dimension {} on a {}-dimensional grid", mu.n, grid.n)));
    }
    let n = grid.n;
    let values = map_range(Exec::default(), grid.len(), |k| {
        let mut x = [0.0; MAX_DIM];
        grid.node(k, &mut x[..n]);
        let mut s = 0.0;
        for i in 0..mu.len() {
            let z2: f64 = mu.point(i).iter().zip(&x[..n]).map(|(a, b)| (a - b) * (a - b)).sum();
            s += mu.masses[i] * kernel(eps, z2, n);
        }
        s
    });
    Ok(MollifierField { eps, grid: grid.clone(), values })
}

/// Kernel-centred quadrature offsets and weights: trapezoid on
/// `[−8√ε, 8√ε]ⁿ` with spacing `√ε/16` in one dimension, coarser in more
/// to bound the node count; weights include the kernel.
fn kernel_rule(eps: f64, n: usize, derivative: Option<usize>) -> (Vec<f64>, Vec<f64>) {
    kernel_rule_with(eps, n, derivative, 1.0)
}

fn kernel_rule_with(eps: f64, n: usize, derivative: Option<usize>, refine: f64) -> (Vec<f64>, Vec<f64>) {
    let s = eps.sqrt();
    let per_sigma = refine
        * match n {
            1 => 16.0,
            2 => 8.0,
            _ => 4.0,
        };
    let half = (TAIL * per_sigma) as i64;
    let h = s / per_sigma;
    let axis: Vec<f64> = (-half..=half).map(|i| i as f64 * h).collect();
    let per = axis.len();
    let total = per.pow(n as u32);
    let mut offs = Vec::with_capacity(total * n);
    let mut weights = Vec::with_capacity(total);
    for k in 0..total {
        let mut rem = k;
        let mut z2 = 0.0;
        let start = offs.len();
        for _ in 0..n {
            let z = axis[rem % per];
            rem /= per;
            offs.push(z);
            z2 += z * z;
        }
        let mut w = kernel(eps, z2, n) * h.powi(n as i32);
        if let Some(a) = derivative {
            w *= offs[start + a] / eps;
        }
        weights.push(w);
    }
    (offs, weights)
}

fn convolve_at(points: &[f64], n: usize, rule: &(Vec<f64>, Vec<f64>), f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Vec<f64> {
    let (offs, weights) = rule;
    map_range(Exec::default(), points.len() / n, |p| {
        let x = &points[p * n..(p + 1) * n];
        let mut y = [0.0; MAX_DIM];
        let terms: Vec<f64> = weights
            .iter()
            .enumerate()
            .map(|(k, w)| {
                for a in 0..n {
                    y[a] = x[a] + offs[k * n + a];
                }
                w * f(&y[..n])
            })
            .collect();
        crate::stats::pairwise_sum(&terms)
    })
}

fn grid_points(grid: &QuadGrid) -> Vec<f64> {
    let mut pts = vec![0.0; grid.len() * grid.n];
    for (k, x) in pts.chunks_mut(grid.n).enumerate() {
        grid.node(k, x);
    }
    pts
}

/// `(S_ε F)(x) = ∫ F(y) (2πε)^{-n/2} exp(−|x − y|²/2ε) dy` at `points`.
pub fn mollify_function_at(f: &(dyn Fn(&[f64]) -> f64 + Sync), eps: f64, n: usize, points: &[f64]) -> Result<Vec<f64>> {
    check_eps(eps)?;
    check_dim(n)?;
    let rule = kernel_rule(eps, n, None);
    Ok(convolve_at(points, n, &rule, f))
}

/// [`mollify_function_at`] on every grid node.
pub fn mollify_function(f: &(dyn Fn(&[f64]) -> f64 + Sync), eps: f64, grid: &QuadGrid) -> Result<MollifierField> {
    let values = mollify_function_at(f, eps, grid.n, &grid_points(grid))?;
    Ok(MollifierField { eps, grid: grid.clone(), values })
}

/// `‖field‖²` in `L²(ℝⁿ)`.
pub fn h_norm_sq(field: &MollifierField) -> f64 {
    let sq: Vec<f64> = field.values.iter().map(|v| v * v).collect();
    field.grid.integrate(&sq)
}

pub fn h_norm(field: &MollifierField) -> f64 {
    h_norm_sq(field).sqrt()
}

/// `‖S_ε(μ₁ − μ₂)‖` on a shared grid. The two fields are built separately
/// and subtracted node by node, so equal inputs give exactly zero.
pub fn energy_distance(mu1: &Atoms, mu2: &Atoms, eps: f64, grid: &QuadGrid) -> Result<f64> {
    let a = mollify_measure(mu1, eps, grid)?;
    let b = mollify_measure(mu2, eps, grid)?;
    let sq: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).collect();
    Ok(grid.integrate(&sq).sqrt())
}

/// [`energy_distance`] on an automatically sized grid.
pub fn energy_distance_auto(mu1: &Atoms, mu2: &Atoms, eps: f64) -> Result<f64> {
    let grid = QuadGrid::auto(&[mu1, mu2], eps)?;
    energy_distance(mu1, mu2, eps, &grid)
}

/// Numerical gaps of the three mollifier properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaGaps {
    /// `‖S_{2ε}|μ|‖ − ‖S_ε|μ|‖`, expected `≤ 0`.
    pub contraction: f64,
    /// `|⟨S_ε μ, F⟩ − ⟨μ, S_ε F⟩|`
    pub adjoint: f64,
    /// `max_{x,i} |∂_i(S_ε F)(x) − S_ε(∂_i F)(x)|`
    pub commutation: f64,
}

/// Evaluate the contraction, adjointness and derivative-commutation
/// properties of `S_ε` for one measure and test function. The grid must be
/// sized for width `2ε` around the measure. Pairings with `F` use a grid
/// refined further, since compactly supported test functions
/// converge more slowly under the trapezoid rule than Gaussians do.
pub fn lemma_prose_checks(mu: &Atoms, f: &dyn TestFunction, eps: f64, grid: &QuadGrid) -> Result<LemmaGaps> {
    let n = mu.n;
    let abs = mu.abs();
    let wide = h_norm(&mollify_measure(&abs, 2.0 * eps, grid)?);
    let narrow = h_norm(&mollify_measure(&abs, eps, grid)?);

    let refine = lemma_refine(n);
    let max_spacing = (0..n).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    let fine = QuadGrid::new(grid.lo.clone(), grid.hi.clone(), max_spacing / refine)?;
    let field = mollify_measure(mu, eps, &fine)?;
    let fx: Vec<f64> = grid_points(&fine).chunks(n).map(|x| f.value(x)).collect();
    let lhs = fine.integrate(&field.values.iter().zip(&fx).map(|(a, b)| a * b).collect::<Vec<_>>());
    let value = |x: &[f64]| f.value(x);
    let sf = convolve_at(&mu.points, n, &kernel_rule_with(eps, n, None, refine), &value);
    let rhs: f64 = sf.iter().zip(&mu.masses).map(|(v, m)| v * m).sum();

    // Commutation on a coarse subset of grid nodes around the measure.
    let probe = QuadGrid::new(grid.lo.clone(), grid.hi.clone(), eps.sqrt() * if n == 1 { 1.0 } else { 2.0 })?;
    let pts = grid_points(&probe);
    let mut commutation: f64 = 0.0;
    for i in 0..n {
        let d_of_s = convolve_at(&pts, n, &kernel_rule_with(eps, n, Some(i), refine), &value);
        let grad_i = |x: &[f64]| {
            let mut g = [0.0; MAX_DIM];
            f.gradient(x, &mut g[..n]);
            g[i]
        };
        let s_of_d = convolve_at(&pts, n, &kernel_rule_with(eps, n, None, refine), &grad_i);
        for (a, b) in d_of_s.iter().zip(&s_of_d) {
            commutation = commutation.max((a - b).abs());
        }
    }
    Ok(LemmaGaps { contraction: wide - narrow, adjoint: (lhs - rhs).abs(), commutation })
}

/// `t ↦ ‖S_ε ρ_t‖²` over the kept clouds of an unnormalized trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyPath {
    pub eps: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
}

pub fn energy_trajectory(traj: &FilterTrajectory, eps: f64) -> Result<EnergyPath> {
    check_eps(eps)?;
    if traj.clouds.is_empty() {
        return Err(Error::param("energy trajectory needs a filter run that keeps clouds"));
    }
    let mut out = EnergyPath { eps, times: Vec::new(), energy: Vec::new() };
    for (_, cloud) in &traj.clouds {
        let mu = Atoms::from_cloud(cloud)?;
        let grid = QuadGrid::auto(&[&mu], eps)?;
        out.times.push(cloud.t);
        out.energy.push(h_norm_sq(&mollify_measure(&mu, eps, &grid)?));
    }
    Ok(out)
}

/// Smallest `C` with `E_t ≤ E_0 e^{C(t − t_0)}` over nodes at least
/// `burn_in` of the horizon past the start.
pub fn gronwall_constant(times: &[f64], energy: &[f64], burn_in: f64) -> Result<f64> {
    if times.len() < 2 || times.len() != energy.len() {
        return Err(Error::param("Gronwall fit needs at least two matching nodes"));
    }
    let (t0, e0) = (times[0], energy[0]);
    let span = times[times.len() - 1] - t0;
    if !(e0 > 0.0) || !(span > 0.0) {
        return Err(Error::param("Gronwall fit needs positive initial energy and a positive time span"));
    }
    let mut c = f64::NEG_INFINITY;
    for (&t, &e) in times.iter().zip(energy) {
        if t - t0 >= burn_in * span && t > t0 {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::NonFinite { what: "energy".into(), index: 0 });
            }
            c = c.max((e / e0).ln() / (t - t0));
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bump, Monomial};

    fn grid1(lo: f64, hi: f64, eps: f64) -> QuadGrid {
        QuadGrid::new(vec![lo], vec![hi], eps.sqrt() / 8.0).unwrap()
    }

    #[test]
    fn kernel_at_centre() {
        let g = QuadGrid::new(vec![-1.0], vec![1.0], 0.5).unwrap();
        let f = mollify_measure(&Atoms::dirac(&[0.0]), 1.0, &g).unwrap();
        let mid = g.len() / 2;
        let mut x = [0.0];
        g.node(mid, &mut x);
        assert_eq!(x[0], 0.0);
        assert!((f.values[mid] - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn zero_measure_and_symmetry() {
        let g = grid1(-10.0, 10.0, 1.0);
        let z = mollify_measure(&Atoms::zero(1), 1.0, &g).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        assert_eq!(h_norm(&z), 0.0);
        let two = Atoms::new(1, vec![-1.3, 1.3], vec![0.5, 0.5]).unwrap();
        let f = mollify_measure(&two, 1.0, &g).unwrap();
        let k = g.len();
        for i in 0..k {
            assert!((f.values[i] - f.values[k - 1 - i]).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_norms() {
        for (eps, want) in [(1.0, 0.282_094_791_773_878_1), (2.0, 0.199_471_140_200_716_3)] {
            let mu = Atoms::dirac(&[0.0]);
            let g = QuadGrid::auto(&[&mu], eps).unwrap();
            let v = h_norm_sq(&mollify_measure(&mu, eps, &g).unwrap());
            assert!((v - want).abs() < 1e-10, "{v}");
            assert!((v - 1.0 / (4.0 * PI * eps).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_between_diracs() {
        let (a, b) = (Atoms::dirac(&[0.0]), Atoms::dirac(&[2.0]));
        let d = energy_distance_auto(&a, &b, 1.0).unwrap();
        let want = (1.0 / (2.0 * PI.sqrt())).sqrt() * (2.0 - 2.0 * (-1.0f64).exp()).sqrt();
        assert!((d - want).abs() < 1e-10, "{d} vs {want}");
        assert_eq!(energy_distance_auto(&a, &a, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn mollified_monomials() {
        let g = grid1(-2.0, 2.0, 1.0);
        let c = mollify_function(&|_: &[f64]| 3.0, 1.0, &g).unwrap();
        assert!(c.values.iter().all(|v| (v - 3.0).abs() < 1e-8));
        let x = mollify_function(&|x: &[f64]| x[0], 1.0, &g).unwrap();
        let x2 = mollify_function(&|x: &[f64]| x[0] * x[0], 1.0, &g).unwrap();
        for (k, (a, b)) in x.values.iter().zip(&x2.values).enumerate() {
            let mut p = [0.0];
            g.node(k, &mut p);
            assert!((a - p[0]).abs() < 1e-8);
            assert!((b - p[0] * p[0] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mass_is_preserved() {
        let mu = Atoms::new(1, vec![-0.4, 2.0, 0.1], vec![0.2, 0.5, 0.3]).unwrap();
        let g = QuadGrid::auto(&[&mu], 0.5).unwrap();
        let f = mollify_measure(&mu, 0.5, &g).unwrap();
        assert!((f.integral() - 1.0).abs() < 1e-6);
        let f2 = f.scaled(3.0);
        assert!((h_norm_sq(&f2) - 9.0 * h_norm_sq(&f)).abs() < 1e-12 * h_norm_sq(&f2));
    }

    #[test]
    fn lemma_gaps_for_a_dirac() {
        let mu = Atoms::dirac(&[0.0]);
        let g = QuadGrid::auto(&[&mu], 2.0).unwrap();
        let gaps = lemma_prose_checks(&mu, &Bump { center: vec![0.3], radius: 2.0 }, 1.0, &g).unwrap();
        assert!(gaps.contraction < 0.0);
        assert!(gaps.adjoint < 1e-8, "{gaps:?}");
        assert!(gaps.commutation < 1e-6, "{gaps:?}");
        let flat = lemma_prose_checks(&mu, &crate::model::Constant(2.0), 1.0, &g).unwrap();
        assert!(flat.commutation < 1e-12);
        let lin = lemma_prose_checks(&mu, &Monomial::coordinate(0), 1.0, &g).unwrap();
        assert!(lin.adjoint < 1e-8);
    }

    #[test]
    fn two_dimensional_dirac() {
        let mu = Atoms::dirac(&[0.0, 1.0]);
        let g = QuadGrid::auto(&[&mu], 1.0).unwrap();
        let v = h_norm_sq(&mollify_measure(&mu, 1.0, &g).unwrap());
        assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-10);
    }

    #[test]
    fn gronwall_fit() {
        let t: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let e: Vec<f64> = t.iter().map(|s| 2.0 * (0.7 * s).exp()).collect();
        let c = gronwall_constant(&t, &e, 0.1).unwrap();
        assert!((c - 0.7).abs() < 1e-12);
    }
}
