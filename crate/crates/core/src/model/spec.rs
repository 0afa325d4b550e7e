use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::measure::{LevyMeasure, MarkRule, MarkSample};
use crate::linalg;
use crate::{Error, Result};

/// `(t, x) -> out`, row-major when the output is a matrix.
pub type StateMap = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `(t, x, u) -> out` or `(t, x, y) -> out`.
pub type PairMap = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(t, x, u) -> λ`.
pub type IntensityMap = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// signal
    pub n: usize,
    /// observation
    pub m: usize,
    /// independent signal Brownian motion `B`
    pub d: usize,
    /// mark space of the signal jumps
    pub k1: usize,
    /// mark space of the observation jumps
    pub k2: usize,
}

/// Constant mixing of the sensor-correlated system: the observation is
/// driven by `σ̌₂ W + σ̌₃ B` with `σ̌₂σ̌₂ᵀ + σ̌₃σ̌₃ᵀ = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorMixing {
    pub sigma2: Vec<f64>,
    pub sigma3: Vec<f64>,
    /// `sqrt(I - σ̌₂ᵀσ̌₂)`, the part of `W` the observation does not see.
    residual_root: Vec<f64>,
}

impl SensorMixing {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(m: usize, d: usize, sigma2: Vec<f64>, sigma3: Vec<f64>) -> Result<Self> {
        if sigma2.len() != m * m || sigma3.len() != m * d {
            return Err(Error::Dimension(format!(
                "sensor mixing expects {m}x{m} and {m}x{d} matrices"
            )));
        }
        let dev = Self::identity_defect(m, d, &sigma2, &sigma3);
        if !(dev <= Self::TOLERANCE) {
            return Err(Error::violation(format!(
                "sensor mixing: |s2 s2^T + s3 s3^T - I| = {dev:.3e} exceeds {:.0e}",
                Self::TOLERANCE
            )));
        }
        // I - σ̌₂ᵀσ̌₂ is PSD because ‖σ̌₂‖ ≤ 1 follows from the identity.
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let s: f64 = (0..m).map(|k| sigma2[k * m + i] * sigma2[k * m + j]).sum();
                g[i * m + j] = if i == j { 1.0 - s } else { -s };
            }
        }
        let residual_root = linalg::psd_sqrt(&g, m);
        Ok(Self { sigma2, sigma3, residual_root })
    }

    pub fn identity_defect(m: usize, d: usize, s2: &[f64], s3: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let a: f64 = (0..m).map(|k| s2[i * m + k] * s2[j * m + k]).sum();
                let b: f64 = (0..d).map(|k| s3[i * d + k] * s3[j * d + k]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((a + b - e).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// `W` enters the signal through `σ₁` and the observation through `σ₂`.
    Feedback,
    /// The observation sees `σ̌₂ W + σ̌₃ B`.
    Sensor(SensorMixing),
}

/// Law of the initial signal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prior {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Point(p) => p.len(),
            Prior::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Prior::Point(p) => out.copy_from_slice(p),
            Prior::Gaussian { mean, std } => {
                for ((o, m), s) in out.iter_mut().zip(mean).zip(std) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = m + s * z;
                }
            }
        }
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            Prior::Point(p) => p,
            Prior::Gaussian { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> Vec<f64> {
        match self {
            Prior::Point(p) => vec![0.0; p.len()],
            Prior::Gaussian { std, .. } => std.iter().map(|s| s * s).collect(),
        }
    }
}

/// Full parameterisation of the signal–observation system.
///
/// Matrices are row-major. For the sensor variant the `sigma0`/`sigma2` maps
/// are unused: the signal diffusion is `sigma1` alone and the observation
/// diffusion is the constant mixing.
#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub dims: Dims,
    pub horizon: f64,
    b1: StateMap,
    sigma0: StateMap,
    sigma1: StateMap,
    f1: PairMap,
    b2: PairMap,
    sigma2: StateMap,
    f2: PairMap,
    lambda: IntensityMap,
    pub nu1: LevyMeasure,
    pub nu2: LevyMeasure,
    pub variant: Variant,
    /// Lower bound on `λ`, used as the floor of posterior intensity
    /// denominators.
    pub iota: f64,
    /// Maps with no dependence on `x` through `b₂` or `λ` carry this flag so
    /// callers can skip per-particle work; purely informational.
    pub observation_x_free: bool,
    marks1: MarkSample,
    marks2: MarkSample,
    mark_rule: MarkRule,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("horizon", &self.horizon)
            .field("nu1", &self.nu1)
            .field("nu2", &self.nu2)
            .field("variant", &self.variant)
            .field("iota", &self.iota)
            .field("mark_rule", &self.mark_rule)
            .finish_non_exhaustive()
    }
}

impl SystemSpec {
    pub fn builder(name: impl Into<String>, n: usize, m: usize, d: usize) -> SystemSpecBuilder {
        SystemSpecBuilder::new(name.into(), n, m, d)
    }

    pub fn is_sensor(&self) -> bool {
        matches!(self.variant, Variant::Sensor(_))
    }

    pub fn marks1(&self) -> &MarkSample {
        &self.marks1
    }

    pub fn marks2(&self) -> &MarkSample {
        &self.marks2
    }

    pub fn mark_rule(&self) -> MarkRule {
        self.mark_rule
    }

    /// Re-freeze both compensator mark samples under a different rule.
    pub fn with_mark_rule(mut self, rule: MarkRule) -> Self {
        self.mark_rule = rule;
        self.marks1 = self.nu1.frozen_sample(rule);
        self.marks2 = self.nu2.frozen_sample(rule);
        self
    }

    pub fn b1(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.b1)(t, x, out)
    }

    pub fn sigma0(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.sigma0)(t, x, out)
    }

    pub fn sigma1(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.sigma1)(t, x, out)
    }

    pub fn f1(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.f1)(t, x, u, out)
    }

    pub fn b2(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.b2)(t, x, y, out)
    }

    /// Observation diffusion matrix; the constant `σ̌₂` for the sensor variant.
    pub fn sigma2(&self, t: f64, y: &[f64], out: &mut [f64]) {
        match &self.variant {
            Variant::Feedback => (self.sigma2)(t, y, out),
            Variant::Sensor(mix) => out.copy_from_slice(&mix.sigma2),
        }
    }

    pub fn f2(&self, t: f64, y: &[f64], u: &[f64], out: &mut [f64]) {
        (self.f2)(t, y, u, out)
    }

    pub fn lambda(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        (self.lambda)(t, x, u)
    }

    /// Dimension of the noise that drives the signal but not the observation.
    pub fn residual_noise_dim(&self) -> usize {
        match self.variant {
            Variant::Feedback => self.dims.d,
            Variant::Sensor(_) => self.dims.m,
        }
    }

    /// Loading of the part of the signal noise independent of the
    /// observation, `n × residual_noise_dim`. `scratch` needs `n·m` slots.
    pub fn residual_diffusion(&self, t: f64, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        match &self.variant {
            Variant::Feedback => (self.sigma0)(t, x, out),
            Variant::Sensor(mix) => {
                let (n, m) = (self.dims.n, self.dims.m);
                (self.sigma1)(t, x, &mut scratch[..n * m]);
                linalg::matmul(&scratch[..n * m], &mix.residual_root, n, m, m, out);
            }
        }
    }

    /// Loading of the observation's own Brownian driver in the signal,
    /// `n × m`. `scratch` needs `n·m` slots.
    pub fn cross_loading(&self, t: f64, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        match &self.variant {
            Variant::Feedback => (self.sigma1)(t, x, out),
            Variant::Sensor(mix) => {
                let (n, m) = (self.dims.n, self.dims.m);
                (self.sigma1)(t, x, &mut scratch[..n * m]);
                // σ̌₁ σ̌₂ᵀ
                for i in 0..n {
                    for j in 0..m {
                        out[i * m + j] = (0..m).map(|k| scratch[i * m + k] * mix.sigma2[j * m + k]).sum();
                    }
                }
            }
        }
    }

    /// Inverse of the observation diffusion at `(t, y)`; identity for the
    /// sensor variant, whose composite driver is already a standard
    /// Brownian motion.
    pub fn obs_diffusion_inverse(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let m = self.dims.m;
        match self.variant {
            Variant::Sensor(_) => {
                let mut id = vec![0.0; m * m];
                (0..m).for_each(|i| id[i * m + i] = 1.0);
                Ok(id)
            }
            Variant::Feedback => {
                let mut s = vec![0.0; m * m];
                (self.sigma2)(t, y, &mut s);
                linalg::invert(&s, m, t)
            }
        }
    }

    /// Observation diffusion in the filter's parameterisation: `σ₂` or `I`.
    pub fn obs_diffusion(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let m = self.dims.m;
        match self.variant {
            Variant::Sensor(_) => {
                out.fill(0.0);
                (0..m).for_each(|i| out[i * m + i] = 1.0);
            }
            Variant::Feedback => (self.sigma2)(t, y, out),
        }
    }

    /// `h = σ₂⁻¹ b₂`, or `b̌₂` for the sensor variant.
    pub fn observation_h(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let m = self.dims.m;
        let mut b = vec![0.0; m];
        (self.b2)(t, x, y, &mut b);
        let inv = self.obs_diffusion_inverse(t, y)?;
        let mut h = vec![0.0; m];
        linalg::matvec(&inv, m, m, &b, &mut h);
        Ok(h)
    }

    /// `∫ f₂(t,y,u)(1 − λ(t,x,u)) ν₂(du)` on the frozen mark sample, added
    /// to `out`. `buf` needs `m` slots.
    pub fn add_jump_drift_correction(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64], buf: &mut [f64]) {
        let marks = &self.marks2;
        for q in 0..marks.len() {
            let u = marks.mark(q);
            (self.f2)(t, y, u, buf);
            let c = marks.weights[q] * (1.0 - (self.lambda)(t, x, u));
            for (o, f) in out.iter_mut().zip(buf.iter()) {
                *o += c * f;
            }
        }
    }

    /// The drift of the observation relative to the reference driver `W̃`
    /// once the jump compensator is taken against `ν₂` rather than `λν₂`:
    /// `σ₂⁻¹ (b₂ + ∫ f₂ (1 − λ) ν₂)`. Equals [`observation_h`](Self::observation_h)
    /// whenever `f₂ = 0`.
    pub fn effective_h(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let inv = self.obs_diffusion_inverse(t, y)?;
        let mut h = vec![0.0; self.dims.m];
        let mut scratch = EvalScratch::new(self);
        self.effective_h_into(t, x, y, &inv, &mut h, &mut scratch);
        Ok(h)
    }

    /// Allocation-free form of [`effective_h`](Self::effective_h) with a
    /// precomputed inverse observation diffusion.
    pub fn effective_h_into(&self, t: f64, x: &[f64], y: &[f64], inv: &[f64], out: &mut [f64], s: &mut EvalScratch) {
        let m = self.dims.m;
        (self.b2)(t, x, y, &mut s.m_a);
        if !self.marks2.is_empty() {
            let (acc, buf) = (&mut s.m_a, &mut s.m_b);
            self.add_jump_drift_correction(t, x, y, acc, buf);
        }
        linalg::matvec(inv, m, m, &s.m_a, out);
    }

    /// `∫ f₁ ν₁` on the frozen sample, written to `out`.
    pub fn jump1_mean(&self, t: f64, x: &[f64], out: &mut [f64], buf: &mut [f64]) {
        out.fill(0.0);
        let marks = &self.marks1;
        for q in 0..marks.len() {
            (self.f1)(t, x, marks.mark(q), buf);
            let w = marks.weights[q];
            for (o, f) in out.iter_mut().zip(buf.iter()) {
                *o += w * f;
            }
        }
    }

    /// `∫ f₂ ν₂` on the frozen sample, written to `out`.
    pub fn jump2_mean(&self, t: f64, y: &[f64], out: &mut [f64], buf: &mut [f64]) {
        out.fill(0.0);
        let marks = &self.marks2;
        for q in 0..marks.len() {
            (self.f2)(t, y, marks.mark(q), buf);
            let w = marks.weights[q];
            for (o, f) in out.iter_mut().zip(buf.iter()) {
                *o += w * f;
            }
        }
    }

    /// `∫ (1 − λ(t,x,u)) ν₂(du)` on the frozen sample.
    pub fn missed_intensity(&self, t: f64, x: &[f64]) -> f64 {
        self.marks2.integrate(|u| 1.0 - (self.lambda)(t, x, u))
    }

    /// `∫ λ(t,x,u) ν₂(du)` on the frozen sample.
    pub fn accepted_intensity(&self, t: f64, x: &[f64]) -> f64 {
        self.marks2.integrate(|u| (self.lambda)(t, x, u))
    }

    pub fn check_lambda(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64> {
        let l = (self.lambda)(t, x, u);
        if l > 0.0 && l < 1.0 {
            Ok(l)
        } else {
            Err(Error::violation(format!(
                "lambda = {l} outside (0,1) at t={t}, x={x:?}, u={u:?}"
            )))
        }
    }
}

/// Reusable buffers for per-point coefficient evaluation.
#[derive(Debug, Clone)]
pub struct EvalScratch {
    pub n_a: Vec<f64>,
    pub n_b: Vec<f64>,
    pub m_a: Vec<f64>,
    pub m_b: Vec<f64>,
    pub nm: Vec<f64>,
    pub nm2: Vec<f64>,
    pub nr: Vec<f64>,
}

impl EvalScratch {
    pub fn new(spec: &SystemSpec) -> Self {
        let Dims { n, m, .. } = spec.dims;
        let r = spec.residual_noise_dim();
        Self {
            n_a: vec![0.0; n],
            n_b: vec![0.0; n],
            m_a: vec![0.0; m],
            m_b: vec![0.0; m],
            nm: vec![0.0; n * m],
            nm2: vec![0.0; n * m],
            nr: vec![0.0; n * r.max(1)],
        }
    }
}

pub struct SystemSpecBuilder {
    name: String,
    dims: Dims,
    horizon: f64,
    b1: StateMap,
    sigma0: Option<StateMap>,
    sigma1: StateMap,
    f1: PairMap,
    b2: PairMap,
    sigma2: Option<StateMap>,
    f2: PairMap,
    lambda: IntensityMap,
    nu1: LevyMeasure,
    nu2: LevyMeasure,
    sensor: Option<(Vec<f64>, Vec<f64>)>,
    iota: f64,
    observation_x_free: bool,
    mark_rule: MarkRule,
}

impl SystemSpecBuilder {
    fn new(name: String, n: usize, m: usize, d: usize) -> Self {
        let zero2: StateMap = Arc::new(|_, _, o: &mut [f64]| o.fill(0.0));
        let zero3: PairMap = Arc::new(|_, _, _, o: &mut [f64]| o.fill(0.0));
        Self {
            name,
            dims: Dims { n, m, d, k1: 1, k2: 1 },
            horizon: 1.0,
            b1: zero2.clone(),
            sigma0: None,
            sigma1: zero2,
            f1: zero3.clone(),
            b2: zero3.clone(),
            sigma2: None,
            f2: zero3,
            lambda: Arc::new(|_, _, _| 0.5),
            nu1: LevyMeasure::none(1),
            nu2: LevyMeasure::none(1),
            sensor: None,
            iota: 1e-6,
            observation_x_free: false,
            mark_rule: MarkRule::default(),
        }
    }

    pub fn horizon(mut self, t: f64) -> Self {
        self.horizon = t;
        self
    }

    pub fn b1(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.b1 = Arc::new(f);
        self
    }

    pub fn sigma0(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma0 = Some(Arc::new(f));
        self
    }

    pub fn sigma1(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma1 = Arc::new(f);
        self
    }

    pub fn f1(mut self, f: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.f1 = Arc::new(f);
        self
    }

    pub fn b2(mut self, f: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.b2 = Arc::new(f);
        self
    }

    pub fn sigma2(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma2 = Some(Arc::new(f));
        self
    }

    pub fn f2(mut self, f: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.f2 = Arc::new(f);
        self
    }

    pub fn lambda(mut self, f: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.lambda = Arc::new(f);
        self
    }

    pub fn nu1(mut self, nu: LevyMeasure) -> Self {
        self.nu1 = nu;
        self
    }

    pub fn nu2(mut self, nu: LevyMeasure) -> Self {
        self.nu2 = nu;
        self
    }

    /// Switch to the sensor-correlated variant with constant `σ̌₂` (m×m) and
    /// `σ̌₃` (m×d).
    pub fn sensor(mut self, sigma2: Vec<f64>, sigma3: Vec<f64>) -> Self {
        self.sensor = Some((sigma2, sigma3));
        self
    }

    pub fn iota(mut self, iota: f64) -> Self {
        self.iota = iota;
        self
    }

    pub fn observation_x_free(mut self, flag: bool) -> Self {
        self.observation_x_free = flag;
        self
    }

    pub fn mark_rule(mut self, rule: MarkRule) -> Self {
        self.mark_rule = rule;
        self
    }

    pub fn build(self) -> Result<SystemSpec> {
        let Dims { n, m, d, .. } = self.dims;
        if n == 0 || m == 0 {
            return Err(Error::Dimension("signal and observation dimensions must be >= 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.iota > 0.0 && self.iota < 1.0) {
            return Err(Error::param(format!("iota must lie in (0,1), got {}", self.iota)));
        }
        self.nu1.validate()?;
        self.nu2.validate()?;
        let variant = match self.sensor {
            None => Variant::Feedback,
            Some((s2, s3)) => {
                if self.sigma0.is_some() {
                    return Err(Error::param(
                        "sensor variant takes its signal diffusion from sigma1 only; sigma0 must not be set",
                    ));
                }
                if self.sigma2.is_some() {
                    return Err(Error::param("sensor variant uses the constant mixing instead of a sigma2 map"));
                }
                Variant::Sensor(SensorMixing::new(m, d, s2, s3)?)
            }
        };
        let identity: StateMap = Arc::new(move |_, _, o: &mut [f64]| {
            o.fill(0.0);
            (0..m).for_each(|i| o[i * m + i] = 1.0);
        });
        let zero: StateMap = Arc::new(|_, _, o: &mut [f64]| o.fill(0.0));
        let dims = Dims {
            k1: self.nu1.dim(),
            k2: self.nu2.dim(),
            ..self.dims
        };
        Ok(SystemSpec {
            name: self.name,
            dims,
            horizon: self.horizon,
            b1: self.b1,
            sigma0: self.sigma0.unwrap_or(zero),
            sigma1: self.sigma1,
            f1: self.f1,
            b2: self.b2,
            sigma2: self.sigma2.unwrap_or(identity),
            f2: self.f2,
            lambda: self.lambda,
            marks1: self.nu1.frozen_sample(self.mark_rule),
            marks2: self.nu2.frozen_sample(self.mark_rule),
            nu1: self.nu1,
            nu2: self.nu2,
            variant,
            iota: self.iota,
            observation_x_free: self.observation_x_free,
            mark_rule: self.mark_rule,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::measure::MarkLaw;

    fn diag_spec(s: [f64; 2], b: [f64; 2]) -> SystemSpec {
        SystemSpec::builder("diag", 1, 2, 1)
            .sigma2(move |_, _, o| o.copy_from_slice(&[s[0], 0.0, 0.0, s[1]]))
            .b2(move |_, _, _, o| o.copy_from_slice(&b))
            .build()
            .unwrap()
    }

    #[test]
    fn h_identity_case() {
        let s = SystemSpec::builder("id", 1, 1, 1)
            .b2(|_, x, _, o| o[0] = 3.0 * x[0])
            .build()
            .unwrap();
        assert_eq!(s.observation_h(0.0, &[0.5], &[0.0]).unwrap(), vec![1.5]);
    }

    #[test]
    fn h_scalar_division() {
        let s = SystemSpec::builder("s", 1, 1, 1)
            .sigma2(|_, _, o| o[0] = 2.0)
            .b2(|_, _, _, o| o[0] = 4.0)
            .build()
            .unwrap();
        assert_eq!(s.observation_h(0.0, &[0.0], &[0.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn h_diagonal_two_by_two() {
        let s = diag_spec([2.0, 4.0], [2.0, 8.0]);
        let h = s.observation_h(0.0, &[0.0], &[0.0, 0.0]).unwrap();
        assert!((h[0] - 1.0).abs() < 1e-15 && (h[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_sigma2_reports_condition() {
        let s = SystemSpec::builder("sing", 1, 1, 1)
            .sigma2(|_, y, o| o[0] = y[0])
            .build()
            .unwrap();
        match s.observation_h(0.0, &[0.0], &[0.0]) {
            Err(Error::Singular { condition, .. }) => assert!(condition.is_infinite() || condition > 1e12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn sensor_identity_enforced() {
        let c = 0.6f64;
        assert!(SystemSpec::builder("ok", 1, 1, 1).sensor(vec![c], vec![0.8]).build().is_ok());
        let err = SystemSpec::builder("bad", 1, 1, 1).sensor(vec![c], vec![0.7]).build();
        assert!(matches!(err, Err(Error::ModelViolation(_))));
    }

    #[test]
    fn sensor_decomposition_recovers_signal_covariance() {
        let (c, s) = (0.6, 0.8);
        let spec = SystemSpec::builder("sensor", 1, 1, 1)
            .sigma1(|_, _, o| o[0] = 1.5)
            .sensor(vec![c], vec![s])
            .build()
            .unwrap();
        let mut r = [0.0];
        let mut k = [0.0];
        let mut scratch = [0.0];
        spec.residual_diffusion(0.0, &[0.0], &mut r, &mut scratch);
        spec.cross_loading(0.0, &[0.0], &mut k, &mut scratch);
        assert!((r[0] * r[0] + k[0] * k[0] - 2.25).abs() < 1e-12);
        assert!((k[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn effective_h_adds_missed_jump_drift() {
        let spec = SystemSpec::builder("j", 1, 1, 1)
            .b2(|_, _, _, o| o[0] = 1.0)
            .f2(|_, _, u, o| o[0] = u[0])
            .lambda(|_, _, _| 0.25)
            .nu2(LevyMeasure::new(2.0, MarkLaw::Point(vec![0.5])).unwrap())
            .build()
            .unwrap();
        let h = spec.effective_h(0.0, &[0.0], &[0.0]).unwrap();
        assert!((h[0] - (1.0 + 2.0 * 0.5 * 0.75)).abs() < 1e-15);
        assert_eq!(spec.observation_h(0.0, &[0.0], &[0.0]).unwrap(), vec![1.0]);
    }
}
