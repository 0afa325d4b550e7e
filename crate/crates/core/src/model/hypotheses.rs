//! Sampling-based checks of the regularity conditions on the coefficients.
//!
//! Each condition is reduced to a nonnegative ratio compared with a
//! configurable ceiling. Log-modulus refinements of the Lipschitz
//! conditions are checked through the plain Lipschitz ratio.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spec::{Dims, SystemSpec, Variant};
use crate::linalg;
use crate::rng::SeedTree;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub x2: Option<Vec<f64>>,
    pub y: Vec<f64>,
    pub y2: Option<Vec<f64>>,
    pub u: Option<Vec<f64>>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub name: String,
    pub pairs: usize,
    pub worst_ratio: f64,
    pub ceiling: f64,
    pub pass: bool,
    pub witness: Option<Witness>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub spec: String,
    pub seed: u64,
    pub budget: usize,
    pub entries: Vec<HypothesisEntry>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }
}

pub const H1: &str = "H1_b1_sigma0_sigma1_f1";
pub const H2: &str = "H2_b1_sigma0_sigma1_f1";
pub const H1P: &str = "H1'_b1_sigma0_sigma1_f1";
pub const H2P: &str = "H2'_b1_sigma0_sigma1_f1";
pub const H3F1: &str = "H3_f1";
pub const H1S2: &str = "H1_sigma2_f2";
pub const H2B2: &str = "H2_b2_sigma2_f2";
pub const H3B2: &str = "H3_b2";
pub const HLAMBDA: &str = "H_lambda";
pub const SENSOR: &str = "sensor_mixing";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConfig {
    pub x_half_width: f64,
    pub y_half_width: f64,
    pub lipschitz_ceiling: f64,
    pub growth_ceiling: f64,
    pub bound_ceiling: f64,
    /// Floor for `λ`; `None` uses the system's own `ι`.
    pub iota: Option<f64>,
    pub det_floor: f64,
    pub fd_step: f64,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self {
            x_half_width: 10.0,
            y_half_width: 10.0,
            lipschitz_ceiling: 100.0,
            growth_ceiling: 100.0,
            bound_ceiling: 100.0,
            iota: None,
            det_floor: 1e-6,
            fd_step: 1e-6,
        }
    }
}

pub fn validate_hypotheses(spec: &SystemSpec, sample_budget: usize, seed: u64) -> Result<HypothesisReport> {
    validate_hypotheses_with(spec, &HypothesisConfig::default(), sample_budget, seed)
}

struct Tracker {
    name: &'static str,
    ceiling: f64,
    note: String,
    worst: f64,
    witness: Option<Witness>,
    pairs: usize,
}

impl Tracker {
    fn new(name: &'static str, ceiling: f64, note: impl Into<String>) -> Self {
        Self {
            name,
            ceiling,
            note: note.into(),
            worst: 0.0,
            witness: None,
            pairs: 0,
        }
    }

    fn offer(&mut self, ratio: f64, w: impl FnOnce(f64) -> Witness) {
        self.pairs += 1;
        let r = if ratio.is_nan() { f64::INFINITY } else { ratio.max(0.0) };
        if self.witness.is_none() || r > self.worst {
            self.worst = r;
            self.witness = Some(w(r));
        }
    }

    fn finish(self, strict: bool) -> HypothesisEntry {
        let pass = if strict { self.worst < self.ceiling } else { self.worst <= self.ceiling };
        HypothesisEntry {
            name: self.name.to_string(),
            pairs: self.pairs,
            worst_ratio: self.worst,
            ceiling: self.ceiling,
            pass: pass && self.worst.is_finite(),
            witness: self.witness,
            note: self.note,
        }
    }
}

fn diff_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Per-mark running maxima used to build the `G_i(u)` envelopes.
struct MarkEnvelope {
    max: Vec<f64>,
    arg: Vec<Option<(f64, Vec<f64>)>>,
}

impl MarkEnvelope {
    fn new(k: usize) -> Self {
        Self { max: vec![0.0; k], arg: vec![None; k] }
    }
    fn offer(&mut self, q: usize, v: f64, t: f64, x: &[f64]) {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if self.arg[q].is_none() || v > self.max[q] {
            self.max[q] = v;
            self.arg[q] = Some((t, x.to_vec()));
        }
    }
}

pub fn validate_hypotheses_with(
    spec: &SystemSpec,
    cfg: &HypothesisConfig,
    sample_budget: usize,
    seed: u64,
) -> Result<HypothesisReport> {
    if sample_budget < 2 {
        return Err(Error::param("hypothesis sample budget must be at least 2"));
    }
    let Dims { n, m, d, .. } = spec.dims;
    let iota = cfg.iota.unwrap_or(spec.iota);
    let marks1 = spec.marks1();
    let marks2 = spec.marks2();
    let mut rng = SeedTree::new(seed).child("hypotheses").rng();

    let mut h1 = Tracker::new(H1, cfg.lipschitz_ceiling, "Lipschitz proxy for the kappa moduli, p'=2,4");
    let mut h2 = Tracker::new(H2, cfg.growth_ceiling, "squared linear growth ratio");
    let mut h1p = Tracker::new(H1P, cfg.lipschitz_ceiling, "Lipschitz constant; G1 envelope moments checked after sampling");
    let mut h2p = Tracker::new(H2P, cfg.bound_ceiling, "uniform bound on b1, sigma0, sigma1 and int G2^2");
    let mut h3 = Tracker::new(H3F1, 1.0, "det_floor / |det(I + J_f1)|");
    let mut hs2 = Tracker::new(H1S2, cfg.lipschitz_ceiling, "squared Lipschitz ratio in y");
    let mut hb2 = Tracker::new(H2B2, cfg.bound_ceiling, "max of |b2|, |sigma2(t,0)|, |sigma2^-1|, int |f2(t,0,u)|^2");
    let mut h3b2 = Tracker::new(H3B2, cfg.lipschitz_ceiling, "Lipschitz ratio of b2 in x");
    let mut hl = Tracker::new(HLAMBDA, 1.0, "max(iota / lambda, lambda); must stay below 1");

    let mut g1 = MarkEnvelope::new(marks1.len());
    let mut g2 = MarkEnvelope::new(marks1.len());
    let mut lmin = MarkEnvelope::new(marks2.len());

    let r = spec.residual_noise_dim();
    let (mut ba, mut bb) = (vec![0.0; n], vec![0.0; n]);
    let (mut s0a, mut s0b) = (vec![0.0; n * r.max(1)], vec![0.0; n * r.max(1)]);
    let (mut s1a, mut s1b) = (vec![0.0; n * m], vec![0.0; n * m]);
    let mut scratch = vec![0.0; n * m];
    let (mut fa, mut fb) = (vec![0.0; n], vec![0.0; n]);
    let (mut b2a, mut b2b) = (vec![0.0; m], vec![0.0; m]);
    let (mut s2a, mut s2b) = (vec![0.0; m * m], vec![0.0; m * m]);
    let (mut f2a, mut f2b) = (vec![0.0; m], vec![0.0; m]);
    let mut jac = vec![0.0; n * n];
    let mut xs = vec![0.0; n];
    let zero_y = vec![0.0; m];

    let hx = cfg.x_half_width;
    let hy = cfg.y_half_width;
    for i in 0..sample_budget {
        let t = if i < 3 { spec.horizon * i as f64 / 2.0 } else { rng.random::<f64>() * spec.horizon };
        let (x1, y1): (Vec<f64>, Vec<f64>) = match i {
            0 => (vec![0.0; n], vec![0.0; m]),
            1 => (vec![hx; n], vec![hy; m]),
            2 => (vec![-hx; n], vec![-hy; m]),
            _ => (
                (0..n).map(|_| rng.random_range(-hx..=hx)).collect(),
                (0..m).map(|_| rng.random_range(-hy..=hy)).collect(),
            ),
        };
        // alternate far and near partners so both global and local slopes are seen
        let near = i % 2 == 1;
        let partner = |rng: &mut crate::rng::StreamRng, c: &[f64], hw: f64| -> Vec<f64> {
            c.iter()
                .map(|v| {
                    if near {
                        let z: f64 = StandardNormal.sample(rng);
                        v + 1e-3 * hw.max(1.0) * z
                    } else {
                        rng.random_range(-hw..=hw)
                    }
                })
                .collect()
        };
        let mut x2 = partner(&mut rng, &x1, hx);
        let mut y2 = partner(&mut rng, &y1, hy);
        if diff_sq(&x1, &x2) == 0.0 {
            x2[0] += 1e-3;
        }
        if diff_sq(&y1, &y2) == 0.0 {
            y2[0] += 1e-3;
        }
        let dx2 = diff_sq(&x1, &x2);
        let dx = dx2.sqrt();
        let dy2 = diff_sq(&y1, &y2);
        let wit = |x2: Option<&Vec<f64>>, y2: Option<&Vec<f64>>, u: Option<&[f64]>| {
            let (x1, y1) = (x1.clone(), y1.clone());
            let (x2, y2, u) = (x2.cloned(), y2.cloned(), u.map(|u| u.to_vec()));
            move |ratio| Witness { t, x: x1, x2, y: y1, y2, u, ratio }
        };

        // signal coefficients at x1, x2
        spec.b1(t, &x1, &mut ba);
        spec.b1(t, &x2, &mut bb);
        spec.residual_diffusion(t, &x1, &mut s0a[..n * r], &mut scratch);
        spec.residual_diffusion(t, &x2, &mut s0b[..n * r], &mut scratch);
        match spec.variant {
            Variant::Feedback => {
                spec.sigma1(t, &x1, &mut s1a);
                spec.sigma1(t, &x2, &mut s1b);
            }
            Variant::Sensor(_) => {
                spec.cross_loading(t, &x1, &mut s1a, &mut scratch);
                spec.cross_loading(t, &x2, &mut s1b, &mut scratch);
            }
        }
        let db = diff_sq(&ba, &bb).sqrt();
        let ds0 = diff_sq(&s0a[..n * r], &s0b[..n * r]).sqrt();
        let ds1 = diff_sq(&s1a, &s1b).sqrt();
        let (mut jf2, mut jf4, mut f1sq) = (0.0, 0.0, 0.0);
        for q in 0..marks1.len() {
            let u = marks1.mark(q);
            let w = marks1.weights[q];
            spec.f1(t, &x1, u, &mut fa);
            spec.f1(t, &x2, u, &mut fb);
            let df2 = diff_sq(&fa, &fb);
            jf2 += w * df2;
            jf4 += w * df2 * df2;
            let fa2: f64 = fa.iter().map(|v| v * v).sum();
            f1sq += w * fa2;
            g1.offer(q, df2.sqrt() / dx, t, &x1);
            g2.offer(q, fa2.sqrt(), t, &x1);

            // Jacobian of x -> f1(t,x,u) by central differences
            for j in 0..n {
                xs.copy_from_slice(&x1);
                xs[j] += cfg.fd_step;
                spec.f1(t, &xs, u, &mut fa);
                xs[j] -= 2.0 * cfg.fd_step;
                spec.f1(t, &xs, u, &mut fb);
                for k in 0..n {
                    jac[k * n + j] = (fa[k] - fb[k]) / (2.0 * cfg.fd_step) + if k == j { 1.0 } else { 0.0 };
                }
            }
            let det = linalg::determinant(&jac, n).abs();
            h3.offer(cfg.det_floor / det, wit(None, None, Some(u)));
        }
        let lip = (db / dx).max(ds0 * ds0 / dx2).max(ds1 * ds1 / dx2).max(jf2 / dx2).max(jf4 / (dx2 * dx2));
        h1.offer(lip, wit(Some(&x2), None, None));
        h1p.offer((db / dx).max(ds0 / dx).max(ds1 / dx), wit(Some(&x2), None, None));

        let nb = ba.iter().map(|v| v * v).sum::<f64>();
        let n0 = s0a[..n * r].iter().map(|v| v * v).sum::<f64>();
        let n1 = s1a.iter().map(|v| v * v).sum::<f64>();
        let xn = linalg::norm(&x1);
        h2.offer((nb + n0 + n1 + f1sq) / ((1.0 + xn) * (1.0 + xn)), wit(None, None, None));
        h2p.offer(nb.sqrt() + n0.sqrt() + n1.sqrt(), wit(None, None, None));

        // observation coefficients
        spec.b2(t, &x1, &y1, &mut b2a);
        spec.b2(t, &x2, &y1, &mut b2b);
        h3b2.offer(diff_sq(&b2a, &b2b).sqrt() / dx, wit(Some(&x2), None, None));

        let mut ratio_s2 = 0.0f64;
        if let Variant::Feedback = spec.variant {
            spec.sigma2(t, &y1, &mut s2a);
            spec.sigma2(t, &y2, &mut s2b);
            ratio_s2 = diff_sq(&s2a, &s2b) / dy2;
        }
        let mut jf2y = 0.0;
        let mut f2zero = 0.0;
        for q in 0..marks2.len() {
            let u = marks2.mark(q);
            let w = marks2.weights[q];
            spec.f2(t, &y1, u, &mut f2a);
            spec.f2(t, &y2, u, &mut f2b);
            jf2y += w * diff_sq(&f2a, &f2b);
            spec.f2(t, &zero_y, u, &mut f2a);
            f2zero += w * f2a.iter().map(|v| v * v).sum::<f64>();
        }
        hs2.offer(ratio_s2.max(jf2y / dy2), wit(None, Some(&y2), None));

        let b2n = linalg::norm(&b2a);
        let bound = match spec.variant {
            Variant::Sensor(_) => b2n.max(f2zero),
            Variant::Feedback => {
                spec.sigma2(t, &zero_y, &mut s2a);
                let s0n = linalg::norm(&s2a);
                spec.sigma2(t, &y1, &mut s2b);
                let inv_n = match linalg::invert(&s2b, m, t) {
                    Ok(inv) => linalg::norm(&inv),
                    Err(_) => f64::INFINITY,
                };
                b2n.max(s0n).max(inv_n).max(f2zero)
            }
        };
        hb2.offer(bound, wit(None, None, None));

        for q in 0..marks2.len() {
            let u = marks2.mark(q);
            let l = spec.lambda(t, &x1, u);
            let ratio = if l.is_finite() && l > 0.0 { (iota / l).max(l) } else { f64::INFINITY };
            hl.offer(ratio, wit(None, None, Some(u)));
            lmin.offer(q, -l, t, &x1);
        }
    }

    // mark-integrated envelopes
    let lp = cfg.lipschitz_ceiling;
    let g1_moment: f64 = (0..marks1.len())
        .map(|q| {
            let g = g1.max[q] / lp;
            marks1.weights[q] * (g + g * g + g.powi(4))
        })
        .sum();
    let kp = cfg.bound_ceiling;
    let g2_moment: f64 = (0..marks1.len())
        .map(|q| marks1.weights[q] * (g2.max[q] / kp).powi(2))
        .sum();
    let envelope_witness = |env: &MarkEnvelope, q: usize, ratio: f64, marks: &super::MarkSample| {
        let (t, x) = env.arg[q].clone().unwrap_or((0.0, vec![0.0; n]));
        Witness { t, x, x2: None, y: vec![0.0; m], y2: None, u: Some(marks.mark(q).to_vec()), ratio }
    };
    if !marks1.is_empty() {
        let q = (0..marks1.len()).max_by(|&a, &b| g1.max[a].total_cmp(&g1.max[b])).unwrap();
        // the Lipschitz entry also fails when ∫(G₁ + G₁² + G₁⁴)dν is not finite
        let r = if g1_moment.is_finite() { h1p.worst } else { f64::INFINITY };
        if r > h1p.worst {
            h1p.worst = r;
            h1p.witness = Some(envelope_witness(&g1, q, r, marks1));
        }
        let q = (0..marks1.len()).max_by(|&a, &b| g2.max[a].total_cmp(&g2.max[b])).unwrap();
        let r = g2_moment * kp;
        if !(r <= h2p.worst) {
            h2p.worst = if r.is_nan() { f64::INFINITY } else { r };
            h2p.witness = Some(envelope_witness(&g2, q, h2p.worst, marks1));
        }
    }
    if !marks2.is_empty() {
        // ∫ (1 − L)²/L dν₂ with L(u) the sampled minimum of λ
        let integral: f64 = (0..marks2.len())
            .map(|q| {
                let l = -lmin.max[q];
                marks2.weights[q] * (1.0 - l).powi(2) / l
            })
            .sum();
        let r = integral / cfg.bound_ceiling;
        if !(r <= hl.worst) {
            let q = (0..marks2.len()).max_by(|&a, &b| lmin.max[a].total_cmp(&lmin.max[b])).unwrap();
            hl.worst = if r.is_nan() { f64::INFINITY } else { r };
            hl.witness = Some(envelope_witness(&lmin, q, hl.worst, marks2));
        }
    }

    let mut entries = vec![
        h1.finish(false),
        h2.finish(false),
        h1p.finish(false),
        h2p.finish(false),
        h3.finish(true),
        hs2.finish(false),
        hb2.finish(false),
        h3b2.finish(false),
        hl.finish(true),
    ];
    if let Variant::Sensor(mix) = &spec.variant {
        let defect = super::spec::SensorMixing::identity_defect(m, d, &mix.sigma2, &mix.sigma3);
        let ratio = defect / super::spec::SensorMixing::TOLERANCE;
        entries.push(HypothesisEntry {
            name: SENSOR.into(),
            pairs: 1,
            worst_ratio: ratio,
            ceiling: 1.0,
            pass: ratio <= 1.0,
            witness: Some(Witness { t: 0.0, x: vec![0.0; n], x2: None, y: vec![0.0; m], y2: None, u: None, ratio }),
            note: "identity defect of the sensor mixing over its tolerance".into(),
        });
    }
    Ok(HypothesisReport { spec: spec.name.clone(), seed, budget: sample_budget, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::measure::{LevyMeasure, MarkLaw};

    fn linear() -> crate::model::SystemSpecBuilder {
        SystemSpec::builder("lin", 1, 1, 1)
            .b1(|_, x, o| o[0] = -x[0])
            .sigma0(|_, _, o| o[0] = 1.0)
            .sigma1(|_, _, o| o[0] = 1.0)
            .b2(|_, x, _, o| o[0] = x[0].clamp(-5.0, 5.0))
            .nu2(LevyMeasure::new(1.0, MarkLaw::Point(vec![0.0])).unwrap())
    }

    #[test]
    fn linear_spec_passes() {
        let r = validate_hypotheses(&linear().build().unwrap(), 200, 7).unwrap();
        assert!(r.all_pass(), "{:#?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn singular_sigma2_fails_near_zero() {
        let spec = linear().sigma2(|_, y, o| o[0] = y[0]).build().unwrap();
        let r = validate_hypotheses(&spec, 200, 7).unwrap();
        let e = r.get(H2B2).unwrap();
        assert!(!e.pass);
        let w = e.witness.as_ref().unwrap();
        assert!(w.y[0].abs() < 0.2, "witness y = {:?}", w.y);
    }

    #[test]
    fn logistic_lambda_fails_without_floor() {
        let spec = linear().lambda(|_, x, _| 1.0 / (1.0 + (-x[0]).exp())).build().unwrap();
        let cfg = HypothesisConfig { x_half_width: 25.0, iota: Some(1e-6), ..Default::default() };
        let r = validate_hypotheses_with(&spec, &cfg, 200, 3).unwrap();
        let e = r.get(HLAMBDA).unwrap();
        assert!(!e.pass);
        let w = e.witness.as_ref().unwrap();
        let l = 1.0 / (1.0 + (-w.x[0]).exp());
        assert!(!(1e-6..1.0).contains(&l));
    }

    #[test]
    fn non_finite_coefficients_are_failures() {
        let spec = linear().b1(|_, x, o| o[0] = 1.0 / x[0]).build().unwrap();
        let r = validate_hypotheses(&spec, 50, 1).unwrap();
        let e = r.get(H2).unwrap();
        assert!(!e.pass && e.witness.is_some());
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = linear().build().unwrap();
        assert_eq!(validate_hypotheses(&spec, 64, 9).unwrap(), validate_hypotheses(&spec, 64, 9).unwrap());
    }

    #[test]
    fn budget_below_two_rejected() {
        assert!(validate_hypotheses(&linear().build().unwrap(), 1, 0).is_err());
    }
}
