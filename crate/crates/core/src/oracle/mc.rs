use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::exec::map_range;
use crate::model::{Prior, SystemSpec, Variant};
use crate::rng::{SeedTree, StreamRng};
use crate::simulate::ObservationRecord;
use crate::stats;
use crate::{Error, Exec, Result};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub se: f64,
    /// Effective sample size of the importance weights.
    pub ess: f64,
}

/// Constant-per-step coefficients evaluated without the `SystemSpec` helpers.
struct Coeffs {
    n: usize,
    m: usize,
    r: usize,
}

impl Coeffs {
    /// `C` and `R` for the signal noise split against the observation driver.
    fn loadings(&self, spec: &SystemSpec, t: f64, x: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, m) = (self.n, self.m);
        match &spec.variant {
            Variant::Feedback => {
                let mut s0 = vec![0.0; n * spec.dims.d];
                let mut s1 = vec![0.0; n * m];
                spec.sigma0(t, x, &mut s0);
                spec.sigma1(t, x, &mut s1);
                (DMatrix::from_row_slice(n, m, &s1), DMatrix::from_row_slice(n, spec.dims.d, &s0))
            }
            Variant::Sensor(mix) => {
                let mut s1 = vec![0.0; n * m];
                spec.sigma1(t, x, &mut s1);
                let s1 = DMatrix::from_row_slice(n, m, &s1);
                let s2 = DMatrix::from_row_slice(m, m, &mix.sigma2);
                let rest = DMatrix::identity(m, m) - s2.transpose() * &s2;
                let eig = rest.symmetric_eigen();
                let root = &eig.eigenvectors
                    * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
                    * eig.eigenvectors.transpose();
                (&s1 * s2.transpose(), &s1 * root)
            }
        }
    }

    fn obs_diffusion(&self, spec: &SystemSpec, t: f64, y: &[f64]) -> DMatrix<f64> {
        let m = self.m;
        match spec.variant {
            Variant::Feedback => {
                let mut s = vec![0.0; m * m];
                spec.sigma2(t, y, &mut s);
                DMatrix::from_row_slice(m, m, &s)
            }
            Variant::Sensor(_) => DMatrix::identity(m, m),
        }
    }
}

fn solve(a: &DMatrix<f64>, b: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or(Error::Singular { t, condition: f64::INFINITY })
}

/// `π_t(F)` at record node `node` by self-normalized importance sampling:
/// independent signal paths under the reference dynamics, weighted by the
/// exponential martingale re-derived here from the coefficient maps.
pub fn mc_conditional_oracle(
    spec: &SystemSpec,
    prior: &Prior,
    obs: &ObservationRecord,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    samples: usize,
    seed: u64,
    node: usize,
) -> Result<McEstimate> {
    let (n, m) = (spec.dims.n, spec.dims.m);
    if node >= obs.nodes() || samples < 2 {
        return Err(Error::param(format!("oracle needs node < {} and at least two samples", obs.nodes())));
    }
    let co = Coeffs { n, m, r: spec.residual_noise_dim() };
    let marks2 = spec.marks2();
    let marks1 = spec.marks1();

    // Reference drivers from the record: σ₂⁻¹(ΔY − jump + Δt∫f₂ν₂).
    let mut dws = Vec::with_capacity(node);
    for j in 0..node {
        let t = obs.times[j];
        let dt = obs.times[j + 1] - t;
        let y = obs.y_at(j);
        let mut v = DVector::from_row_slice(obs.y_at(j + 1)) - DVector::from_row_slice(y);
        let mut buf = vec![0.0; m];
        if let Some(ev) = obs.jump_at(j + 1) {
            spec.f2(ev.t, obs.y_left_at(j + 1), &ev.mark, &mut buf);
            v -= DVector::from_row_slice(&buf);
        }
        for q in 0..marks2.len() {
            spec.f2(t, y, marks2.mark(q), &mut buf);
            v += DVector::from_row_slice(&buf) * (marks2.weights[q] * dt);
        }
        dws.push(solve(&co.obs_diffusion(spec, t, y), &v, t)?);
    }

    let tree = SeedTree::new(seed).child("oracle");
    let one = |i: usize| -> Result<(f64, f64)> {
        let mut rng: StreamRng = tree.index(i as u64).rng();
        let mut x = vec![0.0; n];
        prior.sample(&mut rng, &mut x);
        let mut logw = 0.0;
        let mut buf_n = vec![0.0; n];
        let mut buf_m = vec![0.0; m];
        let mut mark = vec![0.0; spec.dims.k1];
        for (j, dw) in dws.iter().enumerate() {
            let t = obs.times[j];
            let dt = obs.times[j + 1] - t;
            let y = obs.y_at(j);
            // h = σ₂⁻¹(b₂ + ∫ f₂(1 − λ) ν₂)
            spec.b2(t, &x, y, &mut buf_m);
            let mut v = DVector::from_row_slice(&buf_m);
            let mut missed = 0.0;
            for q in 0..marks2.len() {
                let u = marks2.mark(q);
                let miss = marks2.weights[q] * (1.0 - spec.lambda(t, &x, u));
                spec.f2(t, y, u, &mut buf_m);
                v += DVector::from_row_slice(&buf_m) * miss;
                missed += miss;
            }
            let h = solve(&co.obs_diffusion(spec, t, y), &v, t)?;
            logw += h.dot(dw) - 0.5 * h.norm_squared() * dt + missed * dt;

            let (c, r) = co.loadings(spec, t, &x);
            spec.b1(t, &x, &mut buf_n);
            let mut drift = DVector::from_row_slice(&buf_n);
            for q in 0..marks1.len() {
                spec.f1(t, &x, marks1.mark(q), &mut buf_n);
                drift -= DVector::from_row_slice(&buf_n) * marks1.weights[q];
            }
            let db = DVector::from_fn(co.r, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * dt.sqrt()
            });
            let dx = (drift - &c * &h) * dt + &c * dw + r * db;
            x.iter_mut().zip(dx.iter()).for_each(|(a, b)| *a += b);
            if spec.nu1.rate > 0.0 {
                let count: f64 = Poisson::new(spec.nu1.rate * dt)
                    .map_err(|e| Error::param(format!("signal jump rate: {e}")))?
                    .sample(&mut rng);
                for _ in 0..count as u64 {
                    spec.nu1.sample_mark(&mut rng, &mut mark);
                    spec.f1(obs.times[j + 1], &x, &mark, &mut buf_n);
                    x.iter_mut().zip(&buf_n).for_each(|(a, b)| *a += b);
                }
            }
            if let Some(ev) = obs.jump_at(j + 1) {
                let l = spec.lambda(ev.t, &x, &ev.mark);
                if !(l > 0.0 && l < 1.0) {
                    return Err(Error::violation(format!("lambda = {l} outside (0,1) at t={}", ev.t)));
                }
                logw += l.ln();
            }
        }
        Ok((logw, f(&x)))
    };
    let draws = map_range(Exec::default(), samples, one).into_iter().collect::<Result<Vec<_>>>()?;
    let max = draws.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degeneracy { t: obs.times[node], detail: "all oracle weights vanished".into() });
    }
    let w: Vec<f64> = draws.iter().map(|d| (d.0 - max).exp()).collect();
    let sw: f64 = w.iter().sum();
    let value = w.iter().zip(&draws).map(|(a, d)| a * d.1).sum::<f64>() / sw;
    if !value.is_finite() {
        return Err(Error::NonFinite { what: "oracle estimate".into(), index: node });
    }
    let var = w.iter().zip(&draws).map(|(a, d)| a * a * (d.1 - value).powi(2)).sum::<f64>() / (sw * sw);
    let ess = sw * sw / w.iter().map(|a| a * a).sum::<f64>();
    Ok(McEstimate { value, se: var.sqrt(), ess })
}

/// Moments of the signal alone, simulated under its own law with no
/// conditioning, on the given node times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMoments {
    pub n: usize,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub second: Vec<f64>,
    pub second_se: Vec<f64>,
}

/// Plain Euler Monte Carlo of `X` with independent Brownian drivers and
/// signal jumps; no observation enters.
pub fn signal_moments_mc(spec: &SystemSpec, prior: &Prior, times: &[f64], samples: usize, seed: u64) -> Result<SignalMoments> {
    let n = spec.dims.n;
    if samples < 2 || times.len() < 2 {
        return Err(Error::param("signal Monte Carlo needs at least two samples and two nodes"));
    }
    let (nd, m) = match &spec.variant {
        Variant::Feedback => (spec.dims.d, spec.dims.m),
        Variant::Sensor(_) => (0, spec.dims.m),
    };
    let marks1 = spec.marks1();
    let tree = SeedTree::new(seed).child("signal-mc");
    let paths = map_range(Exec::default(), samples, |i| -> Result<Vec<f64>> {
        let mut rng = tree.index(i as u64).rng();
        let mut x = vec![0.0; n];
        prior.sample(&mut rng, &mut x);
        let mut out = Vec::with_capacity(times.len() * n);
        out.extend_from_slice(&x);
        let mut drift = vec![0.0; n];
        let mut buf = vec![0.0; n];
        let mut s0 = vec![0.0; n * nd.max(1)];
        let mut s1 = vec![0.0; n * m];
        let mut mark = vec![0.0; spec.dims.k1];
        for j in 0..times.len() - 1 {
            let (t, dt) = (times[j], times[j + 1] - times[j]);
            spec.b1(t, &x, &mut drift);
            for q in 0..marks1.len() {
                spec.f1(t, &x, marks1.mark(q), &mut buf);
                for a in 0..n {
                    drift[a] -= marks1.weights[q] * buf[a];
                }
            }
            if nd > 0 {
                spec.sigma0(t, &x, &mut s0[..n * nd]);
            }
            spec.sigma1(t, &x, &mut s1);
            let mut dx: Vec<f64> = drift.iter().map(|b| b * dt).collect();
            for k in 0..nd {
                let z: f64 = StandardNormal.sample(&mut rng);
                for a in 0..n {
                    dx[a] += s0[a * nd + k] * z * dt.sqrt();
                }
            }
            for k in 0..m {
                let z: f64 = StandardNormal.sample(&mut rng);
                for a in 0..n {
                    dx[a] += s1[a * m + k] * z * dt.sqrt();
                }
            }
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            if spec.nu1.rate > 0.0 {
                let count: f64 = Poisson::new(spec.nu1.rate * dt)
                    .map_err(|e| Error::param(format!("signal jump rate: {e}")))?
                    .sample(&mut rng);
                for _ in 0..count as u64 {
                    spec.nu1.sample_mark(&mut rng, &mut mark);
                    spec.f1(times[j + 1], &x, &mark, &mut buf);
                    x.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
                }
            }
            out.extend_from_slice(&x);
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut res = SignalMoments {
        n,
        times: times.to_vec(),
        mean: Vec::new(),
        mean_se: Vec::new(),
        second: Vec::new(),
        second_se: Vec::new(),
    };
    for j in 0..times.len() {
        for a in 0..n {
            let v: Vec<f64> = paths.iter().map(|p| p[j * n + a]).collect();
            let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
            let (mu, se) = stats::mean_se(&v);
            let (mu2, se2) = stats::mean_se(&sq);
            res.mean.push(mu);
            res.mean_se.push(se);
            res.second.push(mu2);
            res.second_se.push(se2);
        }
    }
    Ok(res)
}
