use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LinearSpec;
use crate::simulate::ObservationRecord;
use crate::{Error, Result};

/// Riccati sub-steps per observation step.
const SUBSTEPS: usize = 10;

/// Gaussian posterior `(mean, covariance)` per observation node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanPath {
    pub n: usize,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl KalmanPath {
    pub fn mean_at(&self, j: usize) -> &[f64] {
        &self.mean[j * self.n..(j + 1) * self.n]
    }

    pub fn cov_at(&self, j: usize) -> &[f64] {
        &self.cov[j * self.n * self.n..(j + 1) * self.n * self.n]
    }
}

struct Model {
    a: DMatrix<f64>,
    c: DVector<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
    cross: DMatrix<f64>,
    rr_inv: DMatrix<f64>,
}

impl Model {
    /// `K = (PHᵀ + Σ₁Rᵀ)(RRᵀ)⁻¹`
    fn gain(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        (p * self.h.transpose() + &self.cross) * &self.rr_inv
    }

    /// `Ṗ = AP + PAᵀ + Σ₀Σ₀ᵀ + Σ₁Σ₁ᵀ − K RRᵀ Kᵀ`
    fn riccati(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.gain(p);
        let rr = self.rr_inv.clone().try_inverse().expect("inverse of an invertible matrix");
        &self.a * p + p * self.a.transpose() + &self.q - &k * rr * k.transpose()
    }
}

/// Continuous-time Kalman–Bucy filter with correlated signal and observation
/// noise, driven by the increments of the record. The Riccati equation is
/// integrated by RK4 on `SUBSTEPS` sub-steps per record step; the mean takes
/// matching Euler sub-steps with the observation increment split evenly.
pub fn kalman_bucy(lin: &LinearSpec, obs: &ObservationRecord) -> Result<KalmanPath> {
    lin.validate()?;
    let (n, m, d) = (lin.n, lin.m, lin.d);
    if obs.m != m {
        return Err(Error::Dimension(format!("record has m={}, linear spec m={m}", obs.m)));
    }
    if !obs.jumps.is_empty() {
        return Err(Error::param("the Kalman–Bucy oracle needs a jump-free observation record"));
    }
    let r = DMatrix::from_row_slice(m, m, &lin.r);
    let rr = &r * r.transpose();
    let rr_inv = rr
        .clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::param("r: observation noise covariance R Rᵀ is not invertible"))?;
    let s0 = DMatrix::from_row_slice(n, d, &lin.sigma0);
    let s1 = DMatrix::from_row_slice(n, m, &lin.sigma1);
    let model = Model {
        a: DMatrix::from_row_slice(n, n, &lin.a),
        c: DVector::from_row_slice(&lin.c),
        h: DMatrix::from_row_slice(m, n, &lin.h),
        q: &s0 * s0.transpose() + &s1 * s1.transpose(),
        cross: &s1 * r.transpose(),
        rr_inv,
    };
    let mut mean = DVector::from_row_slice(&lin.m0);
    let mut p = DMatrix::from_row_slice(n, n, &lin.p0);
    let mut out = KalmanPath {
        n,
        times: obs.times.clone(),
        mean: Vec::with_capacity(obs.nodes() * n),
        cov: Vec::with_capacity(obs.nodes() * n * n),
    };
    let push = |out: &mut KalmanPath, mean: &DVector<f64>, p: &DMatrix<f64>| {
        out.mean.extend(mean.iter());
        for i in 0..n {
            for j in 0..n {
                out.cov.push(p[(i, j)]);
            }
        }
    };
    push(&mut out, &mean, &p);
    for j in 0..obs.steps() {
        let h = (obs.times[j + 1] - obs.times[j]) / SUBSTEPS as f64;
        let dy = (DVector::from_row_slice(obs.y_at(j + 1)) - DVector::from_row_slice(obs.y_at(j))) / SUBSTEPS as f64;
        for _ in 0..SUBSTEPS {
            let k = model.gain(&p);
            let innovation = &dy - &model.h * &mean * h;
            mean += (&model.a * &mean + &model.c) * h + k * innovation;
            let k1 = model.riccati(&p);
            let k2 = model.riccati(&(&p + &k1 * (h / 2.0)));
            let k3 = model.riccati(&(&p + &k2 * (h / 2.0)));
            let k4 = model.riccati(&(&p + &k3 * h));
            p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            p = (&p + p.transpose()) * 0.5;
        }
        if !(mean.iter().all(|v| v.is_finite()) && p.iter().all(|v| v.is_finite())) {
            return Err(Error::NumericOverflow { term: "Kalman–Bucy recursion".into(), detail: format!("at t={}", obs.times[j + 1]) });
        }
        push(&mut out, &mean, &p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::TimeGrid;

    fn flat_record(steps: usize, t1: f64) -> ObservationRecord {
        let grid = TimeGrid::new(0.0, t1, steps).unwrap();
        let times: Vec<f64> = grid.nodes().collect();
        let y = vec![0.0; times.len()];
        ObservationRecord::from_parts(grid, 1, times, y.clone(), y, vec![]).unwrap()
    }

    #[test]
    fn no_information_follows_lyapunov() {
        let (a, s0) = (-0.7, 0.6);
        let lin = LinearSpec::scalar(a, 0.0, s0, 0.0, 0.0, 1.0, 0.0, 2.0);
        let kb = kalman_bucy(&lin, &flat_record(100, 1.0)).unwrap();
        let stat = s0 * s0 / (-2.0 * a);
        for (j, &t) in kb.times.iter().enumerate() {
            let want = stat + (2.0 - stat) * (2.0 * a * t).exp();
            assert!((kb.cov_at(j)[0] - want).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn independent_noise_reaches_riccati_root() {
        let (a, s0, h, r) = (-1.0, 0.5, 1.0, 1.0);
        let lin = LinearSpec::scalar(a, 0.0, s0, 0.0, h, r, 0.0, 1.0);
        let kb = kalman_bucy(&lin, &flat_record(200, 20.0)).unwrap();
        let root = r * r * (a + (a * a + h * h * s0 * s0 / (r * r)).sqrt()) / (h * h);
        assert!((kb.cov_at(kb.times.len() - 1)[0] - root).abs() < 1e-10);
    }

    #[test]
    fn sharper_observations_shrink_variance() {
        let mut last = f64::INFINITY;
        for r in [1.0, 0.3, 0.1, 0.03, 0.01] {
            let lin = LinearSpec::scalar(-1.0, 0.0, 0.5, 0.0, 1.0, r, 0.0, 1.0);
            let kb = kalman_bucy(&lin, &flat_record(2000, 1.0)).unwrap();
            let p = kb.cov_at(kb.times.len() - 1)[0];
            assert!(p < last && p > 0.0);
            last = p;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn singular_noise_is_a_parameter_error() {
        let lin = LinearSpec::scalar(-1.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 1.0);
        assert!(matches!(kalman_bucy(&lin, &flat_record(10, 1.0)), Err(Error::Parameter(_))));
    }
}
