//! Ground truth independent of the filter: the Kalman–Bucy filter for the
//! linear-Gaussian case and plain Monte Carlo estimators.

mod kalman;
mod mc;

use serde::{Deserialize, Serialize};

pub use kalman::{kalman_bucy, KalmanPath};
pub use mc::{mc_conditional_oracle, signal_moments_mc, McEstimate, SignalMoments};

use crate::model::{Prior, SystemSpec};
use crate::{Error, Result};

/// `dX = (AX + c)dt + Σ₀dB + Σ₁dW`, `dY = HX dt + R dW`, no jumps.
/// Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub sigma0: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub m0: Vec<f64>,
    pub p0: Vec<f64>,
}

impl LinearSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(a: f64, c: f64, sigma0: f64, sigma1: f64, h: f64, r: f64, m0: f64, p0: f64) -> Self {
        Self {
            n: 1,
            m: 1,
            d: 1,
            a: vec![a],
            c: vec![c],
            sigma0: vec![sigma0],
            sigma1: vec![sigma1],
            h: vec![h],
            r: vec![r],
            m0: vec![m0],
            p0: vec![p0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m, d) = (self.n, self.m, self.d);
        let shapes = [
            ("a", self.a.len(), n * n),
            ("c", self.c.len(), n),
            ("sigma0", self.sigma0.len(), n * d),
            ("sigma1", self.sigma1.len(), n * m),
            ("h", self.h.len(), m * n),
            ("r", self.r.len(), m * m),
            ("m0", self.m0.len(), n),
            ("p0", self.p0.len(), n * n),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Dimension(format!("linear spec field {name} has {got} entries, expected {want}")));
            }
        }
        Ok(())
    }

    /// The Gaussian initial law; requires a diagonal `P₀`.
    pub fn prior(&self) -> Result<Prior> {
        let n = self.n;
        if (0..n).any(|i| (0..n).any(|j| i != j && self.p0[i * n + j] != 0.0)) {
            return Err(Error::param("prior: only diagonal initial covariances can be sampled"));
        }
        let std: Vec<f64> = (0..n).map(|i| self.p0[i * n + i].max(0.0).sqrt()).collect();
        Ok(if std.iter().all(|&s| s == 0.0) {
            Prior::Point(self.m0.clone())
        } else {
            Prior::Gaussian { mean: self.m0.clone(), std }
        })
    }

    /// The same system as a general [`SystemSpec`] with constant coefficients.
    pub fn to_system_spec(&self, name: &str, horizon: f64) -> Result<SystemSpec> {
        self.validate()?;
        let (n, m) = (self.n, self.m);
        let (a, c, s0, s1, h, r) = (self.a.clone(), self.c.clone(), self.sigma0.clone(), self.sigma1.clone(), self.h.clone(), self.r.clone());
        SystemSpec::builder(name, n, m, self.d)
            .horizon(horizon)
            .b1(move |_, x, o| {
                for i in 0..n {
                    o[i] = c[i] + (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>();
                }
            })
            .sigma0(move |_, _, o| o.copy_from_slice(&s0))
            .sigma1(move |_, _, o| o.copy_from_slice(&s1))
            .b2(move |_, x, _, o| {
                for k in 0..m {
                    o[k] = (0..n).map(|j| h[k * n + j] * x[j]).sum();
                }
            })
            .sigma2(move |_, _, o| o.copy_from_slice(&r))
            .build()
    }
}
