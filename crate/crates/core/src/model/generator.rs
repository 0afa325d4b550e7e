use super::measure::MarkSample;
use super::spec::{Dims, SystemSpec};
use super::test_functions::TestFunction;
use crate::{Error, Result};

/// Value of `ℒ_t F (x)` with the estimator variance of its jump integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorValue {
    pub value: f64,
    pub jump_variance: f64,
}

/// Buffers for repeated generator evaluation without allocation.
#[derive(Debug, Clone)]
pub struct GeneratorWorkspace {
    grad: Vec<f64>,
    hess: Vec<f64>,
    drift: Vec<f64>,
    res: Vec<f64>,
    cross: Vec<f64>,
    scratch: Vec<f64>,
    jump: Vec<f64>,
    shifted: Vec<f64>,
}

impl GeneratorWorkspace {
    pub fn new(spec: &SystemSpec) -> Self {
        let Dims { n, m, .. } = spec.dims;
        let r = spec.residual_noise_dim().max(1);
        Self {
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
            drift: vec![0.0; n],
            res: vec![0.0; n * r],
            cross: vec![0.0; n * m],
            scratch: vec![0.0; n * m],
            jump: vec![0.0; n],
            shifted: vec![0.0; n],
        }
    }

    /// `ℒ_t F(x)` split into its four terms
    /// `(drift, diffusion, jump)`; non-finite terms are reported by name.
    pub fn terms(
        &mut self,
        spec: &SystemSpec,
        f: &dyn TestFunction,
        t: f64,
        x: &[f64],
        marks: &MarkSample,
    ) -> Result<[f64; 3]> {
        if f.is_constant() {
            return Ok([0.0; 3]);
        }
        let Dims { n, m, .. } = spec.dims;
        let r = spec.residual_noise_dim();
        f.gradient(x, &mut self.grad);
        f.hessian(x, &mut self.hess);
        spec.b1(t, x, &mut self.drift);
        let drift: f64 = self.grad.iter().zip(&self.drift).map(|(g, b)| g * b).sum();
        check("drift", drift)?;

        spec.residual_diffusion(t, x, &mut self.res[..n * r], &mut self.scratch);
        spec.cross_loading(t, x, &mut self.cross, &mut self.scratch);
        // ½ Σ_ij H_ij (RRᵀ + CCᵀ)_ij = ½ Σ_k (colₖᵀ H colₖ)
        let quad = |mat: &[f64], cols: usize, hess: &[f64]| -> f64 {
            let mut s = 0.0;
            for k in 0..cols {
                for i in 0..n {
                    let a = mat[i * cols + k];
                    if a == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        s += a * hess[i * n + j] * mat[j * cols + k];
                    }
                }
            }
            s
        };
        let diffusion = 0.5 * (quad(&self.res[..n * r], r, &self.hess) + quad(&self.cross, m, &self.hess));
        check("diffusion", diffusion)?;

        let fx = f.value(x);
        let mut jump = 0.0;
        for q in 0..marks.len() {
            let g = self.jump_integrand(spec, f, t, x, fx, marks.mark(q));
            jump += marks.weights[q] * g;
        }
        check("jump", jump)?;
        Ok([drift, diffusion, jump])
    }

    fn jump_integrand(&mut self, spec: &SystemSpec, f: &dyn TestFunction, t: f64, x: &[f64], fx: f64, u: &[f64]) -> f64 {
        spec.f1(t, x, u, &mut self.jump);
        for ((s, a), j) in self.shifted.iter_mut().zip(x).zip(&self.jump) {
            *s = a + j;
        }
        let lin: f64 = self.grad.iter().zip(&self.jump).map(|(g, j)| g * j).sum();
        f.value(&self.shifted) - fx - lin
    }

    pub fn eval(&mut self, spec: &SystemSpec, f: &dyn TestFunction, t: f64, x: &[f64]) -> Result<f64> {
        let [a, b, c] = self.terms(spec, f, t, x, spec.marks1())?;
        Ok(a + b + c)
    }
}

fn check(term: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericOverflow {
            term: format!("{term} term of the generator"),
            detail: format!("evaluated to {v}"),
        })
    }
}

/// `ℒ_t F(x) = ∇F·b₁ + ½tr((σ₀σ₀ᵀ + σ₁σ₁ᵀ)∇²F) + ∫[F(x+f₁) − F(x) − ∇F·f₁] ν₁(du)`
/// with the jump integral taken on the system's frozen mark sample.
pub fn apply_generator(spec: &SystemSpec, f: &dyn TestFunction, t: f64, x: &[f64]) -> Result<GeneratorValue> {
    apply_generator_with(spec, f, t, x, spec.marks1())
}

/// As [`apply_generator`] on a caller-supplied mark sample.
pub fn apply_generator_with(
    spec: &SystemSpec,
    f: &dyn TestFunction,
    t: f64,
    x: &[f64],
    marks: &MarkSample,
) -> Result<GeneratorValue> {
    let mut ws = GeneratorWorkspace::new(spec);
    let [a, b, c] = ws.terms(spec, f, t, x, marks)?;
    let jump_variance = if f.is_constant() {
        0.0
    } else {
        let fx = f.value(x);
        marks.integrate_variance(|u| ws.jump_integrand(spec, f, t, x, fx, u))
    };
    Ok(GeneratorValue { value: a + b + c, jump_variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::measure::{LevyMeasure, MarkLaw};
    use crate::model::test_functions::{Constant, Monomial};

    fn base() -> crate::model::SystemSpecBuilder {
        SystemSpec::builder("g", 1, 1, 1)
    }

    #[test]
    fn constant_is_annihilated() {
        let spec = base()
            .b1(|_, x, o| o[0] = x[0].sin())
            .sigma0(|_, _, o| o[0] = 1.0)
            .build()
            .unwrap();
        assert_eq!(apply_generator(&spec, &Constant(1.0), 0.0, &[0.3]).unwrap().value, 0.0);
    }

    #[test]
    fn drift_only() {
        let spec = base().b1(|_, _, o| o[0] = 2.0).build().unwrap();
        let v = apply_generator(&spec, &Monomial::coordinate(0), 0.0, &[0.7]).unwrap();
        assert_eq!(v.value, 2.0);
    }

    #[test]
    fn diffusion_only() {
        let spec = base().sigma0(|_, _, o| o[0] = 1.0).build().unwrap();
        let v = apply_generator(&spec, &Monomial::square(0), 0.0, &[0.7]).unwrap();
        assert!((v.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_jump() {
        let spec = base()
            .f1(|_, _, u, o| o[0] = u[0])
            .nu1(LevyMeasure::new(1.0, MarkLaw::Point(vec![1.0])).unwrap())
            .build()
            .unwrap();
        let v = apply_generator(&spec, &Monomial::square(0), 0.0, &[0.7]).unwrap();
        assert!((v.value - 1.0).abs() < 1e-14);
        assert_eq!(v.jump_variance, 0.0);
    }

    #[test]
    fn overflow_names_the_term() {
        let spec = base().b1(|_, _, o| o[0] = f64::INFINITY).build().unwrap();
        let err = apply_generator(&spec, &Monomial::coordinate(0), 0.0, &[0.0]).unwrap_err();
        assert!(err.to_string().contains("drift"));
    }
}
