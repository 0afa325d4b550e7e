//! Smooth test functions with analytic first and second derivatives.

use std::sync::Arc;

use crate::{Error, Result};

/// A `C²` function on `ℝⁿ`. Hessians are row-major `n × n`.
pub trait TestFunction: Send + Sync {
    fn name(&self) -> String;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn hessian(&self, x: &[f64], hess: &mut [f64]);
    /// True when the function is identically constant.
    fn is_constant(&self) -> bool {
        false
    }
}

pub type SharedTest = Arc<dyn TestFunction>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn name(&self) -> String {
        if self.0 == 1.0 {
            "one".into()
        } else {
            format!("const({})", self.0)
        }
    }
    fn value(&self, _: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, _: &[f64], g: &mut [f64]) {
        g.fill(0.0);
    }
    fn hessian(&self, _: &[f64], h: &mut [f64]) {
        h.fill(0.0);
    }
    fn is_constant(&self) -> bool {
        true
    }
}

/// `x_i^p` for `p ∈ {1, 2, 3, ...}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub index: usize,
    pub power: u32,
}

impl Monomial {
    pub fn coordinate(index: usize) -> Self {
        Self { index, power: 1 }
    }
    pub fn square(index: usize) -> Self {
        Self { index, power: 2 }
    }
}

impl TestFunction for Monomial {
    fn name(&self) -> String {
        match self.power {
            1 => format!("x{}", self.index),
            p => format!("x{}^{p}", self.index),
        }
    }
    fn value(&self, x: &[f64]) -> f64 {
        x[self.index].powi(self.power as i32)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.fill(0.0);
        let p = self.power as i32;
        g[self.index] = p as f64 * x[self.index].powi(p - 1);
    }
    fn hessian(&self, x: &[f64], h: &mut [f64]) {
        h.fill(0.0);
        let n = x.len();
        let p = self.power as i32;
        if p >= 2 {
            h[self.index * n + self.index] = (p * (p - 1)) as f64 * x[self.index].powi(p - 2);
        }
    }
}

/// `exp(-1 / (1 - r²))` for `r = |x - c| / R < 1`, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Bump {
    /// `(s, g(s), g'(s), g''(s))` in the squared scaled radius `s`.
    fn profile(&self, x: &[f64]) -> Option<(f64, f64, f64)> {
        let r2 = self.radius * self.radius;
        let s: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / r2;
        if s >= 1.0 {
            return None;
        }
        let q = 1.0 / (1.0 - s);
        let g = (-q).exp();
        let g1 = -g * q * q;
        let g2 = g * (q.powi(4) - 2.0 * q.powi(3));
        Some((g, g1, g2))
    }
}

impl TestFunction for Bump {
    fn name(&self) -> String {
        format!("bump(r={})", self.radius)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.profile(x).map_or(0.0, |p| p.0)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.fill(0.0);
        if let Some((_, g1, _)) = self.profile(x) {
            let r2 = self.radius * self.radius;
            for i in 0..x.len() {
                g[i] = g1 * 2.0 * (x[i] - self.center[i]) / r2;
            }
        }
    }
    fn hessian(&self, x: &[f64], h: &mut [f64]) {
        h.fill(0.0);
        if let Some((_, g1, g2)) = self.profile(x) {
            let n = x.len();
            let r2 = self.radius * self.radius;
            for i in 0..n {
                let di = 2.0 * (x[i] - self.center[i]) / r2;
                for j in 0..n {
                    let dj = 2.0 * (x[j] - self.center[j]) / r2;
                    h[i * n + j] = g2 * di * dj + if i == j { g1 * 2.0 / r2 } else { 0.0 };
                }
            }
        }
    }
}

/// Probabilists' Hermite polynomial `He_k` at `x`.
pub fn hermite(k: u32, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    match k {
        0 => a,
        1 => b,
        _ => {
            for j in 1..k {
                let c = x * b - j as f64 * a;
                a = b;
                b = c;
            }
            b
        }
    }
}

/// `He_k(x_i) · exp(-|x|² / (2w²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteWindow {
    pub index: usize,
    pub degree: u32,
    pub width: f64,
}

impl HermiteWindow {
    fn parts(&self, x: &[f64]) -> (f64, f64, f64, f64) {
        let k = self.degree;
        let xi = x[self.index];
        let p = hermite(k, xi);
        let p1 = if k >= 1 { k as f64 * hermite(k - 1, xi) } else { 0.0 };
        let p2 = if k >= 2 { (k * (k - 1)) as f64 * hermite(k - 2, xi) } else { 0.0 };
        let w2 = self.width * self.width;
        let win = (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * w2)).exp();
        (p, p1, p2, win)
    }
}

impl TestFunction for HermiteWindow {
    fn name(&self) -> String {
        format!("hermite{}(w={})", self.degree, self.width)
    }
    fn value(&self, x: &[f64]) -> f64 {
        let (p, _, _, w) = self.parts(x);
        p * w
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        let (p, p1, _, w) = self.parts(x);
        let w2 = self.width * self.width;
        for j in 0..x.len() {
            let dw = -x[j] / w2 * w;
            g[j] = p * dw + if j == self.index { p1 * w } else { 0.0 };
        }
    }
    fn hessian(&self, x: &[f64], h: &mut [f64]) {
        let (p, p1, p2, w) = self.parts(x);
        let n = x.len();
        let w2 = self.width * self.width;
        let i = self.index;
        for j in 0..n {
            for k in 0..n {
                let djk = if j == k { 1.0 } else { 0.0 };
                let dw_j = -x[j] / w2 * w;
                let dw_k = -x[k] / w2 * w;
                let dw_jk = (x[j] * x[k] / (w2 * w2) - djk / w2) * w;
                let mut v = p * dw_jk;
                if j == i {
                    v += p1 * dw_k;
                }
                if k == i {
                    v += p1 * dw_j;
                }
                if j == i && k == i {
                    v += p2 * w;
                }
                h[j * n + k] = v;
            }
        }
    }
}

/// Resolve a test-function name as used in scenario configs:
/// `one`, `x`, `x2`, `bump`, `hermite2`, with an optional coordinate
/// suffix such as `x@1`.
pub fn by_name(name: &str, n: usize) -> Result<SharedTest> {
    let (base, idx) = match name.split_once('@') {
        Some((b, i)) => (b, i.parse::<usize>().map_err(|_| Error::param(format!("bad coordinate in test function `{name}`")))?),
        None => (name, 0),
    };
    if idx >= n {
        return Err(Error::param(format!("test function `{name}` indexes coordinate {idx} of a {n}-dimensional signal")));
    }
    let f: SharedTest = match base {
        "one" => Arc::new(Constant(1.0)),
        "x" => Arc::new(Monomial::coordinate(idx)),
        "x2" => Arc::new(Monomial::square(idx)),
        "bump" => Arc::new(Bump { center: vec![0.0; n], radius: 3.0 }),
        "hermite1" => Arc::new(HermiteWindow { index: idx, degree: 1, width: 2.0 }),
        "hermite2" => Arc::new(HermiteWindow { index: idx, degree: 2, width: 2.0 }),
        "hermite3" => Arc::new(HermiteWindow { index: idx, degree: 3, width: 2.0 }),
        other => return Err(Error::param(format!("unknown test function `{other}`"))),
    };
    Ok(f)
}

/// The default residual family: constant, compact bump and two Hermite
/// windows.
pub fn standard_family(n: usize) -> Vec<SharedTest> {
    ["one", "bump", "hermite1", "hermite2"]
        .iter()
        .map(|s| by_name(s, n).expect("built-in name"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_derivatives(f: &dyn TestFunction, x: &[f64]) {
        let n = x.len();
        let h = 1e-5;
        let mut g = vec![0.0; n];
        let mut hs = vec![0.0; n * n];
        f.gradient(x, &mut g);
        f.hessian(x, &mut hs);
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{} grad {i}: {fd} vs {}", f.name(), g[i]);
            let mut gp = vec![0.0; n];
            let mut gm = vec![0.0; n];
            f.gradient(&xp, &mut gp);
            f.gradient(&xm, &mut gm);
            for j in 0..n {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                assert!((fd - hs[j * n + i]).abs() < 1e-6, "{} hess {i}{j}", f.name());
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x = [0.4, -0.7];
        check_derivatives(&Monomial { index: 1, power: 3 }, &x);
        check_derivatives(&Bump { center: vec![0.1, 0.0], radius: 1.5 }, &x);
        check_derivatives(&HermiteWindow { index: 0, degree: 3, width: 1.3 }, &x);
        check_derivatives(&HermiteWindow { index: 1, degree: 2, width: 0.9 }, &x);
    }

    #[test]
    fn hermite_recursion() {
        assert_eq!(hermite(2, 3.0), 8.0);
        assert_eq!(hermite(3, 2.0), 2.0);
    }

    #[test]
    fn bump_vanishes_outside_support() {
        let b = Bump { center: vec![0.0], radius: 1.0 };
        assert_eq!(b.value(&[1.0]), 0.0);
        assert!(b.value(&[0.0]) > 0.0);
    }

    #[test]
    fn names_resolve() {
        assert!(by_name("x@1", 2).is_ok());
        assert!(by_name("x@2", 2).is_err());
        assert!(by_name("nope", 1).is_err());
    }
}
