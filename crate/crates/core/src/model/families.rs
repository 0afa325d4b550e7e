//! Named scalar parametric families selectable from scenario configs.

use std::collections::BTreeMap;

use serde::Serialize;

use super::measure::{LevyMeasure, MarkLaw};
use super::spec::{Prior, SystemSpec};
use crate::oracle::LinearSpec;
use crate::{Error, Result};

pub type Params = BTreeMap<String, f64>;

/// A system together with its initial law and initial observation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: SystemSpec,
    pub prior: Prior,
    pub y0: Vec<f64>,
    /// Present when the system is linear-Gaussian without jumps.
    pub linear: Option<LinearSpec>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub defaults: &'static [(&'static str, f64)],
}

const COMMON: &[(&str, f64)] = &[("horizon", 1.0), ("x0_mean", 0.0), ("x0_std", 1.0), ("y0", 0.0), ("iota", 1e-6)];

pub const FAMILIES: &[FamilyInfo] = &[
    FamilyInfo {
        name: "linear_gaussian",
        summary: "dX = (aX + c)dt + s0 dB + s1 dW, dY = hX dt + r dW; no jumps",
        defaults: &[("a", -1.0), ("c", 0.0), ("sigma0", 0.5), ("sigma1", 0.5), ("h", 1.0), ("r", 1.0)],
    },
    FamilyInfo {
        name: "saturated_affine",
        summary: "affine signal with Gaussian jumps, saturated observation drift, logistic observation-jump intensity",
        defaults: &[
            ("a", -1.0),
            ("c", 0.0),
            ("sigma0", 0.5),
            ("sigma1", 0.3),
            ("h", 1.0),
            ("sat", 5.0),
            ("r", 1.0),
            ("jump1_rate", 1.0),
            ("jump1_mean", 0.0),
            ("jump1_std", 0.5),
            ("jump2_rate", 2.0),
            ("jump2_mean", 0.0),
            ("jump2_std", 0.3),
            ("lambda_lo", 0.1),
            ("lambda_hi", 0.9),
            ("lambda_slope", 1.0),
        ],
    },
    FamilyInfo {
        name: "trigonometric",
        summary: "dX = (aX + k sin X)dt + s0(1 + cos(X)/2)dB + s1 dW + jumps, b2 = g sin X, lambda = 1/2 + l tanh X",
        defaults: &[
            ("a", -1.0),
            ("k", 1.0),
            ("sigma0", 0.5),
            ("sigma1", 0.4),
            ("g", 1.5),
            ("r", 1.0),
            ("jump1_rate", 1.0),
            ("jump1_std", 0.5),
            ("jump2_rate", 2.0),
            ("jump2_half_width", 0.5),
            ("lambda_amp", 0.3),
        ],
    },
    FamilyInfo {
        name: "uninformative",
        summary: "OU signal with jumps; constant observation drift and intensity, no shared noise",
        defaults: &[
            ("a", -1.0),
            ("sigma0", 0.7),
            ("b", 0.3),
            ("r", 1.0),
            ("jump1_rate", 1.0),
            ("jump1_std", 0.5),
            ("jump2_rate", 1.0),
            ("jump2_size", 0.5),
            ("lambda", 0.4),
        ],
    },
    FamilyInfo {
        name: "sensor_affine",
        summary: "sensor-correlated system: observation noise cos(theta) W + sin(theta) B, saturated drift, logistic intensity",
        defaults: &[
            ("a", -1.0),
            ("sigma1", 0.6),
            ("h", 1.0),
            ("sat", 5.0),
            ("theta", 0.6),
            ("jump1_rate", 0.5),
            ("jump1_std", 0.5),
            ("jump2_rate", 1.0),
            ("jump2_size", 0.4),
            ("lambda_lo", 0.2),
            ("lambda_hi", 0.8),
            ("lambda_slope", 1.0),
        ],
    },
];

pub fn family_names() -> impl Iterator<Item = &'static str> {
    FAMILIES.iter().map(|f| f.name)
}

struct Reader<'a> {
    info: &'a FamilyInfo,
    params: &'a Params,
}

impl Reader<'_> {
    fn get(&self, key: &str) -> f64 {
        self.params
            .get(key)
            .copied()
            .or_else(|| self.info.defaults.iter().chain(COMMON).find(|(k, _)| *k == key).map(|(_, v)| *v))
            .expect("parameter declared in family table")
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Instantiate a named family. Unknown parameter names are rejected.
pub fn build_family(name: &str, params: &Params) -> Result<Scenario> {
    let info = FAMILIES
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::param(format!("family: unknown family `{name}`; known: {}", family_names().collect::<Vec<_>>().join(", "))))?;
    for key in params.keys() {
        if !info.defaults.iter().chain(COMMON).any(|(k, _)| k == key) {
            return Err(Error::param(format!("params.{key}: not a parameter of family `{name}`")));
        }
    }
    if let Some((k, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::param(format!("params.{k}: non-finite value {v}")));
    }
    let p = Reader { info, params };
    let prior = if p.get("x0_std") > 0.0 {
        Prior::Gaussian { mean: vec![p.get("x0_mean")], std: vec![p.get("x0_std")] }
    } else {
        Prior::Point(vec![p.get("x0_mean")])
    };
    let y0 = vec![p.get("y0")];
    let builder = SystemSpec::builder(name, 1, 1, 1).horizon(p.get("horizon")).iota(p.get("iota"));
    let gauss = |rate: f64, mean: f64, std: f64| -> Result<LevyMeasure> {
        if rate == 0.0 {
            Ok(LevyMeasure::none(1))
        } else if std == 0.0 {
            LevyMeasure::new(rate, MarkLaw::Point(vec![mean]))
        } else {
            LevyMeasure::new(rate, MarkLaw::Gaussian { mean: vec![mean], std: vec![std] })
        }
    };
    let positive = |key: &str| -> Result<f64> {
        let v = p.get(key);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::param(format!("params.{key}: must be positive, got {v}")))
        }
    };

    let mut linear = None;
    let spec = match name {
        "linear_gaussian" => {
            let (a, c, s0, s1, h, r) = (p.get("a"), p.get("c"), p.get("sigma0"), p.get("sigma1"), p.get("h"), positive("r")?);
            linear = Some(LinearSpec::scalar(a, c, s0, s1, h, r, p.get("x0_mean"), p.get("x0_std").powi(2)));
            builder
                .b1(move |_, x, o| o[0] = a * x[0] + c)
                .sigma0(move |_, _, o| o[0] = s0)
                .sigma1(move |_, _, o| o[0] = s1)
                .b2(move |_, x, _, o| o[0] = h * x[0])
                .sigma2(move |_, _, o| o[0] = r)
                .build()?
        }
        "saturated_affine" => {
            let (a, c, s0, s1, h, sat, r) =
                (p.get("a"), p.get("c"), p.get("sigma0"), p.get("sigma1"), p.get("h"), positive("sat")?, positive("r")?);
            let (lo, hi, k) = (p.get("lambda_lo"), p.get("lambda_hi"), p.get("lambda_slope"));
            builder
                .b1(move |_, x, o| o[0] = a * x[0] + c)
                .sigma0(move |_, _, o| o[0] = s0)
                .sigma1(move |_, _, o| o[0] = s1)
                .f1(|_, _, u, o| o[0] = u[0])
                .nu1(gauss(p.get("jump1_rate"), p.get("jump1_mean"), p.get("jump1_std"))?)
                .b2(move |_, x, _, o| o[0] = sat * (h * x[0] / sat).tanh())
                .sigma2(move |_, _, o| o[0] = r)
                .f2(|_, _, u, o| o[0] = u[0])
                .nu2(gauss(p.get("jump2_rate"), p.get("jump2_mean"), p.get("jump2_std"))?)
                .lambda(move |_, x, _| lo + (hi - lo) * logistic(k * x[0]))
                .observation_x_free(h == 0.0 && k == 0.0)
                .build()?
        }
        "trigonometric" => {
            let (a, k, s0, s1, g, r) = (p.get("a"), p.get("k"), p.get("sigma0"), p.get("sigma1"), p.get("g"), positive("r")?);
            let amp = p.get("lambda_amp");
            if !(amp.abs() < 0.5) {
                return Err(Error::param(format!("params.lambda_amp: must satisfy |lambda_amp| < 0.5, got {amp}")));
            }
            let w = p.get("jump2_half_width");
            let nu2 = if p.get("jump2_rate") == 0.0 {
                LevyMeasure::none(1)
            } else {
                LevyMeasure::new(p.get("jump2_rate"), MarkLaw::Uniform { low: vec![-w], high: vec![w] })?
            };
            builder
                .b1(move |_, x, o| o[0] = a * x[0] + k * x[0].sin())
                .sigma0(move |_, x, o| o[0] = s0 * (1.0 + 0.5 * x[0].cos()))
                .sigma1(move |_, _, o| o[0] = s1)
                .f1(|_, _, u, o| o[0] = u[0])
                .nu1(gauss(p.get("jump1_rate"), 0.0, p.get("jump1_std"))?)
                .b2(move |_, x, _, o| o[0] = g * x[0].sin())
                .sigma2(move |_, _, o| o[0] = r)
                .f2(|_, _, u, o| o[0] = u[0])
                .nu2(nu2)
                .lambda(move |_, x, _| 0.5 + amp * x[0].tanh())
                .build()?
        }
        "uninformative" => {
            let (a, s0, b, r, l) = (p.get("a"), p.get("sigma0"), p.get("b"), positive("r")?, p.get("lambda"));
            let size = p.get("jump2_size");
            let nu2 = if p.get("jump2_rate") == 0.0 {
                LevyMeasure::none(1)
            } else {
                LevyMeasure::new(p.get("jump2_rate"), MarkLaw::Point(vec![size]))?
            };
            builder
                .b1(move |_, x, o| o[0] = a * x[0])
                .sigma0(move |_, _, o| o[0] = s0)
                .f1(|_, _, u, o| o[0] = u[0])
                .nu1(gauss(p.get("jump1_rate"), 0.0, p.get("jump1_std"))?)
                .b2(move |_, _, _, o| o[0] = b)
                .sigma2(move |_, _, o| o[0] = r)
                .f2(|_, _, u, o| o[0] = u[0])
                .nu2(nu2)
                .lambda(move |_, _, _| l)
                .observation_x_free(true)
                .build()?
        }
        "sensor_affine" => {
            let (a, s1, h, sat, th) = (p.get("a"), p.get("sigma1"), p.get("h"), positive("sat")?, p.get("theta"));
            let (lo, hi, k) = (p.get("lambda_lo"), p.get("lambda_hi"), p.get("lambda_slope"));
            let size = p.get("jump2_size");
            let nu2 = if p.get("jump2_rate") == 0.0 {
                LevyMeasure::none(1)
            } else {
                LevyMeasure::new(p.get("jump2_rate"), MarkLaw::Point(vec![size]))?
            };
            builder
                .b1(move |_, x, o| o[0] = a * x[0])
                .sigma1(move |_, _, o| o[0] = s1)
                .f1(|_, _, u, o| o[0] = u[0])
                .nu1(gauss(p.get("jump1_rate"), 0.0, p.get("jump1_std"))?)
                .b2(move |_, x, _, o| o[0] = sat * (h * x[0] / sat).tanh())
                .f2(|_, _, u, o| o[0] = u[0])
                .nu2(nu2)
                .lambda(move |_, x, _| lo + (hi - lo) * logistic(k * x[0]))
                .sensor(vec![th.cos()], vec![th.sin()])
                .build()?
        }
        _ => unreachable!("family table and match arms agree"),
    };
    Ok(Scenario { spec, prior, y0, linear })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hypotheses::validate_hypotheses;

    #[test]
    fn every_family_builds_with_defaults() {
        for name in family_names() {
            let s = build_family(name, &Params::new()).unwrap();
            assert_eq!(s.spec.dims.n, 1, "{name}");
        }
    }

    #[test]
    fn bounded_families_pass_hypotheses() {
        for name in ["saturated_affine", "trigonometric", "uninformative", "sensor_affine"] {
            let s = build_family(name, &Params::new()).unwrap();
            let r = validate_hypotheses(&s.spec, 128, 1).unwrap();
            assert!(r.all_pass(), "{name}: {:#?}", r.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn unknown_names_are_reported() {
        let err = build_family("nope", &Params::new()).unwrap_err();
        assert!(err.to_string().contains("family"));
        let mut p = Params::new();
        p.insert("zzz".into(), 1.0);
        assert!(build_family("linear_gaussian", &p).unwrap_err().to_string().contains("params.zzz"));
    }
}
