//! Poisson random measures, thinning by the state-dependent intensity and
//! compensator bookkeeping.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::model::{LevyMeasure, SystemSpec};
use crate::rng::SeedTree;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// `N_p`, jumps of the signal.
    Signal,
    /// `N_λ`, jumps of the observation (candidates before thinning).
    Observation,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Signal => "signal",
            Channel::Observation => "observation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub mark: Vec<f64>,
    pub channel: Channel,
    pub accepted: bool,
}

/// Time-sorted events of one channel on `[t0, t1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpStream {
    pub channel: Channel,
    pub t0: f64,
    pub t1: f64,
    /// Total mass of the dominating measure.
    pub rate: f64,
    pub seed: u64,
    pub events: Vec<JumpEvent>,
}

impl JumpStream {
    pub fn empty(channel: Channel, t0: f64, t1: f64, seed: u64) -> Self {
        Self { channel, t0, t1, rate: 0.0, seed, events: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &JumpEvent> {
        self.events.iter().filter(|e| e.accepted)
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted().count()
    }
}

/// Candidate events with intensity `ν(U)·dt` and i.i.d. marks from the law.
/// Signal events come out accepted; observation candidates await thinning.
pub fn sample_poisson_stream(nu: &LevyMeasure, channel: Channel, t0: f64, t1: f64, seed: u64) -> Result<JumpStream> {
    if !(t0 < t1) {
        return Err(Error::param(format!("poisson stream needs t0 < t1, got [{t0}, {t1}]")));
    }
    nu.validate()?;
    if nu.rate == 0.0 {
        return Ok(JumpStream::empty(channel, t0, t1, seed));
    }
    let tree = SeedTree::new(seed);
    let mut times = tree.child("times").rng();
    let mut marks = tree.child("marks").rng();
    let dim = nu.dim();
    let mut events = Vec::new();
    let mut t = t0;
    loop {
        let e: f64 = Exp1.sample(&mut times);
        t += e / nu.rate;
        if t >= t1 {
            break;
        }
        let mut mark = vec![0.0; dim];
        nu.sample_mark(&mut marks, &mut mark);
        events.push(JumpEvent { t, mark, channel, accepted: channel == Channel::Signal });
    }
    Ok(JumpStream { channel, t0, t1, rate: nu.rate, seed, events })
}

/// Uniform used to accept or reject candidate `index`; counter-based so
/// that any consumer reproduces the same decision.
pub fn thinning_uniform(seed: u64, index: usize) -> f64 {
    SeedTree::new(seed).index(index as u64).rng().random::<f64>()
}

/// Accept each candidate with probability `λ(t, X_{t−}, u)`.
pub fn thin_by_lambda(
    candidates: &JumpStream,
    spec: &SystemSpec,
    x_left: impl Fn(f64) -> Vec<f64>,
    seed: u64,
) -> Result<JumpStream> {
    let mut out = candidates.clone();
    out.seed = seed;
    for (i, ev) in out.events.iter_mut().enumerate() {
        let x = x_left(ev.t);
        let l = spec.check_lambda(ev.t, &x, &ev.mark)?;
        ev.accepted = thinning_uniform(seed, i) < l;
    }
    Ok(out)
}

/// `∫_{t0}^{t1} ∫ g(t,u) λ(t, X_{t−}, u) ν₂(du) dt`, trapezoid in time with
/// spacing at most `step`, marks on the system's frozen sample.
pub fn compensator_integral(
    spec: &SystemSpec,
    g: impl Fn(f64, &[f64]) -> f64,
    x_left: impl Fn(f64) -> Vec<f64>,
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<f64> {
    if !(t0 <= t1) || !(step > 0.0) {
        return Err(Error::param("compensator integral needs t0 <= t1 and step > 0"));
    }
    let marks = spec.marks2();
    if marks.is_empty() || t0 == t1 {
        return Ok(0.0);
    }
    let k = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / k as f64;
    let mut total = 0.0;
    for i in 0..=k {
        let t = t0 + i as f64 * h;
        let x = x_left(t);
        let mut inner = 0.0;
        for q in 0..marks.len() {
            let u = marks.mark(q);
            let gv = g(t, u);
            if !gv.is_finite() {
                return Err(Error::NumericOverflow {
                    term: "compensator integrand".into(),
                    detail: format!("g({t}, {u:?}) = {gv}"),
                });
            }
            inner += marks.weights[q] * gv * spec.lambda(t, &x, u);
        }
        let w = if i == 0 || i == k { 0.5 } else { 1.0 };
        total += w * inner;
    }
    Ok(total * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MarkLaw;

    fn const_lambda(l: f64, mass: f64) -> SystemSpec {
        SystemSpec::builder("c", 1, 1, 1)
            .lambda(move |_, _, _| l)
            .nu2(LevyMeasure::new(mass, MarkLaw::Point(vec![0.0])).unwrap())
            .build()
            .unwrap()
    }

    #[test]
    fn zero_rate_is_empty() {
        let s = sample_poisson_stream(&LevyMeasure::none(1), Channel::Signal, 0.0, 1.0, 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn negative_rate_is_rejected() {
        let nu = LevyMeasure { rate: -1.0, law: MarkLaw::Point(vec![0.0]) };
        assert!(sample_poisson_stream(&nu, Channel::Signal, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn same_seed_same_stream() {
        let nu = LevyMeasure::new(5.0, MarkLaw::Gaussian { mean: vec![0.0], std: vec![1.0] }).unwrap();
        let a = sample_poisson_stream(&nu, Channel::Observation, 0.0, 3.0, 42).unwrap();
        let b = sample_poisson_stream(&nu, Channel::Observation, 0.0, 3.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.events.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn empty_candidates_thin_to_empty() {
        let spec = const_lambda(0.5, 1.0);
        let c = JumpStream::empty(Channel::Observation, 0.0, 1.0, 0);
        assert!(thin_by_lambda(&c, &spec, |_| vec![0.0], 3).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_lambda_is_a_violation() {
        let spec = const_lambda(1.0, 1.0);
        let nu = spec.nu2.clone();
        let c = sample_poisson_stream(&nu, Channel::Observation, 0.0, 10.0, 1).unwrap();
        assert!(matches!(thin_by_lambda(&c, &spec, |_| vec![0.0], 3), Err(Error::ModelViolation(_))));
    }

    #[test]
    fn compensator_closed_forms() {
        let spec = const_lambda(0.5, 1.0);
        let one = compensator_integral(&spec, |_, _| 1.0, |_| vec![0.0], 0.0, 1.0, 0.01).unwrap();
        assert!((one - 0.5).abs() < 1e-14);
        let zero = compensator_integral(&spec, |_, _| 0.0, |_| vec![0.0], 0.0, 1.0, 0.01).unwrap();
        assert_eq!(zero, 0.0);
        let lin = compensator_integral(&spec, |t, _| t, |_| vec![0.0], 0.0, 1.0, 0.01).unwrap();
        assert!((lin - 0.25).abs() < 1e-12);
    }

    #[test]
    fn non_finite_integrand_is_named() {
        let spec = const_lambda(0.5, 1.0);
        let err = compensator_integral(&spec, |_, _| f64::NAN, |_| vec![0.0], 0.0, 1.0, 0.1).unwrap_err();
        assert!(err.to_string().contains("compensator integrand"));
    }
}
