//! The exponential martingale `Λ_t` along simulated paths and the
//! reference-measure drivers recovered from an observation record.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::model::{EvalScratch, SystemSpec, Variant};
use crate::simulate::{node, Measure, ObservationRecord, PathRecord};
use crate::{Error, Result};

/// Per-node `log Λ_t⁻¹` and its three parts. All vectors share the node
/// indexing of the path they were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodPath {
    pub times: Vec<f64>,
    pub total: Vec<f64>,
    pub brownian: Vec<f64>,
    pub jump: Vec<f64>,
    pub compensator: Vec<f64>,
}

impl LikelihoodPath {
    fn with_capacity(k: usize) -> Self {
        Self {
            times: Vec::with_capacity(k),
            total: Vec::with_capacity(k),
            brownian: Vec::with_capacity(k),
            jump: Vec::with_capacity(k),
            compensator: Vec::with_capacity(k),
        }
    }

    fn push(&mut self, t: f64, b: f64, j: f64, c: f64) {
        self.times.push(t);
        self.brownian.push(b);
        self.jump.push(j);
        self.compensator.push(c);
        self.total.push(b + j + c);
    }

    pub fn final_value(&self) -> f64 {
        *self.total.last().expect("likelihood path is never empty")
    }

    /// The same path for `log Λ_t`.
    pub fn negated(&self) -> Self {
        let neg = |v: &[f64]| v.iter().map(|a| -a).collect();
        Self {
            times: self.times.clone(),
            total: neg(&self.total),
            brownian: neg(&self.brownian),
            jump: neg(&self.jump),
            compensator: neg(&self.compensator),
        }
    }
}

/// `∫ λ log λ ν₂ − ∫ (1 − λ + λ log λ) ν₂` at `(t, x)`, each integral taken
/// separately on the frozen mark sample.
fn compensator_rate(spec: &SystemSpec, t: f64, x: &[f64]) -> Result<f64> {
    let marks = spec.marks2();
    let mut a = 0.0;
    let mut b = 0.0;
    for q in 0..marks.len() {
        let u = marks.mark(q);
        let l = spec.check_lambda(t, x, u)?;
        let w = marks.weights[q];
        a += w * l * l.ln();
        b += w * (1.0 - l + l * l.ln());
    }
    Ok(a - b)
}

/// `log Λ_t⁻¹` along a simulated path, accumulated with left-endpoint
/// coefficients on the path's own nodes.
///
/// On a physical path the Brownian part is `−Σ h·ΔW − ½Σ|h|²Δt`; on a
/// reference path it is `−Σ h·ΔW̃ + ½Σ|h|²Δt`. For the sensor variant the
/// observation driver is `σ̌₂ΔW + σ̌₃ΔB`.
pub fn log_lambda_inverse(path: &PathRecord, spec: &SystemSpec) -> Result<LikelihoodPath> {
    let (n, m) = (spec.dims.n, spec.dims.m);
    if path.n != n || path.m != m {
        return Err(Error::Dimension(format!(
            "path has n={} m={}, system has n={n} m={m}",
            path.n, path.m
        )));
    }
    let mut out = LikelihoodPath::with_capacity(path.nodes());
    let (mut bro, mut jmp, mut cmp) = (0.0, 0.0, 0.0);
    out.push(path.times[0], 0.0, 0.0, 0.0);
    let mut h = vec![0.0; m];
    let mut drv = vec![0.0; m];
    let mut scratch = EvalScratch::new(spec);
    for j in 0..path.steps() {
        let (t, x, y) = (path.times[j], path.x_at(j), path.y_at(j));
        let dt = path.times[j + 1] - t;
        let inv = spec.obs_diffusion_inverse(t, y)?;
        spec.effective_h_into(t, x, y, &inv, &mut h, &mut scratch);
        let dw = path.dw_at(j);
        match (&spec.variant, path.measure) {
            (Variant::Sensor(mix), Measure::Physical) => {
                linalg::matvec(&mix.sigma2, m, m, dw, &mut drv);
                linalg::matvec_add(&mix.sigma3, m, spec.dims.d, path.db_at(j), &mut drv);
            }
            _ => drv.copy_from_slice(dw),
        }
        let hh = linalg::norm_sq(&h);
        bro += match path.measure {
            Measure::Physical => -linalg::dot(&h, &drv) - 0.5 * hh * dt,
            Measure::Reference => -linalg::dot(&h, &drv) + 0.5 * hh * dt,
        };
        if !spec.marks2().is_empty() {
            cmp += dt * compensator_rate(spec, t, x)?;
        }
        let k = j + 1;
        if path.flags[k] & node::OBSERVED_JUMP != 0 {
            let idx = path.event[k].expect("observed jump node carries its event index") as usize;
            let mark = &path.observation_jumps.events[idx].mark;
            let l = spec.check_lambda(path.times[k], path.x_left_at(k), mark)?;
            jmp -= l.ln();
        }
        if !(bro + jmp + cmp).is_finite() {
            return Err(Error::NumericOverflow {
                term: "log-likelihood".into(),
                detail: format!("non-finite value at t={}", path.times[k]),
            });
        }
        out.push(path.times[k], bro, jmp, cmp);
    }
    Ok(out)
}

/// `log Λ_t`, the negation of [`log_lambda_inverse`].
pub fn log_lambda(path: &PathRecord, spec: &SystemSpec) -> Result<LikelihoodPath> {
    Ok(log_lambda_inverse(path, spec)?.negated())
}

/// Reference-measure increments recovered from an observation record.
/// Step `j` runs from node `j` to node `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDrivers {
    pub m: usize,
    pub dt: Vec<f64>,
    /// `ΔW̃` per step, `m` entries each.
    pub dw_tilde: Vec<f64>,
    /// `Ñ` increment per step: jump indicator at the step end minus `ν₂(U)Δt`.
    pub n_tilde: Vec<f64>,
    /// Whether the step ends at an observed jump.
    pub jump: Vec<bool>,
}

impl ReferenceDrivers {
    pub fn steps(&self) -> usize {
        self.dt.len()
    }

    pub fn dw_at(&self, j: usize) -> &[f64] {
        &self.dw_tilde[j * self.m..(j + 1) * self.m]
    }
}

/// `ΔW̃ = σ₂⁻¹(t_j, Y_j)(ΔY − Σ f₂(τ, Y_{τ−}, u) + Δt ∫ f₂ ν₂)` per step,
/// with the jump at the step's right end removed via the recorded mark.
pub fn reconstruct_reference_drivers(obs: &ObservationRecord, spec: &SystemSpec) -> Result<ReferenceDrivers> {
    let m = spec.dims.m;
    if obs.m != m {
        return Err(Error::Dimension(format!("observation has m={}, system has m={m}", obs.m)));
    }
    let steps = obs.steps();
    let mass = spec.marks2().total_mass();
    let mut out = ReferenceDrivers {
        m,
        dt: Vec::with_capacity(steps),
        dw_tilde: Vec::with_capacity(steps * m),
        n_tilde: Vec::with_capacity(steps),
        jump: Vec::with_capacity(steps),
    };
    let mut jbar = vec![0.0; m];
    let mut buf = vec![0.0; m];
    let mut inc = vec![0.0; m];
    let mut dw = vec![0.0; m];
    for j in 0..steps {
        let (t, y) = (obs.times[j], obs.y_at(j));
        let dt = obs.times[j + 1] - t;
        let inv = spec.obs_diffusion_inverse(t, y)?;
        spec.jump2_mean(t, y, &mut jbar, &mut buf);
        let y_next = obs.y_at(j + 1);
        let jump = obs.jump_at(j + 1);
        if let Some(ev) = jump {
            spec.f2(ev.t, obs.y_left_at(j + 1), &ev.mark, &mut buf);
        } else {
            buf.fill(0.0);
        }
        for k in 0..m {
            inc[k] = y_next[k] - y[k] - buf[k] + dt * jbar[k];
        }
        linalg::matvec(&inv, m, m, &inc, &mut dw);
        out.dt.push(dt);
        out.dw_tilde.extend_from_slice(&dw);
        out.n_tilde.push(f64::from(u8::from(jump.is_some())) - mass * dt);
        out.jump.push(jump.is_some());
    }
    Ok(out)
}

/// Integrate the observation equation under the reference measure from
/// `Y_0` with the given drivers and the record's jumps; the inverse of
/// [`reconstruct_reference_drivers`].
pub fn resynthesize_observation(obs: &ObservationRecord, drivers: &ReferenceDrivers, spec: &SystemSpec) -> Result<Vec<f64>> {
    let m = spec.dims.m;
    let mut y = obs.y_at(0).to_vec();
    let mut out = Vec::with_capacity(obs.nodes() * m);
    out.extend_from_slice(&y);
    let mut diff = vec![0.0; m * m];
    let mut jbar = vec![0.0; m];
    let mut buf = vec![0.0; m];
    for j in 0..drivers.steps() {
        let t = obs.times[j];
        spec.obs_diffusion(t, &y, &mut diff);
        spec.jump2_mean(t, &y, &mut jbar, &mut buf);
        let dt = drivers.dt[j];
        let prev = y.clone();
        for k in 0..m {
            y[k] -= dt * jbar[k];
        }
        linalg::matvec_add(&diff, m, m, drivers.dw_at(j), &mut y);
        if let Some(ev) = obs.jump_at(j + 1) {
            spec.f2(ev.t, &y, &ev.mark, &mut buf);
            y.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { what: format!("re-synthesised observation from Y={prev:?}"), index: j + 1 });
        }
        out.extend_from_slice(&y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LevyMeasure, MarkLaw, Prior};
    use crate::simulate::{project_observation, simulate_path, TimeGrid};

    fn unit_nu() -> LevyMeasure {
        LevyMeasure::new(1.0, MarkLaw::Point(vec![0.0])).unwrap()
    }

    /// A one-step path with chosen increments and no jumps.
    fn manual_path(spec: &SystemSpec, dw: f64, measure: Measure) -> PathRecord {
        let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let mut p = simulate_path(spec, grid, &Prior::Point(vec![0.0]), &[0.0], 1).unwrap();
        p.measure = measure;
        let keep = [0, p.nodes() - 1];
        p.times = keep.iter().map(|&j| p.times[j]).collect();
        p.flags = vec![node::GRID; 2];
        p.event = vec![None; 2];
        p.x = vec![0.0; 2];
        p.x_left = vec![0.0; 2];
        p.y = vec![0.0; 2];
        p.y_left = vec![0.0; 2];
        p.dw = vec![dw];
        p.db = vec![0.0; p.nb];
        p
    }

    #[test]
    fn closed_form_examples() {
        let zero_h = SystemSpec::builder("zero", 1, 1, 1).nu2(unit_nu()).lambda(|_, _, _| 0.5).build().unwrap();
        let l = log_lambda_inverse(&manual_path(&zero_h, 0.0, Measure::Physical), &zero_h).unwrap();
        assert!((l.final_value() + 0.5).abs() < 1e-12);

        let unit_h = SystemSpec::builder("unit", 1, 1, 1)
            .nu2(unit_nu())
            .lambda(|_, _, _| 0.5)
            .b2(|_, _, _, o| o[0] = 1.0)
            .build()
            .unwrap();
        let l = log_lambda_inverse(&manual_path(&unit_h, 0.3, Measure::Physical), &unit_h).unwrap();
        assert!((l.final_value() + 1.3).abs() < 1e-12);
        for k in 0..l.times.len() {
            assert!((l.brownian[k] + l.jump[k] + l.compensator[k] - l.total[k]).abs() < 1e-12);
        }

        let near_one = SystemSpec::builder("near", 1, 1, 1).nu2(unit_nu()).lambda(|_, _, _| 1.0 - 1e-9).build().unwrap();
        let l = log_lambda_inverse(&manual_path(&near_one, 0.0, Measure::Physical), &near_one).unwrap();
        assert!(l.final_value().abs() < 1e-6);
    }

    #[test]
    fn lambda_outside_unit_interval_is_rejected() {
        let bad = SystemSpec::builder("bad", 1, 1, 1).nu2(unit_nu()).lambda(|_, _, _| 1.0).build().unwrap();
        let p = manual_path(&bad, 0.0, Measure::Physical);
        assert!(matches!(log_lambda_inverse(&p, &bad), Err(Error::ModelViolation(_))));
    }

    #[test]
    fn driver_reconstruction_examples() {
        let grid = TimeGrid::new(0.0, 0.01, 1).unwrap();
        let rec = |y1: f64| ObservationRecord::from_parts(grid, 1, vec![0.0, 0.01], vec![0.0, y1], vec![0.0, y1], vec![]).unwrap();
        let s1 = SystemSpec::builder("s1", 1, 1, 1).build().unwrap();
        let d = reconstruct_reference_drivers(&rec(0.2), &s1).unwrap();
        assert!((d.dw_tilde[0] - 0.2).abs() < 1e-15);

        let s2 = SystemSpec::builder("s2", 1, 1, 1).sigma2(|_, _, o| o[0] = 2.0).build().unwrap();
        let d = reconstruct_reference_drivers(&rec(0.2), &s2).unwrap();
        assert!((d.dw_tilde[0] - 0.1).abs() < 1e-15);

        let s3 = SystemSpec::builder("s3", 1, 1, 1)
            .nu2(LevyMeasure::new(1.0, MarkLaw::Point(vec![0.5])).unwrap())
            .f2(|_, _, u, o| o[0] = u[0])
            .build()
            .unwrap();
        let obs = ObservationRecord::from_parts(grid, 1, vec![0.0, 0.01], vec![0.0, 0.7], vec![0.0, 0.2], vec![(1, vec![0.5])]).unwrap();
        let d = reconstruct_reference_drivers(&obs, &s3).unwrap();
        assert!((d.dw_tilde[0] - 0.205).abs() < 1e-12);
        assert!((d.n_tilde[0] - (1.0 - 0.01)).abs() < 1e-15);
    }

    #[test]
    fn singular_observation_diffusion_is_reported() {
        let grid = TimeGrid::new(0.0, 0.01, 1).unwrap();
        let obs = ObservationRecord::from_parts(grid, 1, vec![0.0, 0.01], vec![0.0, 0.1], vec![0.0, 0.1], vec![]).unwrap();
        let s = SystemSpec::builder("sing", 1, 1, 1).sigma2(|_, _, o| o[0] = 0.0).build().unwrap();
        assert!(matches!(reconstruct_reference_drivers(&obs, &s), Err(Error::Singular { .. })));
    }

    #[test]
    fn round_trip_on_simulated_record() {
        let spec = SystemSpec::builder("rt", 1, 1, 1)
            .b1(|_, x, o| o[0] = -x[0])
            .sigma1(|_, _, o| o[0] = 0.5)
            .b2(|_, x, _, o| o[0] = x[0].tanh())
            .sigma2(|_, y, o| o[0] = 1.0 + 0.3 * y[0].sin().powi(2))
            .nu2(LevyMeasure::new(3.0, MarkLaw::Gaussian { mean: vec![0.0], std: vec![1.0] }).unwrap())
            .f2(|_, y, u, o| o[0] = 0.2 * u[0] - 0.05 * y[0])
            .lambda(|_, x, _| 0.3 + 0.4 / (1.0 + (-x[0]).exp()))
            .build()
            .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let path = simulate_path(&spec, grid, &Prior::Point(vec![0.3]), &[0.1], 9).unwrap();
        let obs = project_observation(&path);
        let d = reconstruct_reference_drivers(&obs, &spec).unwrap();
        let y = resynthesize_observation(&obs, &d, &spec).unwrap();
        for (a, b) in y.iter().zip(&obs.y) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
