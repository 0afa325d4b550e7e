use serde::{Deserialize, Serialize};

use super::{FilterTrajectory, GainData, JumpGain};
use crate::girsanov::{reconstruct_reference_drivers, ReferenceDrivers};
use crate::model::SystemSpec;
use crate::simulate::ObservationRecord;
use crate::stats;
use crate::{Error, Result};

/// Innovation increments `ΔW̄ = ΔW̃ − π(h)Δt` and the jump-channel
/// counterpart, one entry per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Innovations {
    pub m: usize,
    pub times: Vec<f64>,
    pub dt: Vec<f64>,
    pub dw_bar: Vec<f64>,
    /// 1 when the step ends at an observed jump.
    pub counts: Vec<f64>,
    /// `π_{t}(∫ λ ν₂) Δt`
    pub compensator: Vec<f64>,
}

impl Innovations {
    pub fn steps(&self) -> usize {
        self.dt.len()
    }

    /// `ΔW̄_l / √Δt` over all steps.
    pub fn standardized(&self, l: usize) -> Vec<f64> {
        (0..self.steps()).map(|j| self.dw_bar[j * self.m + l] / self.dt[j].sqrt()).collect()
    }

    /// Counts minus compensator per step.
    pub fn compensated_counts(&self) -> Vec<f64> {
        self.counts.iter().zip(&self.compensator).map(|(c, a)| c - a).collect()
    }
}

pub fn innovation_process(traj: &FilterTrajectory, drivers: &ReferenceDrivers) -> Result<Innovations> {
    let steps = drivers.steps();
    if traj.len() != steps + 1 {
        return Err(Error::Dimension(format!("trajectory has {} nodes, drivers {steps} steps", traj.len())));
    }
    let m = drivers.m;
    let mut out = Innovations {
        m,
        times: traj.times[..steps].to_vec(),
        dt: drivers.dt.clone(),
        dw_bar: Vec::with_capacity(steps * m),
        counts: Vec::with_capacity(steps),
        compensator: Vec::with_capacity(steps),
    };
    for j in 0..steps {
        let node = &traj.nodes[j];
        let dt = drivers.dt[j];
        for (l, dw) in drivers.dw_at(j).iter().enumerate() {
            out.dw_bar.push(dw - node.h[l] * dt);
        }
        out.counts.push(f64::from(u8::from(drivers.jump[j])));
        out.compensator.push(node.lambda_bar * dt);
    }
    Ok(out)
}

/// A residual path `t ↦ R_t` for one test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPath {
    pub test: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ResidualPath {
    pub fn rms(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        stats::mean(&sq).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }
}

fn prepare<'a>(traj: &'a FilterTrajectory, obs: &ObservationRecord, spec: &SystemSpec, test: &str) -> Result<(usize, &'a [GainData], ReferenceDrivers)> {
    let k = traj
        .test_index(test)
        .ok_or_else(|| Error::param(format!("test function {test} was not tracked by the filter run")))?;
    let gains = traj
        .gains
        .as_deref()
        .ok_or_else(|| Error::param("residuals need a filter run with residual tracking enabled"))?;
    if obs.nodes() != traj.len() {
        return Err(Error::Dimension(format!("record has {} nodes, trajectory {}", obs.nodes(), traj.len())));
    }
    let drivers = reconstruct_reference_drivers(obs, spec)?;
    Ok((k, gains, drivers))
}

fn jump_lookup(jumps: &[JumpGain], nodes: usize) -> Vec<Option<&JumpGain>> {
    let mut at = vec![None; nodes];
    for g in jumps {
        at[g.node] = Some(g);
    }
    at
}

/// Discrete residual of the normalized filtering equation for test function
/// `test`, with left-endpoint stochastic integrals:
///
/// `R_t = π_t(F) − π_0(F) − Σπ(ℒF)Δt − Σ[π(∇F·C) + π(Fh) − π(F)π(h)]·ΔW̄ − (Σ_τ D(τ,u) − ΣΔt∫(π(Fλ) − π(F)π(λ))ν₂)`
///
/// where `D = (π_{τ−}(Fλ) − π_{τ−}(F)π_{τ−}(λ)) / max(π_{τ−}(λ), ι)`.
pub fn ks_residual(traj: &FilterTrajectory, obs: &ObservationRecord, spec: &SystemSpec, test: &str) -> Result<ResidualPath> {
    let (k, gains, drivers) = prepare(traj, obs, spec, test)?;
    let m = spec.dims.m;
    let marks = &traj.marks2;
    let q = marks.len();
    let at = jump_lookup(&traj.jumps, traj.len());
    let f0 = traj.nodes[0].tests[k];
    let mut values = Vec::with_capacity(traj.len());
    values.push(0.0);
    let (mut drift, mut brown, mut jump) = (0.0, 0.0, 0.0);
    for j in 0..drivers.steps() {
        let (s, g) = (&traj.nodes[j], &gains[j]);
        let dt = drivers.dt[j];
        let pf = s.tests[k];
        drift += g.gen[k] * dt;
        for (l, dw) in drivers.dw_at(j).iter().enumerate() {
            let gain = g.grad_c[k * m + l] + g.fh[k * m + l] - pf * s.h[l];
            brown += gain * (dw - s.h[l] * dt);
        }
        let comp: f64 = (0..q).map(|i| marks.weights[i] * (g.flam[k * q + i] - pf * g.lam[i])).sum();
        jump -= comp * dt;
        if let Some(jg) = at[j + 1] {
            if jg.lam < spec.iota {
                return Err(Error::violation(format!(
                    "posterior jump intensity {} below the floor {} at t={}",
                    jg.lam, spec.iota, jg.t
                )));
            }
            jump += (jg.flam[k] - jg.tests[k] * jg.lam) / jg.lam.max(spec.iota);
        }
        values.push(traj.nodes[j + 1].tests[k] - f0 - drift - brown - jump);
    }
    Ok(ResidualPath { test: test.to_string(), times: traj.times.clone(), values })
}

/// Discrete residual of the linear (unnormalized) filtering equation:
///
/// `R_t = P̃_t(F) − P̃_0(F) − ΣP̃(ℒF)Δt − ΣP̃(Fh + ∇F·C)·ΔW̃ − (Σ_τ P̃_{τ−}(F(λ−1)) − ΣΔt∫P̃(F(λ−1))ν₂)`
pub fn zakai_residual(traj: &FilterTrajectory, obs: &ObservationRecord, spec: &SystemSpec, test: &str) -> Result<ResidualPath> {
    let (k, gains, drivers) = prepare(traj, obs, spec, test)?;
    let m = spec.dims.m;
    let marks = &traj.marks2;
    let q = marks.len();
    let at = jump_lookup(&traj.jumps, traj.len());
    let z0 = traj.nodes[0].zakai_tests[k];
    let mut values = Vec::with_capacity(traj.len());
    values.push(0.0);
    let (mut drift, mut brown, mut jump) = (0.0, 0.0, 0.0);
    for j in 0..drivers.steps() {
        let (s, g) = (&traj.nodes[j], &gains[j]);
        let dt = drivers.dt[j];
        let pf = s.tests[k];
        drift += s.mass * g.gen[k] * dt;
        for (l, dw) in drivers.dw_at(j).iter().enumerate() {
            brown += s.mass * (g.fh[k * m + l] + g.grad_c[k * m + l]) * dw;
        }
        let comp: f64 = (0..q).map(|i| marks.weights[i] * (g.flam[k * q + i] - pf)).sum();
        jump -= s.mass * comp * dt;
        if let Some(jg) = at[j + 1] {
            jump += jg.mass * (jg.flam[k] - jg.tests[k]);
        }
        values.push(traj.nodes[j + 1].zakai_tests[k] - z0 - drift - brown - jump);
    }
    Ok(ResidualPath { test: test.to_string(), times: traj.times.clone(), values })
}
