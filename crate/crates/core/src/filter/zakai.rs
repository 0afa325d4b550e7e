use std::sync::Mutex;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::cloud::systematic_indices;
use super::{CloudKind, FilterOptions, FilterTrajectory, GainData, JumpGain, NodeSummary, ParticleCloud, CHUNK};
use crate::exec::{map_range, zip3_chunks};
use crate::girsanov::{reconstruct_reference_drivers, ReferenceDrivers};
use crate::linalg;
use crate::model::{EvalScratch, GeneratorWorkspace, Prior, SystemSpec};
use crate::rng::{SeedTree, StreamRng};
use crate::simulate::ObservationRecord;
use crate::{Error, Result};

/// Keeps the error of the lowest-indexed particle so that failures are
/// reported identically by every backend.
struct FirstError(Mutex<Option<(usize, Error)>>);

impl FirstError {
    fn new() -> Self {
        Self(Mutex::new(None))
    }

    fn record(&self, index: usize, e: Error) {
        let mut slot = self.0.lock().expect("error slot poisoned");
        if slot.as_ref().is_none_or(|(i, _)| index < *i) {
            *slot = Some((index, e));
        }
    }

    fn into_result(self) -> Result<()> {
        match self.0.into_inner().expect("error slot poisoned") {
            Some((_, e)) => Err(e),
            None => Ok(()),
        }
    }
}

/// Offsets into the per-node accumulator.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    m: usize,
    k: usize,
    q: usize,
    track: bool,
}

impl Layout {
    const S: usize = 0;
    const S2: usize = 1;
    const MEAN: usize = 2;
    fn second(&self) -> usize {
        Self::MEAN + self.n
    }
    fn tests(&self) -> usize {
        self.second() + self.n
    }
    fn h(&self) -> usize {
        self.tests() + self.k
    }
    fn lamb(&self) -> usize {
        self.h() + self.m
    }
    fn gen(&self) -> usize {
        self.lamb() + 1
    }
    fn fh(&self) -> usize {
        self.gen() + self.k
    }
    fn grad_c(&self) -> usize {
        self.fh() + self.k * self.m
    }
    fn lam(&self) -> usize {
        self.grad_c() + self.k * self.m
    }
    fn flam(&self) -> usize {
        self.lam() + self.q
    }
    fn width(&self) -> usize {
        if self.track {
            self.flam() + self.k * self.q
        } else {
            self.gen()
        }
    }
}

struct State {
    n: usize,
    positions: Vec<f64>,
    logw: Vec<f64>,
    rngs: Vec<StreamRng>,
    offset: f64,
}

impl State {
    fn len(&self) -> usize {
        self.logw.len()
    }

    fn max_logw(&self, t: f64) -> Result<f64> {
        let max = self.logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max.is_finite() {
            Ok(max)
        } else {
            Err(Error::Degeneracy {
                t,
                detail: format!("all particle weights vanished (largest log-weight {max})"),
            })
        }
    }

    /// Weighted sums `Σ e^{lwᵢ − max} gᵢ` of a `width`-vector per particle,
    /// deterministic in the particle order.
    fn reduce<W, M, G>(&self, exec: crate::Exec, width: usize, max: f64, make: M, g: G) -> Result<Vec<f64>>
    where
        M: Fn() -> W + Sync + Send,
        G: Fn(&mut W, usize, &[f64], f64, &mut [f64]) -> Result<()> + Sync + Send,
    {
        let n = self.n;
        let chunks = self.len().div_ceil(CHUNK);
        let parts = map_range(exec, chunks, |c| -> Result<Vec<f64>> {
            let mut ws = make();
            let mut acc = vec![0.0; width];
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(self.len());
            for i in lo..hi {
                let e = (self.logw[i] - max).exp();
                g(&mut ws, i, &self.positions[i * n..(i + 1) * n], e, &mut acc)?;
            }
            Ok(acc)
        });
        let mut total = vec![0.0; width];
        for p in parts {
            for (t, v) in total.iter_mut().zip(p?) {
                *t += v;
            }
        }
        Ok(total)
    }
}

struct NodeWork {
    s: EvalScratch,
    h: Vec<f64>,
    grad: Vec<f64>,
    cross: Vec<f64>,
    lam: Vec<f64>,
    fv: Vec<f64>,
    gen: GeneratorWorkspace,
}

impl NodeWork {
    fn new(spec: &SystemSpec, k: usize) -> Self {
        let (n, m) = (spec.dims.n, spec.dims.m);
        Self {
            s: EvalScratch::new(spec),
            h: vec![0.0; m],
            grad: vec![0.0; n],
            cross: vec![0.0; n * m],
            lam: vec![0.0; spec.marks2().len()],
            fv: vec![0.0; k],
            gen: GeneratorWorkspace::new(spec),
        }
    }
}

fn non_finite(what: &str, i: usize) -> Error {
    Error::NonFinite { what: what.into(), index: i }
}

/// Run the weighted-particle Zakai filter on an observation record.
///
/// Particles move under the reference dynamics with the shared
/// reconstructed `ΔW̃`; log-weights collect the increments of `log Λ`.
/// Each node's summary is taken from the cloud before resampling.
pub fn zakai_filter(obs: &ObservationRecord, spec: &SystemSpec, prior: &Prior, opts: &FilterOptions) -> Result<FilterTrajectory> {
    let drivers = reconstruct_reference_drivers(obs, spec)?;
    zakai_filter_with_drivers(obs, &drivers, spec, prior, opts)
}

pub(crate) fn zakai_filter_with_drivers(
    obs: &ObservationRecord,
    drivers: &ReferenceDrivers,
    spec: &SystemSpec,
    prior: &Prior,
    opts: &FilterOptions,
) -> Result<FilterTrajectory> {
    let (n, m) = (spec.dims.n, spec.dims.m);
    let np = opts.particles;
    if np < 2 {
        return Err(Error::param(format!("particles: need at least 2, got {np}")));
    }
    if prior.dim() != n {
        return Err(Error::Dimension(format!("prior has dimension {}, signal has {n}", prior.dim())));
    }
    if !(opts.resample.ess_threshold >= 0.0 && opts.resample.ess_threshold <= 1.0) {
        return Err(Error::param(format!("resample_ess: threshold {} outside [0, 1]", opts.resample.ess_threshold)));
    }
    let marks2 = spec.marks2().clone();
    let layout = Layout { n, m, k: opts.tests.len(), q: marks2.len(), track: opts.track_residuals };
    let tree = SeedTree::new(opts.seed);
    let slots = tree.child("particles");

    let mut st = State {
        n,
        positions: vec![0.0; np * n],
        logw: vec![0.0; np],
        rngs: (0..np).map(|i| slots.index(i as u64).rng()).collect(),
        offset: 0.0,
    };
    zip3_chunks(opts.exec, &mut st.positions, n, &mut st.logw, 1, &mut st.rngs, CHUNK, |_, pos, _, rngs| {
        for (x, rng) in pos.chunks_mut(n).zip(rngs.iter_mut()) {
            prior.sample(rng, x);
        }
    });

    let mut traj = FilterTrajectory {
        times: obs.times.clone(),
        nodes: Vec::with_capacity(obs.nodes()),
        gains: opts.track_residuals.then(|| Vec::with_capacity(obs.nodes())),
        jumps: Vec::new(),
        test_names: opts.tests.iter().map(|t| t.name()).collect(),
        clouds: Vec::new(),
        normalized: false,
        marks2,
        particles: np,
        seed: opts.seed,
    };
    finish_node(&mut st, &mut traj, obs, spec, opts, layout, &tree, 0)?;

    for j in 0..obs.steps() {
        let t = obs.times[j];
        let t_next = obs.times[j + 1];
        let dt = drivers.dt[j];
        let y = obs.y_at(j);
        let inv = spec.obs_diffusion_inverse(t, y)?;
        propagate(&mut st, spec, opts, j, t, t_next, dt, y, &inv, drivers.dw_at(j))?;
        if let Some(ev) = obs.jump_at(j + 1) {
            let gain = jump_gain(&st, spec, opts, layout, j + 1, ev.t, &ev.mark)?;
            traj.jumps.push(gain);
            let errs = FirstError::new();
            let (tau, mark) = (ev.t, ev.mark.as_slice());
            zip3_chunks(opts.exec, &mut st.positions, n, &mut st.logw, 1, &mut st.rngs, CHUNK, |c, pos, lw, _| {
                for (i, (x, w)) in pos.chunks(n).zip(lw.iter_mut()).enumerate() {
                    match spec.check_lambda(tau, x, mark) {
                        Ok(l) => *w += l.ln(),
                        Err(e) => {
                            errs.record(c * CHUNK + i, e);
                            return;
                        }
                    }
                }
            });
            errs.into_result()?;
        }
        finish_node(&mut st, &mut traj, obs, spec, opts, layout, &tree, j + 1)?;
    }
    Ok(traj)
}

/// Summaries and gains at `node`, optional cloud capture, then resampling.
#[allow(clippy::too_many_arguments)]
fn finish_node(
    st: &mut State,
    traj: &mut FilterTrajectory,
    obs: &ObservationRecord,
    spec: &SystemSpec,
    opts: &FilterOptions,
    lay: Layout,
    tree: &SeedTree,
    node: usize,
) -> Result<()> {
    let (n, m) = (lay.n, lay.m);
    let t = obs.times[node];
    let y = obs.y_at(node);
    let inv = spec.obs_diffusion_inverse(t, y)?;
    let max = st.max_logw(t)?;
    let marks = &traj.marks2;
    let tests = &opts.tests;
    let acc = st.reduce(
        opts.exec,
        lay.width(),
        max,
        || NodeWork::new(spec, lay.k),
        |w, i, x, e, acc| {
            acc[Layout::S] += e;
            acc[Layout::S2] += e * e;
            for a in 0..n {
                acc[Layout::MEAN + a] += e * x[a];
                acc[lay.second() + a] += e * x[a] * x[a];
            }
            for (k, f) in tests.iter().enumerate() {
                let v = f.value(x);
                if !v.is_finite() {
                    return Err(non_finite(&format!("test function {} value", f.name()), i));
                }
                w.fv[k] = v;
                acc[lay.tests() + k] += e * v;
            }
            spec.effective_h_into(t, x, y, &inv, &mut w.h, &mut w.s);
            if !w.h.iter().all(|v| v.is_finite()) {
                return Err(non_finite("observation drift h", i));
            }
            for l in 0..m {
                acc[lay.h() + l] += e * w.h[l];
            }
            let mut lamb = 0.0;
            for q in 0..marks.len() {
                let l = spec.lambda(t, x, marks.mark(q));
                w.lam[q] = l;
                lamb += marks.weights[q] * l;
            }
            acc[lay.lamb()] += e * lamb;
            if lay.track {
                spec.cross_loading(t, x, &mut w.cross, &mut w.s.nm);
                for (k, f) in tests.iter().enumerate() {
                    let g = w.gen.eval(spec, f.as_ref(), t, x)?;
                    acc[lay.gen() + k] += e * g;
                    f.gradient(x, &mut w.grad);
                    for l in 0..m {
                        let gc: f64 = (0..n).map(|a| w.grad[a] * w.cross[a * m + l]).sum();
                        acc[lay.fh() + k * m + l] += e * w.fv[k] * w.h[l];
                        acc[lay.grad_c() + k * m + l] += e * gc;
                    }
                    for q in 0..lay.q {
                        acc[lay.flam() + k * lay.q + q] += e * w.fv[k] * w.lam[q];
                    }
                }
                for q in 0..lay.q {
                    acc[lay.lam() + q] += e * w.lam[q];
                }
            }
            Ok(())
        },
    )?;
    let s = acc[Layout::S];
    let npf = st.len() as f64;
    let log_scale = st.offset + max - npf.ln();
    let scale = log_scale.exp();
    let log_mass = log_scale + s.ln();
    let mass = scale * s;
    if !(log_mass.is_finite() && mass.is_finite() && mass > 0.0) {
        return Err(Error::Degeneracy { t, detail: format!("total mass left the floating-point range (log mass {log_mass})") });
    }
    let norm = |range: std::ops::Range<usize>| acc[range].iter().map(|v| v / s).collect::<Vec<_>>();
    let ess = s * s / acc[Layout::S2];
    let mut summary = NodeSummary {
        t,
        log_mass,
        mass,
        ess,
        mean: norm(Layout::MEAN..Layout::MEAN + n),
        second: norm(lay.second()..lay.second() + n),
        tests: norm(lay.tests()..lay.tests() + lay.k),
        zakai_tests: acc[lay.tests()..lay.tests() + lay.k].iter().map(|v| scale * v).collect(),
        h: norm(lay.h()..lay.h() + m),
        lambda_bar: acc[lay.lamb()] / s,
        resampled: false,
    };
    if let Some(g) = traj.gains.as_mut() {
        g.push(GainData {
            gen: norm(lay.gen()..lay.gen() + lay.k),
            fh: norm(lay.fh()..lay.fh() + lay.k * m),
            grad_c: norm(lay.grad_c()..lay.grad_c() + lay.k * m),
            lam: norm(lay.lam()..lay.lam() + lay.q),
            flam: norm(lay.flam()..lay.flam() + lay.k * lay.q),
        });
    }
    if let Some(stride) = opts.keep_clouds {
        if node.is_multiple_of(stride) || node + 1 == obs.nodes() {
            traj.clouds.push((
                node,
                ParticleCloud {
                    t,
                    n,
                    positions: st.positions.clone(),
                    log_weights: st.logw.clone(),
                    log_offset: st.offset,
                    kind: CloudKind::Unnormalized,
                },
            ));
        }
    }
    if ess < opts.resample.ess_threshold * npf {
        let w: Vec<f64> = st.logw.iter().map(|l| (l - max).exp() / s).collect();
        let u: f64 = tree.child("resample").index(node as u64).rng().random();
        let mut idx = Vec::with_capacity(w.len());
        systematic_indices(&w, u, &mut idx);
        let mut fresh = Vec::with_capacity(st.positions.len());
        for &i in &idx {
            fresh.extend_from_slice(&st.positions[i * n..(i + 1) * n]);
        }
        st.positions = fresh;
        st.logw.fill(0.0);
        st.offset = log_mass;
        summary.resampled = true;
    }
    traj.nodes.push(summary);
    Ok(())
}

fn jump_gain(st: &State, spec: &SystemSpec, opts: &FilterOptions, lay: Layout, node: usize, tau: f64, mark: &[f64]) -> Result<JumpGain> {
    let k = lay.k;
    let max = st.max_logw(tau)?;
    let tests = &opts.tests;
    // [S, Σ e F_k, Σ e λ, Σ e F_k λ]
    let acc = st.reduce(
        opts.exec,
        2 + 2 * k,
        max,
        || (),
        |_, i, x, e, acc| {
            let l = spec.lambda(tau, x, mark);
            acc[0] += e;
            acc[1 + k] += e * l;
            for (a, f) in tests.iter().enumerate() {
                let v = f.value(x);
                if !v.is_finite() {
                    return Err(non_finite(&format!("test function {} value", f.name()), i));
                }
                acc[1 + a] += e * v;
                acc[2 + k + a] += e * v * l;
            }
            Ok(())
        },
    )?;
    let s = acc[0];
    Ok(JumpGain {
        node,
        t: tau,
        mark: mark.to_vec(),
        tests: acc[1..1 + k].iter().map(|v| v / s).collect(),
        lam: acc[1 + k] / s,
        flam: acc[2 + k..2 + 2 * k].iter().map(|v| v / s).collect(),
        mass: (st.offset + max - (st.len() as f64).ln()).exp() * s,
    })
}

struct StepWork {
    s: EvalScratch,
    h: Vec<f64>,
    drift: Vec<f64>,
    jmean: Vec<f64>,
    jbuf: Vec<f64>,
    cross: Vec<f64>,
    res: Vec<f64>,
    db: Vec<f64>,
    dx: Vec<f64>,
    mark: Vec<f64>,
}

impl StepWork {
    fn new(spec: &SystemSpec) -> Self {
        let (n, m) = (spec.dims.n, spec.dims.m);
        let r = spec.residual_noise_dim();
        Self {
            s: EvalScratch::new(spec),
            h: vec![0.0; m],
            drift: vec![0.0; n],
            jmean: vec![0.0; n],
            jbuf: vec![0.0; n],
            cross: vec![0.0; n * m],
            res: vec![0.0; n * r.max(1)],
            db: vec![0.0; r],
            dx: vec![0.0; n],
            mark: vec![0.0; spec.dims.k1],
        }
    }
}

/// One step of every particle from node `j` to node `j + 1`: the weight
/// increment `h·ΔW̃ − ½|h|²Δt + Δt∫(1−λ)ν₂`, the reference-measure Euler
/// move, then the particle's own signal jumps.
#[allow(clippy::too_many_arguments)]
fn propagate(
    st: &mut State,
    spec: &SystemSpec,
    opts: &FilterOptions,
    j: usize,
    t: f64,
    t_next: f64,
    dt: f64,
    y: &[f64],
    inv: &[f64],
    dw: &[f64],
) -> Result<()> {
    let (n, m) = (spec.dims.n, spec.dims.m);
    let r = spec.residual_noise_dim();
    let sqdt = dt.sqrt();
    let rate = spec.nu1.rate * dt;
    let poisson = if rate > 0.0 {
        Some(Poisson::new(rate).map_err(|e| Error::param(format!("signal jump rate {rate}: {e}")))?)
    } else {
        None
    };
    let with_comp = !spec.marks2().is_empty();
    let with_j1 = !spec.marks1().is_empty();
    let errs = FirstError::new();
    zip3_chunks(opts.exec, &mut st.positions, n, &mut st.logw, 1, &mut st.rngs, CHUNK, |c, pos, lw, rngs| {
        let mut w = StepWork::new(spec);
        for (i, ((x, lwi), rng)) in pos.chunks_mut(n).zip(lw.iter_mut()).zip(rngs.iter_mut()).enumerate() {
            spec.effective_h_into(t, x, y, inv, &mut w.h, &mut w.s);
            let mut inc = linalg::dot(&w.h, dw) - 0.5 * linalg::norm_sq(&w.h) * dt;
            if with_comp {
                inc += dt * spec.missed_intensity(t, x);
            }
            *lwi += inc;

            spec.b1(t, x, &mut w.drift);
            if with_j1 {
                spec.jump1_mean(t, x, &mut w.jmean, &mut w.jbuf);
            }
            spec.cross_loading(t, x, &mut w.cross, &mut w.s.nm);
            spec.residual_diffusion(t, x, &mut w.res[..n * r], &mut w.s.nm);
            for a in 0..n {
                let ch: f64 = (0..m).map(|l| w.cross[a * m + l] * w.h[l]).sum();
                w.dx[a] = (w.drift[a] - w.jmean[a] - ch) * dt;
            }
            linalg::matvec_add(&w.cross, n, m, dw, &mut w.dx);
            if r > 0 {
                for b in w.db.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *b = sqdt * z;
                }
                linalg::matvec_add(&w.res[..n * r], n, r, &w.db, &mut w.dx);
            }
            x.iter_mut().zip(&w.dx).for_each(|(a, d)| *a += d);
            if let Some(p) = &poisson {
                let count = p.sample(rng) as u64;
                for _ in 0..count {
                    spec.nu1.sample_mark(rng, &mut w.mark);
                    spec.f1(t_next, x, &w.mark, &mut w.jbuf);
                    x.iter_mut().zip(&w.jbuf).for_each(|(a, d)| *a += d);
                }
            }
            if !(lwi.is_finite() || *lwi == f64::NEG_INFINITY) || !x.iter().all(|v| v.is_finite()) {
                errs.record(c * CHUNK + i, Error::Divergence { step: j, t: t_next, norm: linalg::norm(x), ceiling: f64::MAX });
                return;
            }
        }
    });
    errs.into_result()
}
