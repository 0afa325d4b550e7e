//! Jump-adapted Euler–Maruyama integration of the signal–observation system.
//!
//! The uniform grid carries Brownian increments drawn independently of the
//! jumps; jump times are inserted as extra nodes and the increments are split
//! there by Brownian bridges, so adding or removing jumps never changes the
//! grid-level noise.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::levy::{sample_poisson_stream, thinning_uniform, Channel, JumpStream};
use crate::linalg;
use crate::model::{EvalScratch, Prior, SystemSpec, Variant};
use crate::rng::{SeedTree, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() || steps == 0 {
            return Err(Error::param(format!("time grid needs t0 < t1 and steps >= 1, got [{t0}, {t1}] with {steps}")));
        }
        Ok(Self { t0, t1, steps })
    }

    /// Grid with spacing `dt`, which must divide `t1 − t0`.
    pub fn with_step(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::param(format!("time step must be positive, got {dt}")));
        }
        let ratio = (t1 - t0) / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::param(format!("time step {dt} does not divide [{t0}, {t1}]")));
        }
        Self::new(t0, t1, steps as usize)
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t1
        } else {
            self.t0 + (self.t1 - self.t0) * (k as f64 / self.steps as f64)
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.node(k))
    }
}

/// Node flags of a path record.
pub mod node {
    pub const GRID: u8 = 1;
    pub const SIGNAL_JUMP: u8 = 2;
    pub const CANDIDATE: u8 = 4;
    pub const OBSERVED_JUMP: u8 = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    /// The original system: `W` is the Brownian motion shared by signal and
    /// observation, observation jumps are thinned by `λ`.
    Physical,
    /// The reference system: `dw` holds `ΔW̃`, every `ν₂` event is an
    /// observation jump and `db` holds the signal noise independent of it.
    Reference,
}

/// A simulated joint trajectory on the jump-adapted grid. Step `j` runs from
/// node `j` to node `j + 1`; `x_left`/`y_left` are left limits at each node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub grid: TimeGrid,
    pub n: usize,
    pub m: usize,
    /// width of `db`
    pub nb: usize,
    pub measure: Measure,
    pub seed: u64,
    pub times: Vec<f64>,
    pub flags: Vec<u8>,
    /// Index of the event at this node in the stream named by the flag.
    pub event: Vec<Option<u32>>,
    pub x: Vec<f64>,
    pub x_left: Vec<f64>,
    pub y: Vec<f64>,
    pub y_left: Vec<f64>,
    pub db: Vec<f64>,
    pub dw: Vec<f64>,
    pub signal_jumps: JumpStream,
    pub observation_jumps: JumpStream,
}

impl PathRecord {
    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn x_at(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    pub fn x_left_at(&self, j: usize) -> &[f64] {
        &self.x_left[j * self.n..(j + 1) * self.n]
    }

    pub fn y_at(&self, j: usize) -> &[f64] {
        &self.y[j * self.m..(j + 1) * self.m]
    }

    pub fn y_left_at(&self, j: usize) -> &[f64] {
        &self.y_left[j * self.m..(j + 1) * self.m]
    }

    pub fn db_at(&self, j: usize) -> &[f64] {
        &self.db[j * self.nb..(j + 1) * self.nb]
    }

    pub fn dw_at(&self, j: usize) -> &[f64] {
        &self.dw[j * self.m..(j + 1) * self.m]
    }

    pub fn x_final(&self) -> &[f64] {
        self.x_at(self.nodes() - 1)
    }

    /// `X_{t−}`: the left limit at a node time, or the last value before `t`.
    pub fn x_before(&self, t: f64) -> Vec<f64> {
        let j = self.times.partition_point(|&s| s < t);
        if j < self.nodes() && self.times[j] == t {
            self.x_left_at(j).to_vec()
        } else {
            self.x_at(j.saturating_sub(1)).to_vec()
        }
    }

    /// Index of the node holding observation event `idx`.
    pub fn observation_node(&self, idx: usize) -> Option<usize> {
        (0..self.nodes()).find(|&j| self.flags[j] & node::CANDIDATE != 0 && self.event[j] == Some(idx as u32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Largest admissible `|X|` or `|Y|` before the run is declared divergent.
    pub divergence_ceiling: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { divergence_ceiling: 1e8 }
    }
}

pub fn simulate_path(spec: &SystemSpec, grid: TimeGrid, prior: &Prior, y0: &[f64], seed: u64) -> Result<PathRecord> {
    simulate(spec, grid, prior, y0, seed, Measure::Physical, &SimOptions::default())
}

/// Path of the reference system, where the observation is a martingale
/// driven by `W̃` and `ν₂`-compensated jumps, independent of the signal.
pub fn simulate_reference_path(spec: &SystemSpec, grid: TimeGrid, prior: &Prior, y0: &[f64], seed: u64) -> Result<PathRecord> {
    simulate(spec, grid, prior, y0, seed, Measure::Reference, &SimOptions::default())
}

struct Stepper<'a> {
    spec: &'a SystemSpec,
    measure: Measure,
    s: EvalScratch,
    drift: Vec<f64>,
    jmean: Vec<f64>,
    jbuf: Vec<f64>,
    ydrift: Vec<f64>,
    mat_nb: Vec<f64>,
    mat_nm: Vec<f64>,
    mat_mm: Vec<f64>,
    mat_md: Vec<f64>,
    h_eff: Vec<f64>,
    inv: Vec<f64>,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a SystemSpec, measure: Measure, nb: usize) -> Self {
        let (n, m) = (spec.dims.n, spec.dims.m);
        Self {
            spec,
            measure,
            s: EvalScratch::new(spec),
            drift: vec![0.0; n],
            jmean: vec![0.0; n],
            jbuf: vec![0.0; n.max(m)],
            ydrift: vec![0.0; m],
            mat_nb: vec![0.0; n * nb.max(1)],
            mat_nm: vec![0.0; n * m],
            mat_mm: vec![0.0; m * m],
            mat_md: vec![0.0; m * spec.dims.d.max(1)],
            h_eff: vec![0.0; m],
            inv: vec![0.0; m * m],
            dx: vec![0.0; n],
            dy: vec![0.0; m],
        }
    }

    /// One Euler step of length `h` from `(t, x, y)` with increments `db`, `dw`.
    fn step(&mut self, t: f64, h: f64, x: &mut [f64], y: &mut [f64], db: &[f64], dw: &[f64]) -> Result<()> {
        let spec = self.spec;
        let (n, m, d) = (spec.dims.n, spec.dims.m, spec.dims.d);
        let nb = db.len();
        spec.b1(t, x, &mut self.drift);
        spec.jump1_mean(t, x, &mut self.jmean, &mut self.jbuf[..n]);
        for i in 0..n {
            self.dx[i] = (self.drift[i] - self.jmean[i]) * h;
        }
        match self.measure {
            Measure::Physical => {
                spec.b2(t, x, y, &mut self.ydrift);
                // compensator of N_λ: ∫ f₂ λ ν₂
                let marks = spec.marks2();
                for q in 0..marks.len() {
                    let u = marks.mark(q);
                    spec.f2(t, y, u, &mut self.jbuf[..m]);
                    let c = marks.weights[q] * spec.lambda(t, x, u);
                    for k in 0..m {
                        self.ydrift[k] -= c * self.jbuf[k];
                    }
                }
                for k in 0..m {
                    self.dy[k] = self.ydrift[k] * h;
                }
                match &spec.variant {
                    Variant::Feedback => {
                        spec.sigma0(t, x, &mut self.mat_nb[..n * nb]);
                        linalg::matvec_add(&self.mat_nb[..n * nb], n, nb, db, &mut self.dx);
                        spec.sigma1(t, x, &mut self.mat_nm);
                        linalg::matvec_add(&self.mat_nm, n, m, dw, &mut self.dx);
                        spec.sigma2(t, y, &mut self.mat_mm);
                        linalg::matvec_add(&self.mat_mm, m, m, dw, &mut self.dy);
                    }
                    Variant::Sensor(mix) => {
                        spec.sigma1(t, x, &mut self.mat_nm);
                        linalg::matvec_add(&self.mat_nm, n, m, dw, &mut self.dx);
                        linalg::matvec_add(&mix.sigma2, m, m, dw, &mut self.dy);
                        self.mat_md[..m * d].copy_from_slice(&mix.sigma3);
                        linalg::matvec_add(&self.mat_md[..m * d], m, d, db, &mut self.dy);
                    }
                }
            }
            Measure::Reference => {
                let inv = spec.obs_diffusion_inverse(t, y)?;
                self.inv.copy_from_slice(&inv);
                spec.effective_h_into(t, x, y, &self.inv, &mut self.h_eff, &mut self.s);
                spec.cross_loading(t, x, &mut self.mat_nm, &mut self.s.nm);
                // drift − C h
                for i in 0..n {
                    let ch: f64 = (0..m).map(|k| self.mat_nm[i * m + k] * self.h_eff[k]).sum();
                    self.dx[i] -= ch * h;
                }
                linalg::matvec_add(&self.mat_nm, n, m, dw, &mut self.dx);
                spec.residual_diffusion(t, x, &mut self.mat_nb[..n * nb], &mut self.s.nm);
                linalg::matvec_add(&self.mat_nb[..n * nb], n, nb, db, &mut self.dx);
                spec.jump2_mean(t, y, &mut self.ydrift, &mut self.jbuf[..m]);
                for k in 0..m {
                    self.dy[k] = -self.ydrift[k] * h;
                }
                spec.obs_diffusion(t, y, &mut self.mat_mm);
                linalg::matvec_add(&self.mat_mm, m, m, dw, &mut self.dy);
            }
        }
        x.iter_mut().zip(&self.dx).for_each(|(a, b)| *a += b);
        y.iter_mut().zip(&self.dy).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

fn check_state(step: usize, t: f64, x: &[f64], y: &[f64], ceiling: f64) -> Result<()> {
    let norm = linalg::norm(x).max(linalg::norm(y));
    if norm.is_finite() && norm <= ceiling {
        Ok(())
    } else {
        Err(Error::Divergence { step, t, norm, ceiling })
    }
}

fn normals(rng: &mut StreamRng, out: &mut [f64], scale: f64) {
    for o in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *o = scale * z;
    }
}

pub fn simulate_with(
    spec: &SystemSpec,
    grid: TimeGrid,
    prior: &Prior,
    y0: &[f64],
    seed: u64,
    measure: Measure,
    opts: &SimOptions,
) -> Result<PathRecord> {
    simulate(spec, grid, prior, y0, seed, measure, opts)
}

fn simulate(
    spec: &SystemSpec,
    grid: TimeGrid,
    prior: &Prior,
    y0: &[f64],
    seed: u64,
    measure: Measure,
    opts: &SimOptions,
) -> Result<PathRecord> {
    let (n, m) = (spec.dims.n, spec.dims.m);
    if prior.dim() != n || y0.len() != m {
        return Err(Error::Dimension(format!(
            "prior has dimension {} and y0 {}, system needs {n} and {m}",
            prior.dim(),
            y0.len()
        )));
    }
    let nb = match measure {
        Measure::Physical => spec.dims.d,
        Measure::Reference => spec.residual_noise_dim(),
    };
    let tree = SeedTree::new(seed);
    let mut x = vec![0.0; n];
    prior.sample(&mut tree.child("x0").rng(), &mut x);
    let mut y = y0.to_vec();
    check_state(0, grid.t0, &x, &y, opts.divergence_ceiling)?;

    let signal = sample_poisson_stream(&spec.nu1, Channel::Signal, grid.t0, grid.t1, tree.child("signal-jumps").key())?;
    let mut obs = sample_poisson_stream(&spec.nu2, Channel::Observation, grid.t0, grid.t1, tree.child("obs-candidates").key())?;
    let thin_seed = tree.child("thinning").key();
    let mut events: Vec<(f64, Channel, usize)> = signal
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| (e.t, Channel::Signal, i))
        .chain(obs.events.iter().enumerate().map(|(i, e)| (e.t, Channel::Observation, i)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1 as u8).cmp(&(b.1 as u8))));

    let cap = grid.steps + 1 + events.len();
    let mut rec = PathRecord {
        grid,
        n,
        m,
        nb,
        measure,
        seed,
        times: Vec::with_capacity(cap),
        flags: Vec::with_capacity(cap),
        event: Vec::with_capacity(cap),
        x: Vec::with_capacity(cap * n),
        x_left: Vec::with_capacity(cap * n),
        y: Vec::with_capacity(cap * m),
        y_left: Vec::with_capacity(cap * m),
        db: Vec::with_capacity(cap * nb),
        dw: Vec::with_capacity(cap * m),
        signal_jumps: signal,
        observation_jumps: JumpStream::empty(Channel::Observation, grid.t0, grid.t1, 0),
    };
    let push = |rec: &mut PathRecord, t: f64, flag: u8, ev: Option<usize>, xl: &[f64], yl: &[f64], x: &[f64], y: &[f64]| {
        rec.times.push(t);
        rec.flags.push(flag);
        rec.event.push(ev.map(|i| i as u32));
        rec.x_left.extend_from_slice(xl);
        rec.y_left.extend_from_slice(yl);
        rec.x.extend_from_slice(x);
        rec.y.extend_from_slice(y);
    };
    push(&mut rec, grid.t0, node::GRID, None, &x, &y, &x, &y);

    let mut brownian = tree.child("brownian").rng();
    let mut bridge = tree.child("bridge").rng();
    let mut stepper = Stepper::new(spec, measure, nb);
    let (mut tot_b, mut tot_w) = (vec![0.0; nb], vec![0.0; m]);
    let (mut cur_b, mut cur_w) = (vec![0.0; nb], vec![0.0; m]);
    let (mut inc_b, mut inc_w) = (vec![0.0; nb], vec![0.0; m]);
    let (mut zb, mut zw) = (vec![0.0; nb], vec![0.0; m]);
    let mut jump = vec![0.0; n.max(m)];
    let mut ev_ptr = 0;
    let dt = grid.dt();

    for k in 0..grid.steps {
        let (ta, tb) = (grid.node(k), grid.node(k + 1));
        normals(&mut brownian, &mut tot_b, dt.sqrt());
        normals(&mut brownian, &mut tot_w, dt.sqrt());
        cur_b.fill(0.0);
        cur_w.fill(0.0);
        let mut s = ta;
        while ev_ptr < events.len() && events[ev_ptr].0 <= tb {
            let (tau, channel, idx) = events[ev_ptr];
            ev_ptr += 1;
            // Brownian bridge from (s, cur) to (tb, tot) evaluated at tau
            let span = tb - s;
            let frac = if span > 0.0 { (tau - s) / span } else { 0.0 };
            let sd = if span > 0.0 { ((tau - s) * (tb - tau) / span).max(0.0).sqrt() } else { 0.0 };
            normals(&mut bridge, &mut zb, sd);
            normals(&mut bridge, &mut zw, sd);
            for i in 0..nb {
                inc_b[i] = frac * (tot_b[i] - cur_b[i]) + zb[i];
                cur_b[i] += inc_b[i];
            }
            for i in 0..m {
                inc_w[i] = frac * (tot_w[i] - cur_w[i]) + zw[i];
                cur_w[i] += inc_w[i];
            }
            stepper.step(s, tau - s, &mut x, &mut y, &inc_b, &inc_w)?;
            rec.db.extend_from_slice(&inc_b);
            rec.dw.extend_from_slice(&inc_w);
            let (xl, yl) = (x.clone(), y.clone());
            let flag = match channel {
                Channel::Signal => {
                    let mark = &rec.signal_jumps.events[idx].mark;
                    spec.f1(tau, &xl, mark, &mut jump[..n]);
                    x.iter_mut().zip(&jump[..n]).for_each(|(a, b)| *a += b);
                    node::SIGNAL_JUMP
                }
                Channel::Observation => {
                    let ev = &mut obs.events[idx];
                    ev.accepted = match measure {
                        Measure::Physical => {
                            let l = spec.check_lambda(tau, &xl, &ev.mark)?;
                            thinning_uniform(thin_seed, idx) < l
                        }
                        Measure::Reference => true,
                    };
                    if ev.accepted {
                        spec.f2(tau, &yl, &ev.mark, &mut jump[..m]);
                        y.iter_mut().zip(&jump[..m]).for_each(|(a, b)| *a += b);
                        node::CANDIDATE | node::OBSERVED_JUMP
                    } else {
                        node::CANDIDATE
                    }
                }
            };
            check_state(k, tau, &x, &y, opts.divergence_ceiling)?;
            push(&mut rec, tau, flag, Some(idx), &xl, &yl, &x, &y);
            s = tau;
        }
        for i in 0..nb {
            inc_b[i] = tot_b[i] - cur_b[i];
        }
        for i in 0..m {
            inc_w[i] = tot_w[i] - cur_w[i];
        }
        stepper.step(s, tb - s, &mut x, &mut y, &inc_b, &inc_w)?;
        check_state(k + 1, tb, &x, &y, opts.divergence_ceiling)?;
        rec.db.extend_from_slice(&inc_b);
        rec.dw.extend_from_slice(&inc_w);
        push(&mut rec, tb, node::GRID, None, &x, &y, &x, &y);
    }
    obs.seed = thin_seed;
    rec.observation_jumps = obs;
    Ok(rec)
}

/// An observed jump of `Y` at a record node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedJump {
    pub node: usize,
    pub t: f64,
    pub mark: Vec<f64>,
}

/// What the filter may see: `Y` on the uniform grid and at observed jump
/// times, plus the marks of those jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub grid: TimeGrid,
    pub m: usize,
    pub times: Vec<f64>,
    /// `node::GRID` and/or `node::OBSERVED_JUMP`
    pub flags: Vec<u8>,
    pub y: Vec<f64>,
    pub y_left: Vec<f64>,
    pub jumps: Vec<ObservedJump>,
    /// For each node, index into `jumps` when a jump happens there.
    pub jump_at: Vec<Option<u32>>,
}

impl ObservationRecord {
    /// Assemble a record from raw parts; `jumps` are `(node, mark)` pairs.
    pub fn from_parts(
        grid: TimeGrid,
        m: usize,
        times: Vec<f64>,
        y: Vec<f64>,
        y_left: Vec<f64>,
        jumps: Vec<(usize, Vec<f64>)>,
    ) -> Result<Self> {
        let k = times.len();
        if k < 2 || y.len() != k * m || y_left.len() != k * m {
            return Err(Error::Dimension("observation record arrays disagree in length".into()));
        }
        if times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::param("observation times must be nondecreasing"));
        }
        let mut flags = vec![node::GRID; k];
        let mut jump_at = vec![None; k];
        let mut list = Vec::with_capacity(jumps.len());
        for (i, (nd, mark)) in jumps.into_iter().enumerate() {
            if nd == 0 || nd >= k {
                return Err(Error::param(format!("jump node {nd} out of range")));
            }
            flags[nd] = node::OBSERVED_JUMP;
            jump_at[nd] = Some(i as u32);
            list.push(ObservedJump { node: nd, t: times[nd], mark });
        }
        Ok(Self { grid, m, times, flags, y, y_left, jumps: list, jump_at })
    }

    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn y_at(&self, j: usize) -> &[f64] {
        &self.y[j * self.m..(j + 1) * self.m]
    }

    pub fn y_left_at(&self, j: usize) -> &[f64] {
        &self.y_left[j * self.m..(j + 1) * self.m]
    }

    pub fn jump_at(&self, j: usize) -> Option<&ObservedJump> {
        self.jump_at[j].map(|i| &self.jumps[i as usize])
    }

    pub fn is_grid_node(&self, j: usize) -> bool {
        self.flags[j] & node::GRID != 0
    }

    /// Keep every `factor`-th grid node and all jump nodes.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.steps.is_multiple_of(factor) {
            return Err(Error::param(format!("coarsening factor {factor} does not divide {} steps", self.grid.steps)));
        }
        let grid = TimeGrid::new(self.grid.t0, self.grid.t1, self.grid.steps / factor)?;
        let mut keep = Vec::new();
        let mut gk = 0usize;
        for j in 0..self.nodes() {
            let is_grid = self.is_grid_node(j);
            let on_coarse = is_grid && gk.is_multiple_of(factor);
            if is_grid {
                gk += 1;
            }
            if on_coarse || self.jump_at[j].is_some() {
                keep.push((j, on_coarse));
            }
        }
        let mut out = Self {
            grid,
            m: self.m,
            times: Vec::with_capacity(keep.len()),
            flags: Vec::with_capacity(keep.len()),
            y: Vec::with_capacity(keep.len() * self.m),
            y_left: Vec::with_capacity(keep.len() * self.m),
            jumps: Vec::new(),
            jump_at: Vec::with_capacity(keep.len()),
        };
        for (new, &(j, on_coarse)) in keep.iter().enumerate() {
            out.times.push(self.times[j]);
            out.y.extend_from_slice(self.y_at(j));
            out.y_left.extend_from_slice(self.y_left_at(j));
            let mut flag = if on_coarse { node::GRID } else { 0 };
            let mut at = None;
            if let Some(jump) = self.jump_at(j) {
                flag |= node::OBSERVED_JUMP;
                at = Some(out.jumps.len() as u32);
                out.jumps.push(ObservedJump { node: new, t: jump.t, mark: jump.mark.clone() });
            }
            out.flags.push(flag);
            out.jump_at.push(at);
        }
        Ok(out)
    }
}

/// Strip the signal and the Brownian drivers; keep grid nodes and observed
/// jump nodes. Signal-jump and rejected-candidate nodes are dropped so their
/// times do not leak into the filter's input.
pub fn project_observation(path: &PathRecord) -> ObservationRecord {
    let keep: Vec<usize> = (0..path.nodes())
        .filter(|&j| path.flags[j] & (node::GRID | node::OBSERVED_JUMP) != 0)
        .collect();
    let m = path.m;
    let mut rec = ObservationRecord {
        grid: path.grid,
        m,
        times: Vec::with_capacity(keep.len()),
        flags: Vec::with_capacity(keep.len()),
        y: Vec::with_capacity(keep.len() * m),
        y_left: Vec::with_capacity(keep.len() * m),
        jumps: Vec::new(),
        jump_at: Vec::with_capacity(keep.len()),
    };
    for (new, &j) in keep.iter().enumerate() {
        rec.times.push(path.times[j]);
        rec.y.extend_from_slice(path.y_at(j));
        rec.y_left.extend_from_slice(path.y_left_at(j));
        let flag = path.flags[j] & (node::GRID | node::OBSERVED_JUMP);
        rec.flags.push(flag);
        if flag & node::OBSERVED_JUMP != 0 {
            let idx = path.event[j].expect("observed jump node carries its event") as usize;
            rec.jump_at.push(Some(rec.jumps.len() as u32));
            rec.jumps.push(ObservedJump { node: new, t: path.times[j], mark: path.observation_jumps.events[idx].mark.clone() });
        } else {
            rec.jump_at.push(None);
        }
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LevyMeasure, MarkLaw};

    fn grid(steps: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, steps).unwrap()
    }

    #[test]
    fn constant_drift_is_exact() {
        let spec = SystemSpec::builder("c", 1, 1, 1).b1(|_, _, o| o[0] = 1.0).build().unwrap();
        let p = simulate_path(&spec, grid(1000), &Prior::Point(vec![0.0]), &[0.0], 1).unwrap();
        assert!((p.x_final()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_matches_exponential() {
        let spec = SystemSpec::builder("d", 1, 1, 1).b1(|_, x, o| o[0] = -x[0]).build().unwrap();
        let p = simulate_path(&spec, TimeGrid::with_step(0.0, 1.0, 1e-3).unwrap(), &Prior::Point(vec![1.0]), &[0.0], 1).unwrap();
        assert!((p.x_final()[0] - (-1.0f64).exp()).abs() < 2e-3);
    }

    fn jumpy() -> SystemSpec {
        SystemSpec::builder("j", 1, 1, 1)
            .b1(|_, x, o| o[0] = -x[0])
            .sigma0(|_, _, o| o[0] = 0.5)
            .sigma1(|_, _, o| o[0] = 0.5)
            .b2(|_, x, _, o| o[0] = x[0].tanh())
            .f1(|_, _, u, o| o[0] = u[0])
            .nu1(LevyMeasure::new(3.0, MarkLaw::Gaussian { mean: vec![0.0], std: vec![1.0] }).unwrap())
            .f2(|_, y, u, o| o[0] = u[0] * (1.0 + 0.1 * y[0].sin()))
            .nu2(LevyMeasure::new(4.0, MarkLaw::Uniform { low: vec![0.5], high: vec![1.0] }).unwrap())
            .lambda(|_, x, _| 0.2 + 0.6 / (1.0 + (-x[0]).exp()))
            .build()
            .unwrap()
    }

    #[test]
    fn same_seed_same_record() {
        let spec = jumpy();
        let a = simulate_path(&spec, grid(200), &Prior::Point(vec![0.0]), &[0.0], 9).unwrap();
        let b = simulate_path(&spec, grid(200), &Prior::Point(vec![0.0]), &[0.0], 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn y_jumps_are_exactly_the_accepted_events() {
        let spec = jumpy();
        let p = simulate_path(&spec, grid(200), &Prior::Point(vec![0.0]), &[0.0], 4).unwrap();
        let mut seen = 0;
        for j in 0..p.nodes() {
            let jump = p.y_at(j)[0] - p.y_left_at(j)[0];
            if p.flags[j] & node::OBSERVED_JUMP != 0 {
                let ev = &p.observation_jumps.events[p.event[j].unwrap() as usize];
                let mut f = [0.0];
                spec.f2(p.times[j], p.y_left_at(j), &ev.mark, &mut f);
                assert!((jump - f[0]).abs() < 1e-12);
                seen += 1;
            } else {
                assert_eq!(jump, 0.0);
            }
        }
        assert_eq!(seen, p.observation_jumps.accepted_count());
    }

    #[test]
    fn grid_noise_does_not_depend_on_jumps() {
        let spec = jumpy();
        let quiet = SystemSpec::builder("q", 1, 1, 1).build().unwrap();
        let a = simulate_path(&spec, grid(50), &Prior::Point(vec![0.0]), &[0.0], 5).unwrap();
        let b = simulate_path(&quiet, grid(50), &Prior::Point(vec![0.0]), &[0.0], 5).unwrap();
        let sum_grid = |p: &PathRecord| {
            let mut out = Vec::new();
            let mut acc = 0.0;
            for j in 0..p.steps() {
                acc += p.dw_at(j)[0];
                if p.flags[j + 1] & node::GRID != 0 {
                    out.push(acc);
                    acc = 0.0;
                }
            }
            out
        };
        for (u, v) in sum_grid(&a).iter().zip(sum_grid(&b)) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_noise_moves_signal_and_observation_together() {
        let spec = SystemSpec::builder("w", 1, 1, 1).sigma1(|_, _, o| o[0] = 1.0).build().unwrap();
        let p = simulate_path(&spec, grid(500), &Prior::Point(vec![0.0]), &[0.0], 2).unwrap();
        for j in 0..p.nodes() {
            assert_eq!(p.x_at(j), p.y_at(j));
        }
    }

    #[test]
    fn projection_keeps_y_bitwise() {
        let spec = jumpy();
        let p = simulate_path(&spec, grid(100), &Prior::Point(vec![0.0]), &[0.0], 3).unwrap();
        let o = project_observation(&p);
        assert_eq!(o.jumps.len(), p.observation_jumps.accepted_count());
        let mut i = 0;
        for j in 0..p.nodes() {
            if p.flags[j] & (node::GRID | node::OBSERVED_JUMP) != 0 {
                assert_eq!(o.y_at(i), p.y_at(j));
                i += 1;
            }
        }
        assert_eq!(i, o.nodes());
    }

    #[test]
    fn projection_without_observed_jumps() {
        let spec = SystemSpec::builder("q", 1, 1, 1).build().unwrap();
        let p = simulate_path(&spec, grid(10), &Prior::Point(vec![0.0]), &[0.0], 3).unwrap();
        assert!(project_observation(&p).jumps.is_empty());
    }

    #[test]
    fn coarsen_keeps_jumps() {
        let spec = jumpy();
        let p = simulate_path(&spec, grid(100), &Prior::Point(vec![0.0]), &[0.0], 3).unwrap();
        let o = project_observation(&p);
        let c = o.coarsen(4).unwrap();
        assert_eq!(c.grid.steps, 25);
        assert_eq!(c.jumps.len(), o.jumps.len());
        assert_eq!(c.nodes(), 26 + c.jumps.iter().filter(|j| c.flags[j.node] & node::GRID == 0).count());
        assert!(o.coarsen(3).is_err());
    }

    #[test]
    fn divergence_names_the_step() {
        let spec = SystemSpec::builder("blow", 1, 1, 1).b1(|_, x, o| o[0] = x[0] * x[0]).build().unwrap();
        match simulate_path(&spec, grid(100), &Prior::Point(vec![5.0]), &[0.0], 1) {
            Err(Error::Divergence { step, .. }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
