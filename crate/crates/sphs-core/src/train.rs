//! Training: Adam over two regimes.
//!
//! * **Derivative matching** — regress the model's right-hand side onto
//!   (state, input, ẋ) triples.  Cheap, parallel-friendly, and the usual
//!   first stage when finite-difference derivatives are acceptable.
//! * **Trajectory matching** — roll the model forward with fixed-step RK4
//!   over short segments of the data and backpropagate the prediction error
//!   through every solver stage (discrete adjoint).  Slower but immune to
//!   derivative-estimation noise.
//!
//! Both regimes reduce to many vector–Jacobian products against the model's
//! compiled graph, so gradients are exact up to rounding — the FD
//! cross-checks in the tests pin that down.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DataError, DerivativeSet, Trajectory};
use crate::math;
use crate::ode::{self, Interp, Rk4Work, RK4_STAGE_OFFSETS};
use crate::phs::{ModelBuffer, ModelError, PhsModel};

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    /// Loss or parameters became non-finite; `traj` names the offending
    /// trajectory when one rollout can be blamed.
    Diverged { step: usize, traj: Option<usize> },
    Model(ModelError),
    Data(DataError),
    Config(&'static str),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Diverged { step, traj: Some(traj) } => {
                write!(f, "training diverged at step {step} on trajectory {traj}")
            }
            TrainError::Diverged { step, traj: None } => {
                write!(f, "training diverged at step {step} (non-finite loss or parameters)")
            }
            TrainError::Model(e) => write!(f, "model error: {e}"),
            TrainError::Data(e) => write!(f, "data error: {e}"),
            TrainError::Config(msg) => write!(f, "invalid training config: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<DataError> for TrainError {
    fn from(e: DataError) -> Self {
        TrainError::Data(e)
    }
}

// ── Adam ────────────────────────────────────────────────────────────────

/// Adam with bias correction; the de-facto default for these models.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed mid-run");
        assert_eq!(grad.len(), self.m.len(), "gradient length mismatch");
        self.t += 1;
        let b1t = 1.0 - math::powf(self.beta1, self.t as f64);
        let b2t = 1.0 - math::powf(self.beta2, self.t as f64);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (math::sqrt(vhat) + self.eps);
        }
    }
}

/// Mean squared error over paired slices.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mse over unequal lengths");
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc / a.len() as f64
}

// ── Configuration & history ─────────────────────────────────────────────

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    #[cfg_attr(feature = "serde", serde(default = "default_steps"))]
    pub steps: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_lr"))]
    pub lr: f64,
    /// Samples (or rollout segments) per gradient step; 0 means full batch.
    #[cfg_attr(feature = "serde", serde(default = "default_batch"))]
    pub batch_size: usize,
    /// Rollout segment length in data intervals (trajectory regime);
    /// 0 means one rollout over the whole trajectory.
    #[cfg_attr(feature = "serde", serde(default))]
    pub rollout_steps: usize,
    /// Latent state dimensions the model carries beyond what the data
    /// observes.  Rollouts start them at zero; the loss never reads them.
    #[cfg_attr(feature = "serde", serde(default))]
    pub augmented_dims: usize,
    /// Model state indices the data columns map to; `None` means the first
    /// `state_dim − augmented_dims` indices in order.
    #[cfg_attr(feature = "serde", serde(default))]
    pub observed: Option<Vec<usize>>,
    /// Drives batch shuffling only — model init has its own seed.
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

fn default_steps() -> usize {
    1000
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    128
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: default_steps(),
            lr: default_lr(),
            batch_size: default_batch(),
            rollout_steps: 0,
            augmented_dims: 0,
            observed: None,
            seed: 0,
        }
    }
}

/// Resolved observation map: which model state indices the data columns
/// correspond to.  `is_full` means the data sees the entire state, which is
/// what allows re-seeding rollout segments mid-trajectory.
struct ObsLayout {
    observed: Vec<usize>,
    n_model: usize,
}

impl ObsLayout {
    fn resolve(n_model: usize, cfg: &TrainConfig) -> Result<Self, TrainError> {
        if cfg.augmented_dims >= n_model {
            return Err(TrainError::Config("augmented dims must leave at least one observed dim"));
        }
        let n_obs = n_model - cfg.augmented_dims;
        let observed = match &cfg.observed {
            Some(list) => {
                if list.len() != n_obs {
                    return Err(TrainError::Config(
                        "observed index count must equal state_dim - augmented_dims",
                    ));
                }
                if list.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(TrainError::Config("observed indices must be strictly increasing"));
                }
                if list.iter().any(|&i| i >= n_model) {
                    return Err(TrainError::Config("observed index out of state range"));
                }
                list.clone()
            }
            None => (0..n_obs).collect(),
        };
        Ok(ObsLayout { observed, n_model })
    }

    fn is_full(&self) -> bool {
        self.observed.len() == self.n_model
    }

    /// Place a data sample into a model state, zeroing unobserved dims.
    fn seed_state(&self, data: &[f64], out: &mut [f64]) {
        if self.is_full() {
            out.copy_from_slice(data);
        } else {
            out.fill(0.0);
            for (k, &i) in self.observed.iter().enumerate() {
                out[i] = data[k];
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    /// Pre-update batch loss at every step.
    pub losses: Vec<f64>,
    /// Total wall-clock time (0 when the crate is built without `std`).
    pub wall_seconds: f64,
}

// ── Batch index streams ─────────────────────────────────────────────────

/// Epoch-wise shuffled minibatch cursor (Fisher–Yates per epoch).
struct BatchStream {
    perm: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(rows: usize, batch_size: usize, seed: u64) -> Self {
        let batch = if batch_size == 0 || batch_size >= rows { rows } else { batch_size };
        BatchStream {
            perm: (0..rows).collect(),
            pos: rows, // force a shuffle on first use
            batch,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn full_batch(&self) -> bool {
        self.batch == self.perm.len()
    }

    fn next_batch(&mut self) -> &[usize] {
        if self.full_batch() {
            return &self.perm;
        }
        if self.pos + self.batch > self.perm.len() {
            // Fisher–Yates reshuffle.
            for i in (1..self.perm.len()).rev() {
                let j = (self.rng.next_u64() % (i as u64 + 1)) as usize;
                self.perm.swap(i, j);
            }
            self.pos = 0;
        }
        let out = &self.perm[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        out
    }
}

#[cfg(feature = "std")]
fn now_seconds() -> f64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[cfg(not(feature = "std"))]
fn now_seconds() -> f64 {
    0.0
}

// ── Derivative regime ───────────────────────────────────────────────────

fn check_set(model: &PhsModel, set: &DerivativeSet) -> Result<(), TrainError> {
    if set.rows == 0 {
        return Err(TrainError::Data(DataError::Empty));
    }
    if set.state_dim != model.state_dim() {
        return Err(TrainError::Config("sample state dimension does not match model"));
    }
    if model.input_dim() > 0 && set.input_dim != model.input_dim() {
        return Err(TrainError::Config("sample input dimension does not match model"));
    }
    Ok(())
}

/// Batch loss `L = mean‖rhs(xᵢ, uᵢ) − ẋᵢ‖²/n` and its exact parameter
/// gradient (written, not accumulated, into `grad`).  `rows` selects the
/// samples; the mean runs over `rows.len() · state_dim` scalars.
pub fn derivative_loss_grad(
    model: &PhsModel,
    set: &DerivativeSet,
    rows: &[usize],
    grad: &mut [f64],
) -> Result<f64, TrainError> {
    check_set(model, set)?;
    if rows.is_empty() {
        return Err(TrainError::Config("empty batch"));
    }
    if grad.len() != model.params().len() {
        return Err(TrainError::Config("gradient buffer length mismatch"));
    }
    grad.fill(0.0);
    let n = set.state_dim;
    let m_model = model.input_dim();
    let u_empty: [f64; 0] = [];
    let mut buf = model.buffer();
    let mut pred = vec![0.0; n];
    let mut seed = vec![0.0; n];
    let denom = (rows.len() * n) as f64;
    let mut loss = 0.0;
    for &r in rows {
        if r >= set.rows {
            return Err(TrainError::Config("batch index out of range"));
        }
        let x = &set.x[r * n..(r + 1) * n];
        let y = &set.dxdt[r * n..(r + 1) * n];
        let u: &[f64] = if m_model > 0 {
            &set.u[r * m_model..(r + 1) * m_model]
        } else {
            &u_empty
        };
        model.rhs_buf(&mut buf, x, u, &mut pred)?;
        for i in 0..n {
            let d = pred[i] - y[i];
            loss += d * d / denom;
            seed[i] = 2.0 * d / denom;
        }
        model.rhs_pullback_buf(&mut buf, &seed, None, Some(grad))?;
    }
    Ok(loss)
}

/// Fit the model's right-hand side to derivative samples with Adam.
pub fn fit_derivative(
    model: &mut PhsModel,
    set: &DerivativeSet,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    check_set(model, set)?;
    if cfg.augmented_dims > 0 {
        return Err(TrainError::Config(
            "derivative fitting needs full-state samples; augmented dims are trajectory-only",
        ));
    }
    // With no augmented dims a valid observed list can only be the identity,
    // so resolving is purely a validation step here.
    ObsLayout::resolve(model.state_dim(), cfg)?;
    if cfg.steps == 0 {
        return Err(TrainError::Config("steps must be positive"));
    }
    if !(cfg.lr > 0.0) || !cfg.lr.is_finite() {
        return Err(TrainError::Config("learning rate must be positive and finite"));
    }
    let started = now_seconds();
    let mut stream = BatchStream::new(set.rows, cfg.batch_size, cfg.seed);
    let mut adam = AdamState::new(model.params().len(), cfg.lr);
    let mut grad = vec![0.0; model.params().len()];
    let mut history = TrainHistory::default();
    for step in 0..cfg.steps {
        let loss = {
            let rows = stream.next_batch();
            derivative_loss_grad(model, set, rows, &mut grad)?
        };
        if !loss.is_finite() {
            return Err(TrainError::Diverged { step, traj: None });
        }
        history.losses.push(loss);
        adam.step(model.params_mut().values_mut(), &grad);
        if model.params().values().iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Diverged { step, traj: None });
        }
    }
    history.wall_seconds = now_seconds() - started;
    Ok(history)
}

// ── Trajectory regime (discrete adjoint through RK4) ────────────────────

/// One rollout segment: trajectory index, first sample, number of steps.
#[derive(Debug, Clone, Copy)]
struct Segment {
    traj: usize,
    start: usize,
    steps: usize,
}

fn build_segments(trajs: &[Trajectory], rollout: usize) -> Vec<Segment> {
    let mut segs = Vec::new();
    for (ti, tr) in trajs.iter().enumerate() {
        let intervals = tr.len() - 1;
        let chunk = if rollout == 0 { intervals } else { rollout };
        let mut start = 0;
        while start < intervals {
            let steps = chunk.min(intervals - start);
            segs.push(Segment { traj: ti, start, steps });
            start += steps;
        }
    }
    segs
}

/// Forward rollout + discrete adjoint for one segment.  Every RK4 stage the
/// forward pass visits is revisited in reverse, pulling the prediction-error
/// adjoint back through stage states and into the parameter gradient.
/// Returns the segment's summed squared error over `steps · #observed`
/// scalars; `grad` accumulates `∂(that sum)/∂θ` scaled by `weight`.
fn segment_loss_grad(
    model: &PhsModel,
    tr: &Trajectory,
    seg: Segment,
    layout: &ObsLayout,
    weight: f64,
    grad: Option<&mut [f64]>,
    scratch: &mut RolloutScratch,
) -> Result<f64, TrainError> {
    let n = model.state_dim();
    let m = model.input_dim();
    let sig = if m > 0 {
        Some(
            tr.input_signal(Interp::Linear)
                .ok_or(TrainError::Config("model expects inputs but trajectory has none"))?,
        )
    } else {
        None
    };
    scratch.resize(seg.steps, n, m);

    // Forward: record every stage of every step.
    let mut ubuf = vec![0.0; m];
    let mut sse = 0.0;
    layout.seed_state(tr.state(seg.start), &mut scratch.xs[0]);
    for j in 0..seg.steps {
        let t0 = tr.times()[seg.start + j];
        let h = tr.times()[seg.start + j + 1] - t0;
        scratch.hs[j] = h;
        scratch.ts[j] = t0;
        let (xs_prev, xs_next) = {
            let (a, b) = scratch.xs.split_at_mut(j + 1);
            (&a[j], &mut b[0])
        };
        {
            let buf = &mut scratch.buf;
            let mut f = |t: f64, x: &[f64], dx: &mut [f64]| {
                if let Some(sig) = &sig {
                    sig.eval(t, &mut ubuf);
                }
                model
                    .rhs_buf(buf, x, &ubuf, dx)
                    .expect("dimensions are validated before rollout");
            };
            ode::rk4_step_record(&mut f, t0, xs_prev, h, &mut scratch.works[j], xs_next);
        }
        if xs_next.iter().any(|v| !v.is_finite()) {
            return Ok(f64::INFINITY);
        }
        let target = tr.state(seg.start + j + 1);
        for (k, &i) in layout.observed.iter().enumerate() {
            let d = xs_next[i] - target[k];
            sse += d * d;
        }
    }

    let Some(grad) = grad else { return Ok(sse) };

    // Backward: λ is the adjoint of the current sample's predicted state.
    let mut lambda = vec![0.0; n];
    let mut kbar = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut sbar = vec![0.0; n];
    for j in (0..seg.steps).rev() {
        let target = tr.state(seg.start + j + 1);
        let pred = &scratch.xs[j + 1];
        for (k, &i) in layout.observed.iter().enumerate() {
            lambda[i] += weight * 2.0 * (pred[i] - target[k]);
        }
        let h = scratch.hs[j];
        let t0 = scratch.ts[j];
        let w = &scratch.works[j];
        // x_out = x + h/6 (k1 + 2k2 + 2k3 + k4).
        for i in 0..n {
            kbar[0][i] = h / 6.0 * lambda[i];
            kbar[1][i] = h / 3.0 * lambda[i];
            kbar[2][i] = h / 3.0 * lambda[i];
            kbar[3][i] = h / 6.0 * lambda[i];
        }
        // Walk stages 4..1; each contributes to the previous k̄ and to x̄
        // (accumulated directly into λ, whose direct term is already there).
        for stage in (0..4).rev() {
            let ts = t0 + RK4_STAGE_OFFSETS[stage] * h;
            if let Some(sig) = &sig {
                sig.eval(ts, &mut ubuf);
            }
            sbar.fill(0.0);
            model.rhs_vjp_buf(
                &mut scratch.buf,
                &w.s[stage],
                &ubuf,
                &kbar[stage],
                Some(&mut sbar),
                Some(&mut *grad),
            )?;
            match stage {
                0 => {
                    for i in 0..n {
                        lambda[i] += sbar[i];
                    }
                }
                1 | 2 => {
                    // s_{stage+1} = x + h/2 k_stage … wait: s2 = x + h/2 k1.
                    for i in 0..n {
                        lambda[i] += sbar[i];
                        kbar[stage - 1][i] += 0.5 * h * sbar[i];
                    }
                }
                3 => {
                    for i in 0..n {
                        lambda[i] += sbar[i];
                        kbar[2][i] += h * sbar[i];
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(sse)
}

/// Reused buffers for one rollout segment.
struct RolloutScratch {
    xs: Vec<Vec<f64>>,
    works: Vec<Rk4Work>,
    hs: Vec<f64>,
    ts: Vec<f64>,
    buf: ModelBuffer,
}

impl RolloutScratch {
    fn new() -> Self {
        RolloutScratch {
            xs: Vec::new(),
            works: Vec::new(),
            hs: Vec::new(),
            ts: Vec::new(),
            buf: ModelBuffer::default(),
        }
    }

    fn resize(&mut self, steps: usize, n: usize, _m: usize) {
        self.xs.resize_with(steps + 1, Vec::new);
        for x in &mut self.xs {
            x.clear();
            x.resize(n, 0.0);
        }
        self.works.resize_with(steps, Rk4Work::default);
        self.hs.resize(steps, 0.0);
        self.ts.resize(steps, 0.0);
    }
}

fn check_trajs(
    model: &PhsModel,
    trajs: &[Trajectory],
    layout: &ObsLayout,
) -> Result<(), TrainError> {
    if trajs.is_empty() {
        return Err(TrainError::Data(DataError::Empty));
    }
    for tr in trajs {
        if tr.state_dim() != layout.observed.len() {
            return Err(TrainError::Config("trajectory state dimension does not match model"));
        }
        if tr.len() < 2 {
            return Err(TrainError::Data(DataError::TooShort { needed: 2, got: tr.len() }));
        }
        if model.input_dim() > 0 {
            if tr.input_dim() != model.input_dim() {
                return Err(TrainError::Config("trajectory input dimension does not match model"));
            }
        }
    }
    Ok(())
}

/// Loss and exact gradient (written, not accumulated) of one fully observed
/// rollout starting at sample `start`: roll `steps` RK4 steps on the data
/// grid and average the squared error over all predicted samples (the
/// seeded initial sample is not part of the loss).
pub fn trajectory_loss_grad(
    model: &PhsModel,
    tr: &Trajectory,
    start: usize,
    steps: usize,
    grad: &mut [f64],
) -> Result<f64, TrainError> {
    if steps == 0 {
        return Err(TrainError::Config("rollout length must be at least 1"));
    }
    let layout = ObsLayout::resolve(model.state_dim(), &TrainConfig::default())?;
    check_trajs(model, core::slice::from_ref(tr), &layout)?;
    if start + steps > tr.len() - 1 {
        return Err(TrainError::Config("rollout window exceeds trajectory"));
    }
    if grad.len() != model.params().len() {
        return Err(TrainError::Config("gradient buffer length mismatch"));
    }
    grad.fill(0.0);
    let mut scratch = RolloutScratch::new();
    let denom = (steps * model.state_dim()) as f64;
    let seg = Segment { traj: 0, start, steps };
    let sse = segment_loss_grad(model, tr, seg, &layout, 1.0 / denom, Some(grad), &mut scratch)?;
    Ok(sse / denom)
}

/// Fit by rollout matching.  With fully observed state, every trajectory is
/// split into consecutive segments of `cfg.rollout_steps` data intervals
/// (0 = whole trajectory), each re-seeded from the data.  With augmented or
/// partially observed state, rollouts always run from the trajectory start
/// — unobserved dims start at zero and interior samples cannot re-seed them
/// — and the loss reads observed dims only.
pub fn fit_trajectory(
    model: &mut PhsModel,
    trajs: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    let layout = ObsLayout::resolve(model.state_dim(), cfg)?;
    check_trajs(model, trajs, &layout)?;
    if !layout.is_full() && cfg.rollout_steps != 0 {
        return Err(TrainError::Config(
            "truncated rollouts need fully observed state to re-seed segments",
        ));
    }
    if cfg.steps == 0 {
        return Err(TrainError::Config("steps must be positive"));
    }
    if !(cfg.lr > 0.0) || !cfg.lr.is_finite() {
        return Err(TrainError::Config("learning rate must be positive and finite"));
    }
    let started = now_seconds();
    let segments = build_segments(trajs, cfg.rollout_steps);
    let mut stream = BatchStream::new(segments.len(), cfg.batch_size, cfg.seed);
    let mut adam = AdamState::new(model.params().len(), cfg.lr);
    let mut grad = vec![0.0; model.params().len()];
    let mut scratch = RolloutScratch::new();
    let mut history = TrainHistory::default();
    let n_obs = layout.observed.len();
    for step in 0..cfg.steps {
        grad.fill(0.0);
        let mut loss = 0.0;
        let rows: Vec<usize> = stream.next_batch().to_vec();
        let compared: usize = rows.iter().map(|&si| segments[si].steps * n_obs).sum();
        let weight = 1.0 / compared as f64;
        for &si in &rows {
            let seg = segments[si];
            let sse = segment_loss_grad(
                model,
                &trajs[seg.traj],
                seg,
                &layout,
                weight,
                Some(&mut grad),
                &mut scratch,
            )?;
            if !sse.is_finite() {
                return Err(TrainError::Diverged { step, traj: Some(seg.traj) });
            }
            loss += sse * weight;
        }
        if !loss.is_finite() {
            return Err(TrainError::Diverged { step, traj: None });
        }
        history.losses.push(loss);
        adam.step(model.params_mut().values_mut(), &grad);
        if model.params().values().iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Diverged { step, traj: None });
        }
    }
    history.wall_seconds = now_seconds() - started;
    Ok(history)
}

/// Roll the trained model over a full data grid from the data's initial
/// state (fixed-step RK4 on the grid, linear input interpolation) — the
/// standard way to score a fit against a held-out trajectory.
pub fn rollout_on_grid(model: &PhsModel, tr: &Trajectory) -> Result<Trajectory, TrainError> {
    let layout = ObsLayout::resolve(model.state_dim(), &TrainConfig::default())?;
    check_trajs(model, core::slice::from_ref(tr), &layout)?;
    let sig = if model.input_dim() > 0 { tr.input_signal(Interp::Linear) } else { None };
    let mut ubuf = vec![0.0; model.input_dim()];
    let mut buf = model.buffer();
    let mut f = |t: f64, x: &[f64], dx: &mut [f64]| {
        if let Some(sig) = &sig {
            sig.eval(t, &mut ubuf);
        }
        model.rhs_buf(&mut buf, x, &ubuf, dx).expect("dimensions validated");
    };
    let n = model.state_dim();
    let mut states = Vec::with_capacity(tr.len() * n);
    states.extend_from_slice(tr.state(0));
    let mut x = tr.state(0).to_vec();
    let mut xn = vec![0.0; n];
    let mut w = Rk4Work::default();
    for j in 0..tr.len() - 1 {
        let t0 = tr.times()[j];
        let h = tr.times()[j + 1] - t0;
        ode::rk4_step_record(&mut f, t0, &x, h, &mut w, &mut xn);
        if xn.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Diverged { step: j, traj: None });
        }
        states.extend_from_slice(&xn);
        x.copy_from_slice(&xn);
    }
    drop(f);
    Trajectory::new(tr.times().to_vec(), states, n).map_err(TrainError::Data)
}
