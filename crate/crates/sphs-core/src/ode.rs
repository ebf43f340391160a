//! Explicit ODE integrators: fixed-step classic Runge–Kutta (RK4) and the
//! adaptive Tsitouras 5(4) pair with FSAL and a PI step controller.
//!
//! The right-hand side is any `FnMut(t, x, dx)`; time-varying inputs are the
//! closure's business (see [`InputSignal`] for the standard interpolants),
//! which keeps the steppers generic and lets training replay the exact same
//! stage sequence for backpropagation through the solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError {
    /// The rhs produced NaN/inf at an accepted state, or the state blew up.
    NonFinite { t: f64 },
    /// Step budget exhausted before reaching the end of the grid.
    MaxSteps { t: f64, max_steps: usize },
    /// The controller drove the step below the resolvable size.
    StepUnderflow { t: f64 },
    /// Malformed time grid, step size, or signal description.
    Grid(&'static str),
}

impl core::fmt::Display for OdeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OdeError::NonFinite { t } => write!(f, "non-finite value at t = {t}"),
            OdeError::MaxSteps { t, max_steps } => {
                write!(f, "exceeded {max_steps} steps at t = {t}")
            }
            OdeError::StepUnderflow { t } => write!(f, "step size underflow at t = {t}"),
            OdeError::Grid(msg) => write!(f, "invalid grid: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OdeError {}

// ── Input signals ───────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Interp {
    /// Piecewise-linear between samples.
    Linear,
    /// Zero-order hold: the left sample applies on `[tᵢ, tᵢ₊₁)`.
    Hold,
}

/// A sampled input trajectory `u(t)`, evaluable at arbitrary times.
/// Outside the sampled range the signal clamps to its end values.
#[derive(Debug, Clone)]
pub struct InputSignal {
    t: Vec<f64>,
    u: Vec<f64>,
    dim: usize,
    interp: Interp,
}

impl InputSignal {
    /// `u` is row-major: `u[i * dim + j]` is channel `j` at time `t[i]`.
    pub fn new(t: Vec<f64>, u: Vec<f64>, dim: usize, interp: Interp) -> Result<Self, OdeError> {
        if t.is_empty() {
            return Err(OdeError::Grid("input signal needs at least one sample"));
        }
        if dim == 0 {
            return Err(OdeError::Grid("input signal needs at least one channel"));
        }
        if u.len() != t.len() * dim {
            return Err(OdeError::Grid("input sample count does not match time grid"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(OdeError::Grid("input times must be strictly increasing"));
        }
        Ok(InputSignal { t, u, dim, interp })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        assert_eq!(out.len(), self.dim, "output buffer length mismatch");
        let n = self.t.len();
        if t <= self.t[0] {
            out.copy_from_slice(&self.u[..self.dim]);
            return;
        }
        if t >= self.t[n - 1] {
            out.copy_from_slice(&self.u[(n - 1) * self.dim..]);
            return;
        }
        // Largest i with t[i] <= t; the checks above guarantee 0 <= i < n−1.
        let i = self.t.partition_point(|&ti| ti <= t) - 1;
        match self.interp {
            Interp::Hold => out.copy_from_slice(&self.u[i * self.dim..(i + 1) * self.dim]),
            Interp::Linear => {
                let w = (t - self.t[i]) / (self.t[i + 1] - self.t[i]);
                let a = &self.u[i * self.dim..(i + 1) * self.dim];
                let b = &self.u[(i + 1) * self.dim..(i + 2) * self.dim];
                for j in 0..self.dim {
                    out[j] = a[j] + w * (b[j] - a[j]);
                }
            }
        }
    }
}

// ── Fixed-step RK4 ──────────────────────────────────────────────────────

/// Stage records of one RK4 step, kept so training can run the discrete
/// adjoint over exactly the states the forward pass visited.
#[derive(Debug, Clone, Default)]
pub(crate) struct Rk4Work {
    /// Stage states: `s[0] = x`, `s[1] = x + h/2·k1`, `s[2] = x + h/2·k2`,
    /// `s[3] = x + h·k3`.
    pub(crate) s: [Vec<f64>; 4],
    pub(crate) k: [Vec<f64>; 4],
}

pub(crate) const RK4_STAGE_OFFSETS: [f64; 4] = [0.0, 0.5, 0.5, 1.0];

/// One classic RK4 step, recording stages into `w`.  `out` may not alias `x`.
pub(crate) fn rk4_step_record<F: FnMut(f64, &[f64], &mut [f64])>(
    f: &mut F,
    t: f64,
    x: &[f64],
    h: f64,
    w: &mut Rk4Work,
    out: &mut [f64],
) {
    let n = x.len();
    for buf in w.s.iter_mut().chain(w.k.iter_mut()) {
        buf.clear();
        buf.resize(n, 0.0);
    }
    w.s[0].copy_from_slice(x);
    for stage in 0..4 {
        if stage > 0 {
            let coeff = if stage == 3 { h } else { 0.5 * h };
            let (prev_k, cur_s) = (stage - 1, stage);
            for i in 0..n {
                w.s[cur_s][i] = x[i] + coeff * w.k[prev_k][i];
            }
        }
        let ts = t + RK4_STAGE_OFFSETS[stage] * h;
        // Detach the k buffer so the closure can read the stage state.
        let mut kbuf = core::mem::take(&mut w.k[stage]);
        f(ts, &w.s[stage], &mut kbuf);
        w.k[stage] = kbuf;
    }
    for i in 0..n {
        out[i] = x[i] + h / 6.0 * (w.k[0][i] + 2.0 * w.k[1][i] + 2.0 * w.k[2][i] + w.k[3][i]);
    }
}

/// One classic RK4 step: `out = x + h/6 (k₁ + 2k₂ + 2k₃ + k₄)`.
pub fn rk4_step<F: FnMut(f64, &[f64], &mut [f64])>(
    f: &mut F,
    t: f64,
    x: &[f64],
    h: f64,
    out: &mut [f64],
) {
    let mut w = Rk4Work::default();
    rk4_step_record(f, t, x, h, &mut w, out);
}

// ── Adaptive Tsit5 ──────────────────────────────────────────────────────

// Tsitouras 5(4) coefficients.  Row sums reproduce the c column and the
// 5th-order weights sum to one; `tableau_is_consistent` pins this down.
pub(crate) const T5_C: [f64; 6] = [0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0];
pub(crate) const T5_A: [[f64; 5]; 5] = [
    [0.161, 0.0, 0.0, 0.0, 0.0],
    [-0.008480655492356989, 0.335480655492357, 0.0, 0.0, 0.0],
    [2.8971530571054935, -6.359448489975075, 4.3622954328695815, 0.0, 0.0],
    [
        5.325864828439257,
        -11.748883564062828,
        7.4955393428898365,
        -0.09249506636175525,
        0.0,
    ],
    [
        5.86145544294642,
        -12.92096931784711,
        8.159367898576159,
        -0.071584973281401,
        -0.028269050394068383,
    ],
];
pub(crate) const T5_B: [f64; 6] = [
    0.09646076681806523,
    0.01,
    0.4798896504144996,
    1.379008574103742,
    -3.290069515436081,
    2.324710524099774,
];
/// Weights of the embedded error estimate `e = h Σ b̃ᵢ kᵢ` (k₇ = f(t+h, y₊)).
pub(crate) const T5_BTILDE: [f64; 7] = [
    -0.00178001105222577714,
    -0.0008164344596567469,
    0.007880878010261995,
    -0.1447110071732629,
    0.5823571654525552,
    -0.45808210592918697,
    0.015151515151515152,
];

/// Tolerances and budget for adaptive integration.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegrationConfig {
    #[cfg_attr(feature = "serde", serde(default = "default_rtol"))]
    pub rtol: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_atol"))]
    pub atol: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_max_steps"))]
    pub max_steps: usize,
    /// Initial step; `None` picks one from the local derivative scale.
    #[cfg_attr(feature = "serde", serde(default))]
    pub h_init: Option<f64>,
}

fn default_rtol() -> f64 {
    1e-6
}
fn default_atol() -> f64 {
    1e-8
}
fn default_max_steps() -> usize {
    1_000_000
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            rtol: default_rtol(),
            atol: default_atol(),
            max_steps: default_max_steps(),
            h_init: None,
        }
    }
}

/// Which integrator drives [`integrate`].
#[derive(Debug, Clone)]
pub enum Solver {
    /// Fixed-step RK4.  Each grid interval is split into round(Δt/h) equal
    /// steps so every output node is hit exactly.
    Rk4 { h: f64 },
    Tsit5(IntegrationConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
}

/// States sampled on the caller's grid; row `i` belongs to `t_eval[i]`
/// (row 0 is the initial condition).
#[derive(Debug, Clone)]
pub struct Solution {
    pub states: Vec<Vec<f64>>,
    pub stats: SolveStats,
}

fn check_grid(x0: &[f64], t_eval: &[f64]) -> Result<(), OdeError> {
    if x0.is_empty() {
        return Err(OdeError::Grid("empty initial state"));
    }
    if t_eval.is_empty() {
        return Err(OdeError::Grid("empty output grid"));
    }
    if t_eval.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(OdeError::Grid("output times must be strictly increasing"));
    }
    if x0.iter().any(|v| !v.is_finite()) || t_eval.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::Grid("initial state and grid must be finite"));
    }
    Ok(())
}

pub fn integrate<F: FnMut(f64, &[f64], &mut [f64])>(
    f: &mut F,
    x0: &[f64],
    t_eval: &[f64],
    solver: &Solver,
) -> Result<Solution, OdeError> {
    match solver {
        Solver::Rk4 { h } => integrate_rk4(f, x0, t_eval, *h),
        Solver::Tsit5(cfg) => integrate_tsit5(f, x0, t_eval, cfg),
    }
}

pub fn integrate_rk4<F: FnMut(f64, &[f64], &mut [f64])>(
    f: &mut F,
    x0: &[f64],
    t_eval: &[f64],
    h: f64,
) -> Result<Solution, OdeError> {
    check_grid(x0, t_eval)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(OdeError::Grid("step size must be positive and finite"));
    }
    let n = x0.len();
    let mut stats = SolveStats::default();
    let mut states = Vec::with_capacity(t_eval.len());
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    let mut xn = vec![0.0; n];
    let mut w = Rk4Work::default();
    for win in t_eval.windows(2) {
        let (t0, t1) = (win[0], win[1]);
        let dt = t1 - t0;
        let steps = math::round(dt / h).max(1.0) as usize;
        let hs = dt / steps as f64;
        let mut t = t0;
        for s in 0..steps {
            rk4_step_record(f, t, &x, hs, &mut w, &mut xn);
            stats.rhs_evals += 4;
            stats.steps_accepted += 1;
            if xn.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t });
            }
            x.copy_from_slice(&xn);
            t = t0 + (s + 1) as f64 * hs;
        }
        states.push(x.clone());
    }
    Ok(Solution { states, stats })
}

fn rms_scaled(e: &[f64], y: &[f64], yn: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = e.len();
    let mut acc = 0.0;
    for i in 0..n {
        let sc = atol + rtol * math::abs(y[i]).max(math::abs(yn[i]));
        let q = e[i] / sc;
        acc += q * q;
    }
    math::sqrt(acc / n as f64)
}

/// Classic two-probe starting-step heuristic (scale the state and slope,
/// refine by one Euler trial).
fn initial_step<F: FnMut(f64, &[f64], &mut [f64])>(
    f: &mut F,
    t0: f64,
    x0: &[f64],
    f0: &[f64],
    t_end: f64,
    rtol: f64,
    atol: f64,
    stats: &mut SolveStats,
) -> f64 {
    let n = x0.len();
    let span = t_end - t0;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..n {
        let sc = atol + rtol * math::abs(x0[i]);
        d0 += (x0[i] / sc) * (x0[i] / sc);
        d1 += (f0[i] / sc) * (f0[i] / sc);
    }
    d0 = math::sqrt(d0 / n as f64);
    d1 = math::sqrt(d1 / n as f64);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let mut x1 = vec![0.0; n];
    for i in 0..n {
        x1[i] = x0[i] + h0 * f0[i];
    }
    let mut f1 = vec![0.0; n];
    f(t0 + h0, &x1, &mut f1);
    stats.rhs_evals += 1;
    let mut d2 = 0.0;
    for i in 0..n {
        let sc = atol + rtol * math::abs(x0[i]);
        let q = (f1[i] - f0[i]) / sc;
        d2 += q * q;
    }
    d2 = math::sqrt(d2 / n as f64) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        math::powf(0.01 / d1.max(d2), 0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

pub fn integrate_tsit5<F: FnMut(f64, &[f64], &mut [f64])>(
    f: &mut F,
    x0: &[f64],
    t_eval: &[f64],
    cfg: &IntegrationConfig,
) -> Result<Solution, OdeError> {
    check_grid(x0, t_eval)?;
    if !(cfg.rtol > 0.0) || !(cfg.atol > 0.0) {
        return Err(OdeError::Grid("tolerances must be positive"));
    }
    let n = x0.len();
    let t_end = *t_eval.last().unwrap();
    let mut stats = SolveStats::default();
    let mut states = Vec::with_capacity(t_eval.len());
    states.push(x0.to_vec());
    if t_eval.len() == 1 {
        return Ok(Solution { states, stats });
    }

    let mut t = t_eval[0];
    let mut y = x0.to_vec();
    let mut k: [Vec<f64>; 7] = core::array::from_fn(|_| vec![0.0; n]);
    let mut ystage = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err_vec = vec![0.0; n];

    // k1 at the initial point (FSAL keeps it warm afterwards).
    {
        let mut k1 = core::mem::take(&mut k[0]);
        f(t, &y, &mut k1);
        k[0] = k1;
    }
    stats.rhs_evals += 1;
    if k[0].iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t });
    }

    let mut h = match cfg.h_init {
        Some(h0) if h0 > 0.0 && h0.is_finite() => h0,
        Some(_) => return Err(OdeError::Grid("h_init must be positive and finite")),
        None => initial_step(f, t, &y, &k[0], t_end, cfg.rtol, cfg.atol, &mut stats),
    };
    let mut errold: f64 = 1e-4;
    let mut attempts = 0usize;

    for target_idx in 1..t_eval.len() {
        let target = t_eval[target_idx];
        while t < target {
            if attempts >= cfg.max_steps {
                return Err(OdeError::MaxSteps { t, max_steps: cfg.max_steps });
            }
            let hs = h.min(target - t);
            if hs < 1e-14 * math::abs(t).max(1.0) {
                return Err(OdeError::StepUnderflow { t });
            }
            // Stages 2..6.
            for stage in 1..6 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(stage) {
                        let a = T5_A[stage - 1][j];
                        if a != 0.0 {
                            acc += a * kj[i];
                        }
                    }
                    ystage[i] = y[i] + hs * acc;
                }
                let mut kbuf = core::mem::take(&mut k[stage]);
                f(t + T5_C[stage - 1] * hs, &ystage, &mut kbuf);
                k[stage] = kbuf;
            }
            // 5th-order proposal and its FSAL stage k7.
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += T5_B[j] * k[j][i];
                }
                ynew[i] = y[i] + hs * acc;
            }
            {
                let mut kbuf = core::mem::take(&mut k[6]);
                f(t + hs, &ynew, &mut kbuf);
                k[6] = kbuf;
            }
            stats.rhs_evals += 6;
            attempts += 1;

            let finite = ynew.iter().all(|v| v.is_finite())
                && k.iter().all(|kj| kj.iter().all(|v| v.is_finite()));
            let err = if finite {
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..7 {
                        acc += T5_BTILDE[j] * k[j][i];
                    }
                    err_vec[i] = hs * acc;
                }
                rms_scaled(&err_vec, &y, &ynew, cfg.rtol, cfg.atol)
            } else {
                f64::INFINITY
            };

            if err <= 1.0 {
                stats.steps_accepted += 1;
                t += hs;
                if target - t < 1e-12 * math::abs(target).max(1.0) {
                    t = target;
                }
                y.copy_from_slice(&ynew);
                k.swap(0, 6); // FSAL: k7 becomes next step's k1.
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * math::powf(err, -0.17) * math::powf(errold, 0.04)).clamp(0.2, 5.0)
                };
                errold = err.max(1e-4);
                h = hs * fac;
            } else {
                stats.steps_rejected += 1;
                let fac = if err.is_finite() {
                    (0.9 * math::powf(err, -0.2)).clamp(0.2, 1.0)
                } else {
                    0.2
                };
                h = hs * fac;
            }
        }
        states.push(y.clone());
    }
    Ok(Solution { states, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, x: &[f64], dx: &mut [f64]) {
        dx[0] = -x[0];
    }

    fn harmonic(_t: f64, x: &[f64], dx: &mut [f64]) {
        dx[0] = x[1];
        dx[1] = -x[0];
    }

    #[test]
    fn rk4_single_step_hand_value() {
        // ẋ = −x, x₀ = 1, h = 0.1: stages k = (−1, −0.95, −0.9525, −0.90475)
        // give x₁ = 1 − 0.0951625 = 0.9048375.
        let mut out = [0.0];
        rk4_step(&mut decay, 0.0, &[1.0], 0.1, &mut out);
        assert!((out[0] - 0.9048375).abs() < 1e-15, "got {}", out[0]);
    }

    #[test]
    fn rk4_error_shrinks_at_fourth_order() {
        let exact = libm::exp(-1.0);
        let run = |h: f64| {
            let sol = integrate_rk4(&mut decay, &[1.0], &[0.0, 1.0], h).unwrap();
            (sol.states[1][0] - exact).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(
            (14.0..=18.0).contains(&ratio),
            "halving h should cut error ~16x, got {ratio}"
        );
    }

    #[test]
    fn rk4_splits_intervals_to_hit_nodes() {
        // Interval 0.32 with h = 0.1 → 3 equal substeps of 0.10666…;
        // an interval shorter than h is still integrated in one step.
        let sol = integrate_rk4(&mut decay, &[1.0], &[0.0, 0.32, 0.36], 0.1).unwrap();
        assert_eq!(sol.stats.steps_accepted, 4);
        assert_eq!(sol.stats.rhs_evals, 16);
        assert!((sol.states[1][0] - libm::exp(-0.32)).abs() < 1e-6);
        assert!((sol.states[2][0] - libm::exp(-0.36)).abs() < 1e-6);
    }

    #[test]
    fn rk4_stage_record_layout() {
        let mut w = Rk4Work::default();
        let mut out = [0.0];
        rk4_step_record(&mut decay, 0.0, &[1.0], 0.1, &mut w, &mut out);
        assert_eq!(w.s[0], vec![1.0]);
        assert_eq!(w.s[1], vec![1.0 + 0.05 * w.k[0][0]]);
        assert_eq!(w.s[2], vec![1.0 + 0.05 * w.k[1][0]]);
        assert_eq!(w.s[3], vec![1.0 + 0.1 * w.k[2][0]]);
        assert_eq!(w.k[0], vec![-1.0]);
    }

    #[test]
    fn tableau_is_consistent() {
        for (row, want) in T5_A.iter().zip(T5_C.iter()) {
            let sum: f64 = row.iter().sum();
            assert!((sum - want).abs() < 1e-12, "row sum {sum} vs c {want}");
        }
        let b_sum: f64 = T5_B.iter().sum();
        assert!((b_sum - 1.0).abs() < 1e-13, "b sums to {b_sum}");
        let bt_sum: f64 = T5_BTILDE.iter().sum();
        assert!(bt_sum.abs() < 1e-12, "btilde sums to {bt_sum}");
    }

    #[test]
    fn tsit5_closes_a_harmonic_period() {
        let period = 2.0 * core::f64::consts::PI;
        let cfg = IntegrationConfig::default();
        let sol = integrate_tsit5(&mut harmonic, &[1.0, 0.0], &[0.0, period], &cfg).unwrap();
        let e0 = (sol.states[1][0] - 1.0).abs();
        let e1 = sol.states[1][1].abs();
        assert!(e0.max(e1) < 1e-5, "period-return error {}", e0.max(e1));
        assert!(sol.stats.steps_accepted > 10);
    }

    #[test]
    fn tsit5_fsal_bookkeeping() {
        let cfg = IntegrationConfig { h_init: Some(0.1), ..Default::default() };
        let sol = integrate_tsit5(&mut decay, &[1.0], &[0.0, 1.0], &cfg).unwrap();
        let attempts = sol.stats.steps_accepted + sol.stats.steps_rejected;
        // 1 initial eval + 6 per attempted step (no hinit probe with h_init).
        assert_eq!(sol.stats.rhs_evals, 1 + 6 * attempts);
    }

    #[test]
    fn tsit5_tightening_tolerance_pays_off() {
        let period = 2.0 * core::f64::consts::PI;
        let run = |rtol: f64, atol: f64| {
            let cfg = IntegrationConfig { rtol, atol, ..Default::default() };
            let sol = integrate_tsit5(&mut harmonic, &[1.0, 0.0], &[0.0, period], &cfg).unwrap();
            let dx = sol.states[1][0] - 1.0;
            let dv = sol.states[1][1];
            libm::sqrt(dx * dx + dv * dv)
        };
        let loose = run(1e-5, 1e-7);
        let tight = run(1e-7, 1e-9);
        assert!(
            tight * 10.0 <= loose,
            "100x tighter tolerance should improve accuracy >= 10x (got {loose:e} -> {tight:e})"
        );
    }

    #[test]
    fn tsit5_recovers_from_oversized_initial_step() {
        let period = 2.0 * core::f64::consts::PI;
        let cfg = IntegrationConfig { h_init: Some(10.0), ..Default::default() };
        let sol = integrate_tsit5(&mut harmonic, &[1.0, 0.0], &[0.0, period], &cfg).unwrap();
        assert!(sol.stats.steps_rejected > 0, "a 10-second step must be rejected");
        assert!((sol.states[1][0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn tsit5_multi_node_grid_matches_exponential() {
        let t_eval: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
        let cfg = IntegrationConfig::default();
        let sol = integrate_tsit5(&mut decay, &[1.0], &t_eval, &cfg).unwrap();
        for (ti, row) in t_eval.iter().zip(&sol.states) {
            assert!((row[0] - libm::exp(-ti)).abs() < 1e-7);
        }
    }

    #[test]
    fn grid_validation() {
        let cfg = IntegrationConfig::default();
        assert!(matches!(
            integrate_tsit5(&mut decay, &[1.0], &[0.0, 0.0], &cfg),
            Err(OdeError::Grid(_))
        ));
        assert!(matches!(
            integrate_tsit5(&mut decay, &[], &[0.0, 1.0], &cfg),
            Err(OdeError::Grid(_))
        ));
        assert!(matches!(
            integrate_rk4(&mut decay, &[1.0], &[1.0, 0.5], 0.1),
            Err(OdeError::Grid(_))
        ));
        assert!(matches!(
            integrate_rk4(&mut decay, &[1.0], &[0.0, 1.0], -0.1),
            Err(OdeError::Grid(_))
        ));
    }

    #[test]
    fn step_budget_is_enforced() {
        let cfg = IntegrationConfig { max_steps: 5, ..Default::default() };
        assert!(matches!(
            integrate_tsit5(&mut harmonic, &[1.0, 0.0], &[0.0, 1000.0], &cfg),
            Err(OdeError::MaxSteps { max_steps: 5, .. })
        ));
    }

    #[test]
    fn non_finite_rhs_is_reported() {
        let mut bad = |_t: f64, _x: &[f64], dx: &mut [f64]| {
            dx[0] = f64::NAN;
        };
        assert!(matches!(
            integrate_rk4(&mut bad, &[1.0], &[0.0, 1.0], 0.1),
            Err(OdeError::NonFinite { .. })
        ));
        // Adaptive: NaN at the very first derivative evaluation is fatal too.
        let cfg = IntegrationConfig::default();
        assert!(matches!(
            integrate_tsit5(&mut bad, &[1.0], &[0.0, 1.0], &cfg),
            Err(OdeError::NonFinite { .. })
        ));
    }

    #[test]
    fn finite_time_blowup_underflows_not_hangs() {
        // ẋ = x² from 1 blows up at t = 1; the controller must give up
        // with a meaningful error rather than loop forever.
        let mut quad = |_t: f64, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[0] * x[0];
        };
        let cfg = IntegrationConfig { max_steps: 100_000, ..Default::default() };
        match integrate_tsit5(&mut quad, &[1.0], &[0.0, 2.0], &cfg) {
            Err(OdeError::StepUnderflow { t }) | Err(OdeError::MaxSteps { t, .. }) => {
                assert!(t <= 1.01, "failure should localize near the blowup, got t = {t}");
            }
            other => panic!("expected failure near blowup, got {other:?}"),
        }
    }

    #[test]
    fn input_signal_interpolation_and_clamping() {
        let sig = InputSignal::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 10.0, 2.0, 30.0, 4.0, 50.0],
            2,
            Interp::Linear,
        )
        .unwrap();
        let mut u = [0.0; 2];
        sig.eval(0.5, &mut u);
        assert_eq!(u, [1.0, 20.0]);
        sig.eval(-1.0, &mut u);
        assert_eq!(u, [0.0, 10.0]);
        sig.eval(5.0, &mut u);
        assert_eq!(u, [4.0, 50.0]);

        let hold = InputSignal::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 10.0, 2.0, 30.0, 4.0, 50.0],
            2,
            Interp::Hold,
        )
        .unwrap();
        hold.eval(0.99, &mut u);
        assert_eq!(u, [0.0, 10.0]);
        hold.eval(1.0, &mut u);
        assert_eq!(u, [2.0, 30.0]);
        hold.eval(9.0, &mut u);
        assert_eq!(u, [4.0, 50.0]);

        assert!(InputSignal::new(vec![0.0, 0.0], vec![1.0, 2.0], 1, Interp::Hold).is_err());
        assert!(InputSignal::new(vec![0.0, 1.0], vec![1.0], 1, Interp::Hold).is_err());
    }

    #[test]
    fn solver_enum_dispatches() {
        let sol = integrate(&mut decay, &[1.0], &[0.0, 1.0], &Solver::Rk4 { h: 0.01 }).unwrap();
        assert!((sol.states[1][0] - libm::exp(-1.0)).abs() < 1e-9);
        let sol = integrate(
            &mut decay,
            &[1.0],
            &[0.0, 1.0],
            &Solver::Tsit5(IntegrationConfig::default()),
        )
        .unwrap();
        assert!((sol.states[1][0] - libm::exp(-1.0)).abs() < 1e-6);
    }
}
