//! Trajectory containers, the spinning-rigid-body benchmark, derivative
//! extraction, per-channel normalization, and measurement-noise injection.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::math;
use crate::ode::{self, InputSignal, Interp, IntegrationConfig, OdeError};

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    Empty,
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    NotIncreasing,
    NonFinite,
    DimZero,
    /// Trajectories in one dataset must agree in dimensions.
    MixedDims,
    /// A channel with no spread cannot be scaled to unit variance.
    ZeroVariance { what: &'static str, channel: usize },
    /// Too few samples for the requested statistic.
    TooShort { needed: usize, got: usize },
}

impl core::fmt::Display for DataError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DataError::Empty => write!(f, "empty dataset"),
            DataError::LengthMismatch { what, expected, got } => {
                write!(f, "{what} has {got} values, expected {expected}")
            }
            DataError::NotIncreasing => write!(f, "times must be strictly increasing"),
            DataError::NonFinite => write!(f, "data contains NaN or infinity"),
            DataError::DimZero => write!(f, "dimension must be at least 1"),
            DataError::MixedDims => write!(f, "trajectories have inconsistent dimensions"),
            DataError::TooShort { needed, got } => {
                write!(f, "need at least {needed} samples, got {got}")
            }
            DataError::ZeroVariance { what, channel } => {
                write!(f, "{what} channel {channel} has zero variance and cannot be normalized")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DataError {}

// ── Trajectories ────────────────────────────────────────────────────────

/// One sampled trajectory: times, row-major states, optional row-major
/// inputs on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t: Vec<f64>,
    states: Vec<f64>,
    state_dim: usize,
    inputs: Option<Vec<f64>>,
    input_dim: usize,
}

impl Trajectory {
    pub fn new(t: Vec<f64>, states: Vec<f64>, state_dim: usize) -> Result<Self, DataError> {
        Self::build(t, states, state_dim, None, 0)
    }

    pub fn with_inputs(
        t: Vec<f64>,
        states: Vec<f64>,
        state_dim: usize,
        inputs: Vec<f64>,
        input_dim: usize,
    ) -> Result<Self, DataError> {
        if input_dim == 0 {
            return Err(DataError::DimZero);
        }
        Self::build(t, states, state_dim, Some(inputs), input_dim)
    }

    fn build(
        t: Vec<f64>,
        states: Vec<f64>,
        state_dim: usize,
        inputs: Option<Vec<f64>>,
        input_dim: usize,
    ) -> Result<Self, DataError> {
        if state_dim == 0 {
            return Err(DataError::DimZero);
        }
        if t.is_empty() {
            return Err(DataError::Empty);
        }
        if states.len() != t.len() * state_dim {
            return Err(DataError::LengthMismatch {
                what: "state array",
                expected: t.len() * state_dim,
                got: states.len(),
            });
        }
        if let Some(u) = &inputs {
            if u.len() != t.len() * input_dim {
                return Err(DataError::LengthMismatch {
                    what: "input array",
                    expected: t.len() * input_dim,
                    got: u.len(),
                });
            }
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DataError::NotIncreasing);
        }
        let finite = t.iter().all(|v| v.is_finite())
            && states.iter().all(|v| v.is_finite())
            && inputs.iter().flat_map(|u| u.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(DataError::NonFinite);
        }
        Ok(Trajectory { t, states, state_dim, inputs, input_dim })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty grids
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn inputs(&self) -> Option<&[f64]> {
        self.inputs.as_deref()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn input(&self, i: usize) -> Option<&[f64]> {
        self.inputs
            .as_ref()
            .map(|u| &u[i * self.input_dim..(i + 1) * self.input_dim])
    }

    /// The common spacing if the grid is uniform to relative `tol`, else
    /// `None`.  Single-interval grids are trivially uniform.
    pub fn uniform_dt(&self, tol: f64) -> Option<f64> {
        if self.t.len() < 2 {
            return None;
        }
        let dt = (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64;
        for w in self.t.windows(2) {
            if math::abs(w[1] - w[0] - dt) > tol * dt {
                return None;
            }
        }
        Some(dt)
    }

    /// View the recorded inputs as an interpolating signal.
    pub fn input_signal(&self, interp: Interp) -> Option<InputSignal> {
        self.inputs.as_ref().map(|u| {
            InputSignal::new(self.t.clone(), u.clone(), self.input_dim, interp)
                .expect("trajectory invariants imply a valid signal")
        })
    }
}

fn check_consistent(trajs: &[Trajectory]) -> Result<(usize, usize), DataError> {
    let first = trajs.first().ok_or(DataError::Empty)?;
    let (n, m) = (first.state_dim, first.input_dim);
    if trajs.iter().any(|tr| tr.state_dim != n || tr.input_dim != m) {
        return Err(DataError::MixedDims);
    }
    Ok((n, m))
}

// ── Derivative training pairs ───────────────────────────────────────────

/// Flattened (state, input, state-derivative) triples for derivative-matching
/// regression.  `x` and `dxdt` are `rows × state_dim`; `u` is
/// `rows × input_dim` (empty when there are no inputs).
#[derive(Debug, Clone, Default)]
pub struct DerivativeSet {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub dxdt: Vec<f64>,
    pub rows: usize,
    pub state_dim: usize,
    pub input_dim: usize,
}

/// Forward-difference derivative targets: each adjacent sample pair
/// `(xᵢ, xᵢ₊₁)` yields the pair `(xᵢ, (xᵢ₊₁ − xᵢ)/Δt)` tagged with `uᵢ`.
pub fn euler_pairs(trajs: &[Trajectory]) -> Result<DerivativeSet, DataError> {
    let (n, m) = check_consistent(trajs)?;
    let mut set = DerivativeSet {
        x: Vec::new(),
        u: Vec::new(),
        dxdt: Vec::new(),
        rows: 0,
        state_dim: n,
        input_dim: m,
    };
    for tr in trajs {
        for i in 0..tr.len().saturating_sub(1) {
            let dt = tr.t[i + 1] - tr.t[i];
            let xi = tr.state(i);
            let xn = tr.state(i + 1);
            set.x.extend_from_slice(xi);
            for j in 0..n {
                set.dxdt.push((xn[j] - xi[j]) / dt);
            }
            if let Some(ui) = tr.input(i) {
                set.u.extend_from_slice(ui);
            }
            set.rows += 1;
        }
    }
    if set.rows == 0 {
        return Err(DataError::TooShort { needed: 2, got: 1 });
    }
    Ok(set)
}

// ── Spinning rigid body benchmark ───────────────────────────────────────

/// Euler's equations for a rigid body with principal inertia `inertia`
/// and linear friction `mu`: `I ω̇ = −ω × (I ω) − μ ω`.
pub fn rigid_body_rhs(inertia: &[f64; 3], mu: f64, omega: &[f64], out: &mut [f64]) {
    let (i1, i2, i3) = (inertia[0], inertia[1], inertia[2]);
    let (w1, w2, w3) = (omega[0], omega[1], omega[2]);
    out[0] = (-(w2 * i3 * w3 - w3 * i2 * w2) - mu * w1) / i1;
    out[1] = (-(w3 * i1 * w1 - w1 * i3 * w3) - mu * w2) / i2;
    out[2] = (-(w1 * i2 * w2 - w2 * i1 * w1) - mu * w3) / i3;
}

/// Rotational kinetic energy `½ Σ Iᵢ ωᵢ²`.
pub fn rigid_energy(inertia: &[f64; 3], omega: &[f64]) -> f64 {
    0.5 * (inertia[0] * omega[0] * omega[0]
        + inertia[1] * omega[1] * omega[1]
        + inertia[2] * omega[2] * omega[2])
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpinningBodyConfig {
    #[cfg_attr(feature = "serde", serde(default = "default_n_traj"))]
    pub n_traj: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_t_end"))]
    pub t_end: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_dt"))]
    pub dt: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_mu"))]
    pub mu: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_inertia"))]
    pub inertia: [f64; 3],
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
    /// Reference-solution tolerances (much tighter than anything trained).
    #[cfg_attr(feature = "serde", serde(default = "default_gen_rtol"))]
    pub rtol: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_gen_atol"))]
    pub atol: f64,
}

fn default_n_traj() -> usize {
    10
}
fn default_t_end() -> f64 {
    50.0
}
fn default_dt() -> f64 {
    0.1
}
fn default_mu() -> f64 {
    0.01
}
fn default_inertia() -> [f64; 3] {
    [1.0, 2.0, 3.0]
}
fn default_gen_rtol() -> f64 {
    1e-10
}
fn default_gen_atol() -> f64 {
    1e-12
}

impl Default for SpinningBodyConfig {
    fn default() -> Self {
        SpinningBodyConfig {
            n_traj: default_n_traj(),
            t_end: default_t_end(),
            dt: default_dt(),
            mu: default_mu(),
            inertia: default_inertia(),
            seed: 0,
            rtol: default_gen_rtol(),
            atol: default_gen_atol(),
        }
    }
}

/// Sample initial rates uniformly from `[0, 1]³` and integrate each
/// trajectory at reference tolerances onto a uniform grid.
pub fn gen_spinning_body(cfg: &SpinningBodyConfig) -> Result<Vec<Trajectory>, OdeError> {
    if cfg.n_traj == 0 {
        return Err(OdeError::Grid("need at least one trajectory"));
    }
    if !(cfg.dt > 0.0) || !(cfg.t_end > 0.0) {
        return Err(OdeError::Grid("dt and t_end must be positive"));
    }
    let steps = math::round(cfg.t_end / cfg.dt) as usize;
    if steps == 0 {
        return Err(OdeError::Grid("t_end shorter than dt"));
    }
    let t_eval: Vec<f64> = (0..=steps).map(|i| i as f64 * cfg.dt).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ode_cfg = IntegrationConfig {
        rtol: cfg.rtol,
        atol: cfg.atol,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(cfg.n_traj);
    for _ in 0..cfg.n_traj {
        let x0: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut f = |_t: f64, x: &[f64], dx: &mut [f64]| {
            rigid_body_rhs(&cfg.inertia, cfg.mu, x, dx);
        };
        let sol = ode::integrate_tsit5(&mut f, &x0, &t_eval, &ode_cfg)?;
        let mut states = Vec::with_capacity(t_eval.len() * 3);
        for row in &sol.states {
            states.extend_from_slice(row);
        }
        out.push(
            Trajectory::new(t_eval.clone(), states, 3)
                .expect("generated grid is valid by construction"),
        );
    }
    Ok(out)
}

// ── Normalization ───────────────────────────────────────────────────────

/// Per-channel affine normalization fitted on a dataset: shift by the mean
/// (or a supplied equilibrium), divide by the sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalizer {
    pub state_shift: Vec<f64>,
    pub state_scale: Vec<f64>,
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
}

fn column_stats(data: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = data.len() / dim;
    let mut mean = vec![0.0; dim];
    for r in 0..rows {
        for c in 0..dim {
            mean[c] += data[r * dim + c];
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }
    let mut var = vec![0.0; dim];
    for r in 0..rows {
        for c in 0..dim {
            let d = data[r * dim + c] - mean[c];
            var[c] += d * d;
        }
    }
    let denom = (rows - 1).max(1) as f64;
    let std = var.iter().map(|v| math::sqrt(v / denom)).collect();
    (mean, std)
}

fn checked_scale(std: Vec<f64>, what: &'static str) -> Result<Vec<f64>, DataError> {
    if let Some(channel) = std.iter().position(|s| *s < 1e-12) {
        return Err(DataError::ZeroVariance { what, channel });
    }
    Ok(std)
}

impl Normalizer {
    pub fn identity(state_dim: usize, input_dim: usize) -> Self {
        Normalizer {
            state_shift: vec![0.0; state_dim],
            state_scale: vec![1.0; state_dim],
            input_shift: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
        }
    }

    /// Fit channelwise shifts and scales on training data so every channel
    /// has unit sample variance.  States are shifted by `equilibrium` when
    /// one is given (so the equilibrium maps to the origin), otherwise by
    /// the channel mean; inputs are always mean-shifted.  A channel with no
    /// spread is an error — it cannot be scaled to unit variance.
    pub fn fit(trajs: &[Trajectory], equilibrium: Option<&[f64]>) -> Result<Self, DataError> {
        let (n, m) = check_consistent(trajs)?;
        if let Some(eq) = equilibrium {
            if eq.len() != n {
                return Err(DataError::LengthMismatch {
                    what: "equilibrium",
                    expected: n,
                    got: eq.len(),
                });
            }
        }
        let total: usize = trajs.iter().map(|tr| tr.len()).sum();
        if total < 2 {
            return Err(DataError::TooShort { needed: 2, got: total });
        }
        let mut all_x = Vec::with_capacity(total * n);
        let mut all_u = Vec::with_capacity(total * m);
        for tr in trajs {
            all_x.extend_from_slice(tr.states());
            if let Some(u) = tr.inputs() {
                all_u.extend_from_slice(u);
            }
        }
        let (state_mean, state_std) = column_stats(&all_x, n);
        let state_shift = match equilibrium {
            Some(eq) => eq.to_vec(),
            None => state_mean,
        };
        let state_scale = checked_scale(state_std, "state")?;
        let (input_shift, input_scale) = if m > 0 && !all_u.is_empty() {
            let (mean, std) = column_stats(&all_u, m);
            (mean, checked_scale(std, "input")?)
        } else {
            (vec![0.0; m], vec![1.0; m])
        };
        Ok(Normalizer { state_shift, state_scale, input_shift, input_scale })
    }

    pub fn state_dim(&self) -> usize {
        self.state_shift.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_shift.len()
    }

    pub fn normalize_state(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = (*v - self.state_shift[i]) / self.state_scale[i];
        }
    }

    pub fn denormalize_state(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = *v * self.state_scale[i] + self.state_shift[i];
        }
    }

    pub fn normalize_input(&self, u: &mut [f64]) {
        for (i, v) in u.iter_mut().enumerate() {
            *v = (*v - self.input_shift[i]) / self.input_scale[i];
        }
    }

    pub fn denormalize_input(&self, u: &mut [f64]) {
        for (i, v) in u.iter_mut().enumerate() {
            *v = *v * self.input_scale[i] + self.input_shift[i];
        }
    }

    /// Time derivatives transform by the scale only: d/dt of
    /// `(x − μ)/σ` is `ẋ/σ`.
    pub fn normalize_deriv(&self, dx: &mut [f64]) {
        for (i, v) in dx.iter_mut().enumerate() {
            *v /= self.state_scale[i];
        }
    }

    pub fn denormalize_deriv(&self, dx: &mut [f64]) {
        for (i, v) in dx.iter_mut().enumerate() {
            *v *= self.state_scale[i];
        }
    }

    /// Normalize every state (and input) row of a trajectory in place.
    pub fn apply(&self, tr: &Trajectory) -> Result<Trajectory, DataError> {
        self.transform(tr, false)
    }

    /// Undo [`Normalizer::apply`].
    pub fn invert(&self, tr: &Trajectory) -> Result<Trajectory, DataError> {
        self.transform(tr, true)
    }

    fn transform(&self, tr: &Trajectory, inverse: bool) -> Result<Trajectory, DataError> {
        if tr.state_dim() != self.state_dim() {
            return Err(DataError::LengthMismatch {
                what: "state dimension",
                expected: self.state_dim(),
                got: tr.state_dim(),
            });
        }
        if tr.input_dim() != 0 && tr.input_dim() != self.input_dim() {
            return Err(DataError::LengthMismatch {
                what: "input dimension",
                expected: self.input_dim(),
                got: tr.input_dim(),
            });
        }
        let mut out = tr.clone();
        let n = out.state_dim;
        for i in 0..out.len() {
            let row = &mut out.states[i * n..(i + 1) * n];
            if inverse {
                self.denormalize_state(row);
            } else {
                self.normalize_state(row);
            }
        }
        let m = out.input_dim;
        if let Some(u) = &mut out.inputs {
            for i in 0..tr.len() {
                let row = &mut u[i * m..(i + 1) * m];
                if inverse {
                    self.denormalize_input(row);
                } else {
                    self.normalize_input(row);
                }
            }
        }
        Ok(out)
    }

    /// Normalize a derivative-pair set in place.
    pub fn apply_derivative_set(&self, set: &mut DerivativeSet) {
        let n = set.state_dim;
        for i in 0..set.rows {
            self.normalize_state(&mut set.x[i * n..(i + 1) * n]);
            self.normalize_deriv(&mut set.dxdt[i * n..(i + 1) * n]);
        }
        let m = set.input_dim;
        if m > 0 && !set.u.is_empty() {
            for i in 0..set.rows {
                self.normalize_input(&mut set.u[i * m..(i + 1) * m]);
            }
        }
    }
}

// ── Measurement noise ───────────────────────────────────────────────────

/// Add i.i.d. Gaussian noise to every state sample.  The per-channel
/// standard deviation is `percent/100` of that channel's sample standard
/// deviation across the whole dataset, mimicking sensor noise relative to
/// signal magnitude.  Times and inputs stay clean.
pub fn add_noise(trajs: &mut [Trajectory], percent: f64, seed: u64) -> Result<(), DataError> {
    if percent < 0.0 {
        return Err(DataError::NonFinite);
    }
    if percent == 0.0 || trajs.is_empty() {
        return Ok(());
    }
    let (n, _) = check_consistent(trajs)?;
    let mut all = Vec::new();
    for tr in trajs.iter() {
        all.extend_from_slice(tr.states());
    }
    let (_, std) = column_stats(&all, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for tr in trajs.iter_mut() {
        for i in 0..tr.len() {
            for c in 0..n {
                let sigma = percent / 100.0 * std[c];
                let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
                tr.states[i * n + c] += normal.sample(&mut rng);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_traj() -> Trajectory {
        Trajectory::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 2.0, 4.0, 4.0, 8.0], 2).unwrap()
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::new(vec![], vec![], 2).is_err());
        assert!(Trajectory::new(vec![0.0, 1.0], vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(Trajectory::new(vec![0.0, 0.0], vec![1.0, 2.0], 1).is_err());
        assert!(Trajectory::new(vec![0.0, 1.0], vec![1.0, f64::NAN], 1).is_err());
        assert!(Trajectory::new(vec![0.0], vec![1.0], 0).is_err());
        let tr = toy_traj();
        assert_eq!(tr.len(), 3);
        assert_eq!(tr.state(1), &[2.0, 4.0]);
        assert_eq!(tr.input(1), None);
    }

    #[test]
    fn trajectory_with_inputs_and_signal() {
        let tr = Trajectory::with_inputs(
            vec![0.0, 1.0],
            vec![1.0, 2.0],
            1,
            vec![5.0, 7.0],
            1,
        )
        .unwrap();
        assert_eq!(tr.input(0), Some(&[5.0][..]));
        let sig = tr.input_signal(Interp::Linear).unwrap();
        let mut u = [0.0];
        sig.eval(0.5, &mut u);
        assert_eq!(u, [6.0]);
        assert!(toy_traj().input_signal(Interp::Linear).is_none());
        assert!(Trajectory::with_inputs(vec![0.0], vec![1.0], 1, vec![1.0, 2.0], 1).is_err());
    }

    #[test]
    fn uniform_grid_detection() {
        let tr = Trajectory::new(vec![0.0, 0.1, 0.2, 0.3], vec![0.0; 4], 1).unwrap();
        let dt = tr.uniform_dt(1e-9).unwrap();
        assert!((dt - 0.1).abs() < 1e-15);
        let tr = Trajectory::new(vec![0.0, 0.1, 0.25], vec![0.0; 3], 1).unwrap();
        assert_eq!(tr.uniform_dt(1e-9), None);
        let tr = Trajectory::new(vec![0.0], vec![0.0], 1).unwrap();
        assert_eq!(tr.uniform_dt(1e-9), None);
    }

    #[test]
    fn rigid_body_hand_values() {
        // Frictionless, I = diag(1,2,3), ω = (0,1,1):
        // ω×(Iω) = (1·3·1 − 1·2·1, 0, 0) = (1,0,0) → ω̇ = (−1, 0, 0).
        let mut out = [0.0; 3];
        rigid_body_rhs(&[1.0, 2.0, 3.0], 0.0, &[0.0, 1.0, 1.0], &mut out);
        assert_eq!(out, [-1.0, 0.0, 0.0]);
        // Friction adds −μω/I.
        rigid_body_rhs(&[1.0, 2.0, 3.0], 0.01, &[0.0, 1.0, 1.0], &mut out);
        assert_eq!(out, [-1.0, -0.005, -0.01 / 3.0]);
        assert_eq!(rigid_energy(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), 3.0);
    }

    #[test]
    fn generated_data_dissipates_energy() {
        let cfg = SpinningBodyConfig {
            n_traj: 2,
            t_end: 5.0,
            seed: 42,
            ..Default::default()
        };
        let trajs = gen_spinning_body(&cfg).unwrap();
        assert_eq!(trajs.len(), 2);
        for tr in &trajs {
            assert_eq!(tr.len(), 51);
            assert_eq!(tr.state_dim(), 3);
            let mut prev = f64::INFINITY;
            for i in 0..tr.len() {
                let e = rigid_energy(&cfg.inertia, tr.state(i));
                assert!(e <= prev + 1e-9, "energy must not grow: {e} after {prev}");
                prev = e;
            }
            // μ > 0 strictly dissipates over 5 s.
            let e0 = rigid_energy(&cfg.inertia, tr.state(0));
            let e1 = rigid_energy(&cfg.inertia, tr.state(tr.len() - 1));
            assert!(e1 < e0);
        }
        // Determinism.
        let again = gen_spinning_body(&cfg).unwrap();
        assert_eq!(trajs[0].states(), again[0].states());
        // Initial conditions land in the unit box.
        assert!(trajs[0].state(0).iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn euler_pairs_hand_values() {
        let set = euler_pairs(&[toy_traj()]).unwrap();
        assert_eq!(set.rows, 2);
        assert_eq!(set.x, vec![1.0, 2.0, 2.0, 4.0]);
        assert_eq!(set.dxdt, vec![2.0, 4.0, 4.0, 8.0]);
        assert!(set.u.is_empty());
        let single = Trajectory::new(vec![0.0], vec![1.0, 1.0], 2).unwrap();
        assert!(euler_pairs(&[single]).is_err());
    }

    #[test]
    fn normalizer_round_trip_and_stats() {
        let cfg = SpinningBodyConfig { n_traj: 3, t_end: 3.0, seed: 7, ..Default::default() };
        let trajs = gen_spinning_body(&cfg).unwrap();
        let norm = Normalizer::fit(&trajs, None).unwrap();
        let fwd: Vec<Trajectory> = trajs.iter().map(|tr| norm.apply(tr).unwrap()).collect();

        // Normalized columns have mean ~0 and sample std ~1.
        let mut all = Vec::new();
        for tr in &fwd {
            all.extend_from_slice(tr.states());
        }
        let (mean, std) = column_stats(&all, 3);
        for c in 0..3 {
            assert!(mean[c].abs() < 1e-12, "mean[{c}] = {}", mean[c]);
            assert!((std[c] - 1.0).abs() < 1e-12, "std[{c}] = {}", std[c]);
        }

        // Inverse restores originals to rounding error.
        for (orig, f) in trajs.iter().zip(&fwd) {
            let back = norm.invert(f).unwrap();
            for (a, b) in orig.states().iter().zip(back.states()) {
                assert!((a - b).abs() < 1e-12);
            }
        }

        // Derivative scaling matches the chain rule on a known line.
        let mut dx = vec![2.0, 2.0, 2.0];
        let mut expected = dx.clone();
        for (e, s) in expected.iter_mut().zip(&norm.state_scale) {
            *e /= s;
        }
        norm.normalize_deriv(&mut dx);
        assert_eq!(dx, expected);
    }

    #[test]
    fn normalizer_rejects_constant_channels() {
        let tr = Trajectory::new(vec![0.0, 1.0, 2.0], vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0], 2)
            .unwrap();
        assert!(matches!(
            Normalizer::fit(core::slice::from_ref(&tr), None),
            Err(DataError::ZeroVariance { what: "state", channel: 0 })
        ));
    }

    #[test]
    fn normalizer_anchors_a_given_equilibrium_at_zero() {
        let tr = Trajectory::new(vec![0.0, 1.0, 2.0], vec![1.0, 4.0, 2.0, 5.0, 3.0, 9.0], 2)
            .unwrap();
        let eq = [2.0, 5.0];
        let norm = Normalizer::fit(core::slice::from_ref(&tr), Some(&eq)).unwrap();
        let mut x = eq;
        norm.normalize_state(&mut x);
        assert_eq!(x, [0.0, 0.0]);
        // Scale is unchanged by the shift choice: still unit sample variance.
        let f = norm.apply(&tr).unwrap();
        let (_, std) = column_stats(f.states(), 2);
        for s in std {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            Normalizer::fit(core::slice::from_ref(&tr), Some(&[1.0])),
            Err(DataError::LengthMismatch { what: "equilibrium", .. })
        ));
    }

    #[test]
    fn noise_scales_with_percent_and_seed() {
        let cfg = SpinningBodyConfig { n_traj: 4, t_end: 10.0, seed: 3, ..Default::default() };
        let clean = gen_spinning_body(&cfg).unwrap();
        let (_, clean_std) = {
            let mut all = Vec::new();
            for tr in &clean {
                all.extend_from_slice(tr.states());
            }
            column_stats(&all, 3)
        };

        let mut noisy = clean.clone();
        add_noise(&mut noisy, 25.0, 11).unwrap();
        for c in 0..3 {
            let diffs: Vec<f64> = clean
                .iter()
                .zip(&noisy)
                .flat_map(|(a, b)| {
                    a.states()
                        .iter()
                        .skip(c)
                        .step_by(3)
                        .zip(b.states().iter().skip(c).step_by(3))
                        .map(|(x, y)| y - x)
                })
                .collect();
            let (m, s) = column_stats(&diffs, 1);
            assert!(m[0].abs() < 0.05 * clean_std[c]);
            let want = 0.25 * clean_std[c];
            assert!(
                (s[0] - want).abs() < 0.2 * want,
                "channel {c}: noise std {} vs target {want}",
                s[0]
            );
        }

        // Same seed reproduces, different seed does not, zero percent no-ops.
        let mut again = clean.clone();
        add_noise(&mut again, 25.0, 11).unwrap();
        assert_eq!(noisy[0].states(), again[0].states());
        let mut other = clean.clone();
        add_noise(&mut other, 25.0, 12).unwrap();
        assert_ne!(noisy[0].states(), other[0].states());
        let mut zero = clean.clone();
        add_noise(&mut zero, 0.0, 11).unwrap();
        assert_eq!(zero[0].states(), clean[0].states());
    }

    #[test]
    fn mixed_dimension_datasets_are_rejected() {
        let a = Trajectory::new(vec![0.0, 1.0], vec![1.0, 2.0], 1).unwrap();
        let b = toy_traj();
        assert!(matches!(Normalizer::fit(&[a.clone(), b], None), Err(DataError::MixedDims)));
        assert!(Normalizer::fit(&[], None).is_err());
        let lone = Trajectory::new(vec![0.0], vec![1.0], 1).unwrap();
        assert!(matches!(
            Normalizer::fit(&[lone], None),
            Err(DataError::TooShort { .. })
        ));
    }
}
