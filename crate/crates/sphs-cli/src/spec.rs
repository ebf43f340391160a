//! JSON run specs — one struct per subcommand.  Every run is a pure
//! function of (spec, input files): all randomness is seeded, every knob is
//! in the file, and unknown keys are rejected so typos fail loudly instead
//! of silently using defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sphs_core::data::SpinningBodyConfig;
use sphs_core::ode::{IntegrationConfig, Interp};
use sphs_core::phs::ModelSpec;
use sphs_core::train::TrainConfig;
use sphs_core::verify::{ProbeConfig, VerifyConfig};

use crate::error::CmdError;

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

pub fn load_spec<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CmdError> {
    let text = std::fs::read_to_string(path).map_err(|e| CmdError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CmdError::Config(format!("{}: {e}", path.display())))
}

/// Command-line overrides that beat the values in the spec file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    /// Spinning-body friction override (`generate` only).
    pub mu: Option<f64>,
}

// ── generate ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    #[default]
    SpinningBody,
    ForcedLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    #[default]
    Square,
    Sine,
    None,
}

/// Deterministic scalar excitation shared by every input channel scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputWave {
    #[serde(default)]
    pub kind: WaveKind,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
}

fn default_amplitude() -> f64 {
    1.0
}
fn default_period() -> f64 {
    5.0
}

impl Default for InputWave {
    fn default() -> Self {
        InputWave { kind: WaveKind::Square, amplitude: default_amplitude(), period: default_period() }
    }
}

impl InputWave {
    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            WaveKind::None => 0.0,
            WaveKind::Square => {
                let phase = t.rem_euclid(self.period) / self.period;
                if phase < 0.5 {
                    self.amplitude
                } else {
                    -self.amplitude
                }
            }
            WaveKind::Sine => {
                self.amplitude * (2.0 * core::f64::consts::PI * t / self.period).sin()
            }
        }
    }
}

/// Ground-truth linear system `ẋ = (J − R) Q x + G·u(t)` with quadratic
/// energy `½ xᵀQx` — the forced test bed with a known closed structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSystem {
    #[serde(default = "default_lin_dim")]
    pub state_dim: usize,
    #[serde(default = "default_lin_inputs")]
    pub input_dim: usize,
    /// Row-major n×n matrices; defaults are the planar rotation with light
    /// uniform damping and identity energy.
    #[serde(default)]
    pub j: Option<Vec<f64>>,
    #[serde(default)]
    pub r: Option<Vec<f64>>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    /// Row-major n×m port matrix.
    #[serde(default)]
    pub g: Option<Vec<f64>>,
    #[serde(default = "default_lin_x0")]
    pub x0: Vec<Vec<f64>>,
    #[serde(default = "default_lin_t_end")]
    pub t_end: f64,
    #[serde(default = "default_lin_dt")]
    pub dt: f64,
    #[serde(default)]
    pub input: InputWave,
    /// Reference-solution tolerances.
    #[serde(default = "default_gen_rtol")]
    pub rtol: f64,
    #[serde(default = "default_gen_atol")]
    pub atol: f64,
}

fn default_lin_dim() -> usize {
    2
}
fn default_lin_inputs() -> usize {
    1
}
fn default_lin_x0() -> Vec<Vec<f64>> {
    vec![vec![0.5, -0.3]]
}
fn default_lin_t_end() -> f64 {
    40.0
}
fn default_lin_dt() -> f64 {
    0.1
}
fn default_gen_rtol() -> f64 {
    1e-10
}
fn default_gen_atol() -> f64 {
    1e-12
}

impl Default for LinearSystem {
    fn default() -> Self {
        LinearSystem {
            state_dim: default_lin_dim(),
            input_dim: default_lin_inputs(),
            j: None,
            r: None,
            q: None,
            g: None,
            x0: default_lin_x0(),
            t_end: default_lin_t_end(),
            dt: default_lin_dt(),
            input: InputWave::default(),
            rtol: default_gen_rtol(),
            atol: default_gen_atol(),
        }
    }
}

impl LinearSystem {
    fn matrix(
        given: &Option<Vec<f64>>,
        rows: usize,
        cols: usize,
        name: &str,
        fallback: impl FnOnce() -> Vec<f64>,
    ) -> Result<Vec<f64>, CmdError> {
        match given {
            Some(m) if m.len() == rows * cols => Ok(m.clone()),
            Some(m) => Err(CmdError::Config(format!(
                "linear system matrix {name} has {} entries, expected {rows}x{cols}",
                m.len()
            ))),
            None => Ok(fallback()),
        }
    }

    /// Resolve defaults and validate shapes into dense row-major matrices.
    pub fn matrices(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>), CmdError> {
        let n = self.state_dim;
        let m = self.input_dim;
        if n == 0 {
            return Err(CmdError::Config("linear system needs state_dim >= 1".into()));
        }
        let j = Self::matrix(&self.j, n, n, "j", || {
            let mut j = vec![0.0; n * n];
            if n >= 2 {
                j[1] = -1.0;
                j[n] = 1.0;
            }
            j
        })?;
        let r = Self::matrix(&self.r, n, n, "r", || {
            let mut r = vec![0.0; n * n];
            for i in 0..n {
                r[i * n + i] = 0.2;
            }
            r
        })?;
        let q = Self::matrix(&self.q, n, n, "q", || {
            let mut q = vec![0.0; n * n];
            for i in 0..n {
                q[i * n + i] = 1.0;
            }
            q
        })?;
        let g = Self::matrix(&self.g, n, m, "g", || {
            let mut g = vec![0.0; n * m];
            if n * m > 0 {
                g[0] = 0.25;
            }
            if n >= 2 && m >= 1 {
                g[m] = 0.15;
            }
            g
        })?;
        for ic in &self.x0 {
            if ic.len() != n {
                return Err(CmdError::Config(format!(
                    "linear system initial condition has {} entries, expected {n}",
                    ic.len()
                )));
            }
        }
        if self.x0.is_empty() {
            return Err(CmdError::Config("linear system needs at least one x0".into()));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(CmdError::Config("linear system needs positive dt and t_end".into()));
        }
        Ok((j, r, q, g))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    #[serde(default)]
    pub system: SystemKind,
    #[serde(default)]
    pub body: SpinningBodyConfig,
    #[serde(default)]
    pub linear: LinearSystem,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl GenerateSpec {
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(out) = &ov.out {
            self.out = out.clone();
        }
        if let Some(seed) = ov.seed {
            self.body.seed = seed;
        }
        if let Some(mu) = ov.mu {
            self.body.mu = mu;
        }
    }
}

// ── train ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    Derivative,
    Trajectory,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Trajectory CSVs (`t,x1..xn[,u1..um]`).
    #[serde(default)]
    pub trajectories: Vec<PathBuf>,
    /// Derivative-pair CSV (`x1..xn[,u1..um],dx1..dxn`); derivative regime
    /// falls back to forward differences of the trajectories when absent.
    #[serde(default)]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub regime: Regime,
    #[serde(default)]
    pub data: DataPaths,
    /// Fit channelwise normalization on the training data and train in
    /// normalized coordinates (stored in the checkpoint).
    #[serde(default)]
    pub normalize: bool,
    /// Observed-state equilibrium the normalizer shifts to zero.
    #[serde(default)]
    pub equilibrium: Option<Vec<f64>>,
    /// Gaussian measurement noise injected into training states, as a
    /// percentage of each channel's sample standard deviation.
    #[serde(default)]
    pub noise_percent: f64,
    #[serde(default)]
    pub noise_seed: u64,
    /// Independently seeded models trained on the same data (for
    /// interquartile statistics); > 1 writes per-instance subdirectories.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Model initialization seed; instance k uses `seed + k`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_instances() -> usize {
    1
}

impl TrainSpec {
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(out) = &ov.out {
            self.out = out.clone();
        }
        if let Some(seed) = ov.seed {
            self.seed = seed;
        }
        if let Some(steps) = ov.steps {
            self.train.steps = steps;
        }
    }
}

// ── predict ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpKind {
    Linear,
    Hold,
}

impl From<InterpKind> for Interp {
    fn from(k: InterpKind) -> Interp {
        match k {
            InterpKind::Linear => Interp::Linear,
            InterpKind::Hold => Interp::Hold,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSpec {
    pub checkpoint: PathBuf,
    /// Initial observed state, inline...
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// ...or taken from the first row of this trajectory CSV.
    #[serde(default)]
    pub ic_from: Option<PathBuf>,
    /// Sample times copied from this trajectory CSV...
    #[serde(default)]
    pub grid_from: Option<PathBuf>,
    /// ...or a fresh uniform grid.
    #[serde(default = "default_predict_t_end")]
    pub t_end: f64,
    #[serde(default = "default_predict_dt")]
    pub dt: f64,
    /// Input signal CSV (`t,u1..um`); required when the model has ports and
    /// no trajectory file supplies inputs.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "default_interp")]
    pub interp: InterpKind,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_predict_t_end() -> f64 {
    50.0
}
fn default_predict_dt() -> f64 {
    0.1
}
fn default_interp() -> InterpKind {
    InterpKind::Linear
}

impl PredictSpec {
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(out) = &ov.out {
            self.out = out.clone();
        }
    }
}

// ── eval ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    /// Ground-truth trajectory CSV.
    pub truth: PathBuf,
    /// One or more prediction CSVs on the same time grid.
    pub predictions: Vec<PathBuf>,
    /// Principal moments of inertia: emit a spinning-body kinetic-energy
    /// table alongside the state metrics.
    #[serde(default)]
    pub inertia: Option<[f64; 3]>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl EvalSpec {
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(out) = &ov.out {
            self.out = out.clone();
        }
    }
}

// ── verify ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Also launch far-out trajectories and check energy descent.
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    /// Also check the pointwise power-balance identity.
    #[serde(default)]
    pub energy_audit: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl VerifySpec {
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(out) = &ov.out {
            self.out = out.clone();
        }
        if let Some(seed) = ov.seed {
            self.verify.seed = seed;
        }
    }
}

// ── decompose ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeSpec {
    pub checkpoint: PathBuf,
    /// The two state indices spanning the plotted plane.
    #[serde(default = "default_dims")]
    pub dims: [usize; 2],
    /// Axis range applied to both plotted dims.
    #[serde(default = "default_range")]
    pub range: [f64; 2],
    /// Grid points per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Values for the remaining dims; defaults to the model equilibrium.
    #[serde(default)]
    pub anchor: Option<Vec<f64>>,
    /// Constant input held while sampling; defaults to zero.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_dims() -> [usize; 2] {
    [0, 1]
}
fn default_range() -> [f64; 2] {
    [-2.0, 2.0]
}
fn default_grid() -> usize {
    21
}

impl DecomposeSpec {
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(out) = &ov.out {
            self.out = out.clone();
        }
    }
}

// ── pod ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodFitSpec {
    /// Snapshot trajectory CSV: each row's state block is one field sample.
    pub snapshots: PathBuf,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    /// Field whose latent image becomes the origin.
    #[serde(default)]
    pub equilibrium: Option<Vec<f64>>,
}

fn default_modes() -> usize {
    40
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodSpec {
    /// Fit a new basis...
    #[serde(default)]
    pub fit: Option<PodFitSpec>,
    /// ...or load a saved one.
    #[serde(default)]
    pub basis: Option<PathBuf>,
    /// Field trajectories to project into latent coordinates.
    #[serde(default)]
    pub encode: Vec<PathBuf>,
    /// Latent trajectories to reconstruct into fields.
    #[serde(default)]
    pub decode: Vec<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl PodSpec {
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(out) = &ov.out {
            self.out = out.clone();
        }
    }
}
