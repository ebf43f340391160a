//! The model zoo: dynamical systems of the form
//!
//! ```text
//! ẋ = (J(x) − R(x)) ∇H(x) + G(x) u
//! ```
//!
//! with `J` skew-symmetric and `R` symmetric positive (semi-)definite *by
//! construction*, so the learned dynamics can never pump energy out of
//! nothing: along solutions, `Ḣ = −∇Hᵀ R ∇H + ∇Hᵀ G u`.
//!
//! Five variants share this interface:
//!
//! * `sphnn` — convex Hamiltonian (FICNN) normalized to have its global
//!   minimum pinned at a *fixed* equilibrium `x*`; the star of the show.
//! * `sphnn_lm` — same, but `x*` is a trainable parameter (useful when the
//!   equilibrium is unknown).
//! * `bphnn` — `H(x) = Σᵢ g(x)ᵢ² + β‖x‖²`: positive and radially unbounded,
//!   guaranteeing bounded trajectories without convexity.
//! * `phnn` — plain MLP Hamiltonian; port-Hamiltonian structure without any
//!   stability guarantee.
//! * `node` — unstructured baseline `ẋ = f(x, u)` with a plain MLP.
//!
//! Every variant compiles into **one** autodiff [`Graph`] whose roots cover
//! `H`, `∇H`, the three flow components, their sum (the right-hand side),
//! and the supply rate.  `∇H` is emitted *symbolically* (see
//! [`crate::nets`]), so a single reverse sweep over the tape yields exact
//! parameter gradients of losses that involve `∇H` — including the mixed
//! second derivatives that make Hamiltonian learning work.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{EvalError, Graph, NodeId, ParamSeg, ParamVector, Workspace};
use crate::linalg;
use crate::nets::{Ffnn, FfnnConfig, Ficnn, FicnnConfig};

// ── Configuration ───────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelKind {
    Sphnn,
    SphnnLm,
    Bphnn,
    Phnn,
    Node,
}

/// How a matrix-valued head depends on the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MatrixMode {
    /// Learnable but state-independent.
    Constant,
    /// Produced by a small MLP of the state.
    StateDependent,
    /// The canonical symplectic form `[[0, −I], [I, 0]]` (J only, even n).
    FixedSymplectic,
    /// Identically zero (head absent).
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Definiteness {
    /// `R ≻ 0` everywhere: Cholesky diagonal passes through softplus.
    Strict,
    /// `R ⪰ 0`: raw diagonal, zeros allowed.
    Semi,
}

/// Full description of a model.  `build` consumes this plus a seed.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub state_dim: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub input_dim: usize,
    /// Hidden widths shared by the Hamiltonian net and all matrix heads.
    #[cfg_attr(feature = "serde", serde(default = "default_hidden"))]
    pub hidden: Vec<usize>,
    #[cfg_attr(feature = "serde", serde(default = "default_j_mode"))]
    pub j_mode: MatrixMode,
    #[cfg_attr(feature = "serde", serde(default = "default_r_mode"))]
    pub r_mode: MatrixMode,
    #[cfg_attr(feature = "serde", serde(default = "default_definiteness"))]
    pub r_definiteness: Definiteness,
    #[cfg_attr(feature = "serde", serde(default = "default_g_mode"))]
    pub g_mode: MatrixMode,
    /// Fixed equilibrium for `sphnn` (`None` → origin).  Ignored by other
    /// kinds; `sphnn_lm` learns its own.
    #[cfg_attr(feature = "serde", serde(default))]
    pub xstar: Option<Vec<f64>>,
    /// Optional quadratic floor `ε‖x − x*‖²` added to a convex Hamiltonian.
    /// Zero relies on the post-hoc Hessian check instead.
    #[cfg_attr(feature = "serde", serde(default))]
    pub epsilon: f64,
    /// Radial coefficient of the `bphnn` energy.
    #[cfg_attr(feature = "serde", serde(default = "default_beta"))]
    pub beta: f64,
    /// Output count of the squared `bphnn` net (`None` → `state_dim`).
    #[cfg_attr(feature = "serde", serde(default))]
    pub g_outputs: Option<usize>,
    /// Half-width of the uniform init box for the learnable equilibrium.
    #[cfg_attr(feature = "serde", serde(default = "default_xstar_halfwidth"))]
    pub xstar_init_halfwidth: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![16, 16]
}
fn default_j_mode() -> MatrixMode {
    MatrixMode::StateDependent
}
fn default_r_mode() -> MatrixMode {
    MatrixMode::Constant
}
fn default_definiteness() -> Definiteness {
    Definiteness::Strict
}
fn default_g_mode() -> MatrixMode {
    MatrixMode::Zero
}
fn default_beta() -> f64 {
    0.1
}
fn default_xstar_halfwidth() -> f64 {
    1.0
}

impl ModelSpec {
    /// A spec with library defaults: two 16-wide hidden layers,
    /// state-dependent `J`, constant strict `R`, no input head.
    pub fn new(kind: ModelKind, state_dim: usize, input_dim: usize) -> Self {
        ModelSpec {
            kind,
            state_dim,
            input_dim,
            hidden: default_hidden(),
            j_mode: default_j_mode(),
            r_mode: default_r_mode(),
            r_definiteness: default_definiteness(),
            g_mode: default_g_mode(),
            xstar: None,
            epsilon: 0.0,
            beta: default_beta(),
            g_outputs: None,
            xstar_init_halfwidth: default_xstar_halfwidth(),
        }
    }
}

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// `state_dim` must be at least 1.
    StateDim,
    /// Skew parameterizations need `state_dim ≥ 2`.
    SkewNeedsTwoDims,
    /// The fixed symplectic form needs an even state dimension.
    SymplecticOddDim(usize),
    /// `fixed_symplectic` only makes sense for `J`.
    SymplecticOnlyForJ,
    /// `bphnn` requires `β > 0` for radial unboundedness.
    BetaNotPositive(f64),
    /// `ε` must be non-negative.
    EpsilonNegative(f64),
    /// Provided `x*` has the wrong length.
    XStarDim { expected: usize, got: usize },
    /// An input head was requested with `input_dim = 0`.
    InputHeadWithoutInputs,
    /// Convex Hamiltonians need at least one hidden layer.
    ConvexNeedsHidden,
    /// `g_outputs` must be positive when given.
    GOutputsZero,
    /// Wrapped vector length passed to a matrix constructor.
    VecLength { expected: usize, got: usize },
}

impl core::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ConfigError::StateDim => write!(f, "state_dim must be at least 1"),
            ConfigError::SkewNeedsTwoDims => {
                write!(f, "skew-symmetric heads need state_dim >= 2 (use mode \"zero\" for 1-d)")
            }
            ConfigError::SymplecticOddDim(n) => {
                write!(f, "fixed symplectic J needs an even state dimension, got {n}")
            }
            ConfigError::SymplecticOnlyForJ => {
                write!(f, "fixed_symplectic is only valid for the J head")
            }
            ConfigError::BetaNotPositive(b) => {
                write!(f, "bphnn requires beta > 0, got {b}")
            }
            ConfigError::EpsilonNegative(e) => write!(f, "epsilon must be >= 0, got {e}"),
            ConfigError::XStarDim { expected, got } => {
                write!(f, "xstar has length {got}, state_dim is {expected}")
            }
            ConfigError::InputHeadWithoutInputs => {
                write!(f, "G head requested but input_dim is 0")
            }
            ConfigError::ConvexNeedsHidden => {
                write!(f, "convex Hamiltonian needs at least one hidden layer")
            }
            ConfigError::GOutputsZero => write!(f, "g_outputs must be positive"),
            ConfigError::VecLength { expected, got } => {
                write!(f, "parameter vector has length {got}, expected {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// An argument slice has the wrong length.
    Dim { what: &'static str, expected: usize, got: usize },
    /// The operation is not defined for this model kind.
    Unsupported { kind: &'static str, op: &'static str },
    /// Propagated evaluation failure (should not occur for checked inputs).
    Eval(EvalError),
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::Dim { what, expected, got } => {
                write!(f, "{what} has length {got}, expected {expected}")
            }
            ModelError::Unsupported { kind, op } => {
                write!(f, "{op} is not defined for model kind {kind}")
            }
            ModelError::Eval(e) => write!(f, "evaluation failed: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

impl From<EvalError> for ModelError {
    fn from(e: EvalError) -> Self {
        ModelError::Eval(e)
    }
}

// ── Structured matrices as plain data ───────────────────────────────────

/// Dense skew-symmetric matrix from its strictly-upper triangle (row-major):
/// `J[i][j] = −v_k`, `J[j][i] = +v_k` for `i < j`.
pub fn skew_from_vec(v: &[f64], n: usize) -> Result<Vec<f64>, ConfigError> {
    let want = n * (n - 1) / 2;
    if v.len() != want {
        return Err(ConfigError::VecLength { expected: want, got: v.len() });
    }
    let mut m = vec![0.0; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            m[i * n + j] = -v[k];
            m[j * n + i] = v[k];
            k += 1;
        }
    }
    Ok(m)
}

/// Lower-triangular factor from its packed triangle (row-major).  With
/// `strict` the diagonal passes through softplus and is therefore positive.
pub fn lower_from_vec(v: &[f64], n: usize, strict: bool) -> Result<Vec<f64>, ConfigError> {
    let want = n * (n + 1) / 2;
    if v.len() != want {
        return Err(ConfigError::VecLength { expected: want, got: v.len() });
    }
    let mut m = vec![0.0; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            m[i * n + j] =
                if i == j && strict { crate::math::softplus(v[k]) } else { v[k] };
            k += 1;
        }
    }
    Ok(m)
}

/// Symmetric positive (semi-)definite matrix `L Lᵀ` from a packed lower
/// triangle.  Strict mode guarantees positive definiteness.
pub fn spd_from_vec(v: &[f64], n: usize, strict: bool) -> Result<Vec<f64>, ConfigError> {
    let l = lower_from_vec(v, n, strict)?;
    let lt = linalg::transpose(&l, n, n);
    Ok(linalg::mat_mul(&l, &lt, n, n, n))
}

/// The canonical symplectic form `[[0, −I], [I, 0]]` for even `n`.
pub fn fixed_symplectic(n: usize) -> Result<Vec<f64>, ConfigError> {
    if n % 2 != 0 {
        return Err(ConfigError::SymplecticOddDim(n));
    }
    let half = n / 2;
    let mut m = vec![0.0; n * n];
    for i in 0..half {
        m[i * n + (half + i)] = -1.0;
        m[(half + i) * n + i] = 1.0;
    }
    Ok(m)
}

// ── The model ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy)]
struct Roots {
    hamiltonian: Option<NodeId>,
    grad_h: Option<NodeId>,
    /// (conservative, dissipative, input) — absent for `node`.
    parts: Option<(NodeId, NodeId, NodeId)>,
    rhs: NodeId,
    supply: Option<NodeId>,
    j_mat: Option<NodeId>,
    r_factor: Option<NodeId>,
    g_mat: Option<NodeId>,
}

enum XStar {
    Fixed(Vec<f64>),
    Learned(ParamSeg),
}

/// A built model: parameter vector plus the compiled evaluation graph.
pub struct PhsModel {
    spec: ModelSpec,
    seed: u64,
    params: ParamVector,
    graph: Graph,
    roots: Roots,
    xstar: Option<XStar>,
}

/// Reusable scratch for model evaluations (assembled input + tape storage).
#[derive(Default, Clone)]
pub struct ModelBuffer {
    ws: Workspace,
    input: Vec<f64>,
    grad_in: Vec<f64>,
}

/// Flow components at one state: `rhs = conservative + dissipative + input`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub conservative: Vec<f64>,
    pub dissipative: Vec<f64>,
    pub input: Vec<f64>,
}

/// Validate a spec and build the model.  All randomness (network weights,
/// learnable equilibrium) derives from `seed`, so equal seeds give
/// bit-identical models.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<PhsModel, ConfigError> {
    PhsModel::build(spec, seed)
}

impl PhsModel {
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self, ConfigError> {
        let n = spec.state_dim;
        let m = spec.input_dim;
        if n == 0 {
            return Err(ConfigError::StateDim);
        }
        if spec.epsilon < 0.0 {
            return Err(ConfigError::EpsilonNegative(spec.epsilon));
        }
        let is_phs = !matches!(spec.kind, ModelKind::Node);
        if is_phs {
            if matches!(spec.r_mode, MatrixMode::FixedSymplectic)
                || matches!(spec.g_mode, MatrixMode::FixedSymplectic)
            {
                return Err(ConfigError::SymplecticOnlyForJ);
            }
            if matches!(spec.j_mode, MatrixMode::Constant | MatrixMode::StateDependent) && n < 2 {
                return Err(ConfigError::SkewNeedsTwoDims);
            }
            if matches!(spec.j_mode, MatrixMode::FixedSymplectic) && n % 2 != 0 {
                return Err(ConfigError::SymplecticOddDim(n));
            }
            if !matches!(spec.g_mode, MatrixMode::Zero) && m == 0 {
                return Err(ConfigError::InputHeadWithoutInputs);
            }
        }
        match spec.kind {
            ModelKind::Sphnn | ModelKind::SphnnLm if spec.hidden.is_empty() => {
                return Err(ConfigError::ConvexNeedsHidden);
            }
            ModelKind::Sphnn => {
                if let Some(xs) = &spec.xstar {
                    if xs.len() != n {
                        return Err(ConfigError::XStarDim { expected: n, got: xs.len() });
                    }
                }
            }
            ModelKind::Bphnn => {
                if !(spec.beta > 0.0) {
                    return Err(ConfigError::BetaNotPositive(spec.beta));
                }
                if spec.g_outputs == Some(0) {
                    return Err(ConfigError::GOutputsZero);
                }
            }
            _ => {}
        }

        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamVector::new();
        let mut g = Graph::new(n + m);

        // `node`: a plain network of [x; u], nothing else.
        if let ModelKind::Node = spec.kind {
            let cfg = FfnnConfig::new(n + m, &spec.hidden, n);
            let net = Ffnn::init(&cfg, "f", &mut params, master.next_u64())
                .expect("dims checked above");
            let all = g.input(0, n + m);
            let trace = net.build_forward(&mut g, all);
            let roots = Roots {
                hamiltonian: None,
                grad_h: None,
                parts: None,
                rhs: trace.out,
                supply: None,
                j_mat: None,
                r_factor: None,
                g_mat: None,
            };
            return Ok(PhsModel { spec: spec.clone(), seed, params, graph: g, roots, xstar: None });
        }

        let x = g.input(0, n);
        let u_node = if m > 0 { Some(g.input(n, m)) } else { None };

        // Hamiltonian and its symbolic gradient.
        let ham_seed = master.next_u64();
        let (h_root, grad_h, xstar) = match spec.kind {
            ModelKind::Sphnn | ModelKind::SphnnLm => {
                let net = Ficnn::init(&FicnnConfig::new(n, &spec.hidden), "ham", &mut params, ham_seed)
                    .expect("dims checked above");
                let (xs_node, xstar) = if matches!(spec.kind, ModelKind::SphnnLm) {
                    let hw = spec.xstar_init_halfwidth;
                    let init: Vec<f64> =
                        (0..n).map(|_| master.random_range(-hw..hw)).collect();
                    let seg = params.register("xstar", &init);
                    (g.param(seg.offset, seg.len), Some(XStar::Learned(seg)))
                } else {
                    let xs = spec.xstar.clone().unwrap_or_else(|| vec![0.0; n]);
                    (g.constant(&xs), Some(XStar::Fixed(xs)))
                };
                let tr_x = net.build_forward(&mut g, x);
                let tr_s = net.build_forward(&mut g, xs_node);
                let one = g.scalar(1.0);
                let gx = net.build_vjp(&mut g, &tr_x, one);
                let gs = net.build_vjp(&mut g, &tr_s, one);
                let diff = g.sub(x, xs_node);
                // H(x) = f(x) − f(x*) − ∇f(x*)·(x − x*) + ε‖x − x*‖².
                let lin = g.dot(gs, diff);
                let qf = g.dot(diff, diff);
                let neg_fs = g.neg(tr_s.out);
                let neg_lin = g.neg(lin);
                let eps_qf = g.scale(qf, spec.epsilon);
                let h = g.sum(&[tr_x.out, neg_fs, neg_lin, eps_qf]);
                // ∇H(x) = ∇f(x) − ∇f(x*) + 2ε(x − x*).
                let neg_gs = g.neg(gs);
                let eps_diff = g.scale(diff, 2.0 * spec.epsilon);
                let grad = g.sum(&[gx, neg_gs, eps_diff]);
                (h, grad, xstar)
            }
            ModelKind::Bphnn => {
                let outs = spec.g_outputs.unwrap_or(n);
                let cfg = FfnnConfig::new(n, &spec.hidden, outs);
                let net = Ffnn::init(&cfg, "ham", &mut params, ham_seed).expect("dims checked");
                let tr = net.build_forward(&mut g, x);
                let sq = g.dot(tr.out, tr.out);
                let xx = g.dot(x, x);
                let bx = g.scale(xx, spec.beta);
                let h = g.sum(&[sq, bx]);
                let two_g = g.scale(tr.out, 2.0);
                let vjp = net.build_vjp(&mut g, &tr, two_g);
                let bx2 = g.scale(x, 2.0 * spec.beta);
                let grad = g.sum(&[vjp, bx2]);
                (h, grad, None)
            }
            ModelKind::Phnn => {
                let cfg = FfnnConfig::new(n, &spec.hidden, 1);
                let net = Ffnn::init(&cfg, "ham", &mut params, ham_seed).expect("dims checked");
                let tr = net.build_forward(&mut g, x);
                let one = g.scalar(1.0);
                let grad = net.build_vjp(&mut g, &tr, one);
                (tr.out, grad, None)
            }
            ModelKind::Node => unreachable!(),
        };

        // J head → conservative component.
        let j_seed = master.next_u64();
        let j_mat = match spec.j_mode {
            MatrixMode::Zero => None,
            MatrixMode::FixedSymplectic => {
                let j0 = fixed_symplectic(n)?;
                Some(g.constant(&j0))
            }
            MatrixMode::Constant => {
                let seg = params.register("j.v", &vec![0.0; n * (n - 1) / 2]);
                let v = g.param(seg.offset, seg.len);
                Some(g.skew_expand(v, n))
            }
            MatrixMode::StateDependent => {
                let cfg = FfnnConfig::new(n, &spec.hidden, n * (n - 1) / 2);
                let net = Ffnn::init(&cfg, "j", &mut params, j_seed).expect("dims checked");
                let tr = net.build_forward(&mut g, x);
                Some(g.skew_expand(tr.out, n))
            }
        };
        let conservative = match j_mat {
            Some(jm) => g.affine(jm, grad_h, None, n, n),
            None => g.constant(&vec![0.0; n]),
        };

        // R head → dissipative component −L Lᵀ ∇H.
        let r_seed = master.next_u64();
        let strict = matches!(spec.r_definiteness, Definiteness::Strict);
        let r_factor = match spec.r_mode {
            MatrixMode::Zero => None,
            MatrixMode::Constant => {
                let seg = params.register("r.v", &vec![0.0; n * (n + 1) / 2]);
                let v = g.param(seg.offset, seg.len);
                Some(g.lower_expand(v, n, strict))
            }
            MatrixMode::StateDependent => {
                let cfg = FfnnConfig::new(n, &spec.hidden, n * (n + 1) / 2);
                let net = Ffnn::init(&cfg, "r", &mut params, r_seed).expect("dims checked");
                let tr = net.build_forward(&mut g, x);
                Some(g.lower_expand(tr.out, n, strict))
            }
            MatrixMode::FixedSymplectic => unreachable!("rejected above"),
        };
        let dissipative = match r_factor {
            Some(l) => {
                let ltg = g.affine_t(l, grad_h, None, n, n);
                let rg = g.affine(l, ltg, None, n, n);
                g.neg(rg)
            }
            None => g.constant(&vec![0.0; n]),
        };

        // G head → input component.
        let g_seed = master.next_u64();
        let g_mat = match spec.g_mode {
            MatrixMode::Zero => None,
            MatrixMode::Constant => {
                let seg = params.register("g.m", &vec![0.0; n * m]);
                Some(g.param(seg.offset, seg.len))
            }
            MatrixMode::StateDependent => {
                let cfg = FfnnConfig::new(n, &spec.hidden, n * m);
                let net = Ffnn::init(&cfg, "g", &mut params, g_seed).expect("dims checked");
                let tr = net.build_forward(&mut g, x);
                Some(tr.out)
            }
            MatrixMode::FixedSymplectic => unreachable!("rejected above"),
        };
        let input_part = match (g_mat, u_node) {
            (Some(gm), Some(u)) => g.affine(gm, u, None, n, m),
            _ => g.constant(&vec![0.0; n]),
        };
        let supply = if g_mat.is_some() { Some(g.dot(grad_h, input_part)) } else { None };

        let rhs = g.sum(&[conservative, dissipative, input_part]);
        let roots = Roots {
            hamiltonian: Some(h_root),
            grad_h: Some(grad_h),
            parts: Some((conservative, dissipative, input_part)),
            rhs,
            supply,
            j_mat,
            r_factor,
            g_mat,
        };
        Ok(PhsModel { spec: spec.clone(), seed, params, graph: g, roots, xstar })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state_dim(&self) -> usize {
        self.spec.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// The equilibrium the Hamiltonian is normalized around, if the variant
    /// has one (current parameter values for the learnable case).
    pub fn xstar(&self) -> Option<Vec<f64>> {
        match &self.xstar {
            Some(XStar::Fixed(v)) => Some(v.clone()),
            Some(XStar::Learned(seg)) => Some(self.params.seg(*seg).to_vec()),
            None => None,
        }
    }

    pub fn buffer(&self) -> ModelBuffer {
        ModelBuffer::default()
    }

    fn check_x(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.spec.state_dim {
            return Err(ModelError::Dim {
                what: "state",
                expected: self.spec.state_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_u(&self, u: &[f64]) -> Result<(), ModelError> {
        if u.len() != self.spec.input_dim {
            return Err(ModelError::Dim {
                what: "input",
                expected: self.spec.input_dim,
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Evaluate the whole graph at `(x, u)`.  Root values can then be read
    /// out of the buffer.
    fn eval_buf(&self, buf: &mut ModelBuffer, x: &[f64], u: &[f64]) -> Result<(), ModelError> {
        self.check_x(x)?;
        self.check_u(u)?;
        buf.input.clear();
        buf.input.extend_from_slice(x);
        buf.input.extend_from_slice(u);
        self.graph.eval(&buf.input, self.params.values(), &mut buf.ws)?;
        Ok(())
    }

    fn eval_autonomous(&self, buf: &mut ModelBuffer, x: &[f64]) -> Result<(), ModelError> {
        self.check_x(x)?;
        buf.input.clear();
        buf.input.extend_from_slice(x);
        buf.input.resize(self.spec.state_dim + self.spec.input_dim, 0.0);
        self.graph.eval(&buf.input, self.params.values(), &mut buf.ws)?;
        Ok(())
    }

    fn unsupported(&self, op: &'static str) -> ModelError {
        let kind = match self.spec.kind {
            ModelKind::Sphnn => "sphnn",
            ModelKind::SphnnLm => "sphnn_lm",
            ModelKind::Bphnn => "bphnn",
            ModelKind::Phnn => "phnn",
            ModelKind::Node => "node",
        };
        ModelError::Unsupported { kind, op }
    }

    /// `H(x)`.  The input head never enters the Hamiltonian, so no `u`.
    pub fn hamiltonian_buf(&self, buf: &mut ModelBuffer, x: &[f64]) -> Result<f64, ModelError> {
        let root = self.roots.hamiltonian.ok_or_else(|| self.unsupported("hamiltonian"))?;
        self.eval_autonomous(buf, x)?;
        Ok(self.graph.value(&buf.ws, root)[0])
    }

    /// `∇H(x)` into `out`.
    pub fn grad_hamiltonian_buf(
        &self,
        buf: &mut ModelBuffer,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        let root = self.roots.grad_h.ok_or_else(|| self.unsupported("grad_hamiltonian"))?;
        self.eval_autonomous(buf, x)?;
        out.copy_from_slice(self.graph.value(&buf.ws, root));
        Ok(())
    }

    /// Full right-hand side `ẋ` into `out`.
    pub fn rhs_buf(
        &self,
        buf: &mut ModelBuffer,
        x: &[f64],
        u: &[f64],
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        self.eval_buf(buf, x, u)?;
        out.copy_from_slice(self.graph.value(&buf.ws, self.roots.rhs));
        Ok(())
    }

    /// Conservative / dissipative / input components (their sum is exactly
    /// the rhs, bit for bit — all read from the same evaluation).
    pub fn decompose_buf(
        &self,
        buf: &mut ModelBuffer,
        x: &[f64],
        u: &[f64],
    ) -> Result<Decomposition, ModelError> {
        let (c, d, i) = self.roots.parts.ok_or_else(|| self.unsupported("decompose"))?;
        self.eval_buf(buf, x, u)?;
        Ok(Decomposition {
            conservative: self.graph.value(&buf.ws, c).to_vec(),
            dissipative: self.graph.value(&buf.ws, d).to_vec(),
            input: self.graph.value(&buf.ws, i).to_vec(),
        })
    }

    /// Supply rate `s = ∇Hᵀ G u` (zero for autonomous configurations).
    pub fn supply_rate_buf(
        &self,
        buf: &mut ModelBuffer,
        x: &[f64],
        u: &[f64],
    ) -> Result<f64, ModelError> {
        if self.roots.grad_h.is_none() {
            return Err(self.unsupported("supply_rate"));
        }
        match self.roots.supply {
            None => {
                self.check_x(x)?;
                self.check_u(u)?;
                Ok(0.0)
            }
            Some(root) => {
                self.eval_buf(buf, x, u)?;
                Ok(self.graph.value(&buf.ws, root)[0])
            }
        }
    }

    /// Accumulate `∂(seedᵀ · rhs)/∂x` into `grad_x` and `∂(seedᵀ · rhs)/∂θ`
    /// into `grad_params` (both `+=`; callers zero them when appropriate).
    pub fn rhs_vjp_buf(
        &self,
        buf: &mut ModelBuffer,
        x: &[f64],
        u: &[f64],
        seed: &[f64],
        grad_x: Option<&mut [f64]>,
        grad_params: Option<&mut [f64]>,
    ) -> Result<(), ModelError> {
        if seed.len() != self.spec.state_dim {
            return Err(ModelError::Dim {
                what: "vjp seed",
                expected: self.spec.state_dim,
                got: seed.len(),
            });
        }
        if let Some(gp) = grad_params.as_deref() {
            if gp.len() != self.params.len() {
                return Err(ModelError::Dim {
                    what: "parameter gradient buffer",
                    expected: self.params.len(),
                    got: gp.len(),
                });
            }
        }
        if let Some(gx) = grad_x.as_deref() {
            if gx.len() != self.spec.state_dim {
                return Err(ModelError::Dim {
                    what: "state gradient buffer",
                    expected: self.spec.state_dim,
                    got: gx.len(),
                });
            }
        }
        self.eval_buf(buf, x, u)?;
        self.rhs_pullback_buf(buf, seed, grad_x, grad_params)
    }

    /// Like [`PhsModel::rhs_vjp_buf`] but reuses the forward evaluation
    /// already in `buf` — call directly after [`PhsModel::rhs_buf`] (or any
    /// `*_buf` evaluation at the same `(x, u)`) to avoid a second sweep.
    pub fn rhs_pullback_buf(
        &self,
        buf: &mut ModelBuffer,
        seed: &[f64],
        grad_x: Option<&mut [f64]>,
        grad_params: Option<&mut [f64]>,
    ) -> Result<(), ModelError> {
        if seed.len() != self.spec.state_dim {
            return Err(ModelError::Dim {
                what: "vjp seed",
                expected: self.spec.state_dim,
                got: seed.len(),
            });
        }
        let n = self.spec.state_dim;
        let m = self.spec.input_dim;
        if grad_x.is_some() {
            buf.grad_in.clear();
            buf.grad_in.resize(n + m, 0.0);
            self.graph.backward(
                &mut buf.ws,
                self.roots.rhs,
                seed,
                Some(&mut buf.grad_in),
                grad_params,
            )?;
            let gx = grad_x.unwrap();
            for (dst, src) in gx.iter_mut().zip(&buf.grad_in[..n]) {
                *dst += src;
            }
        } else {
            self.graph.backward(&mut buf.ws, self.roots.rhs, seed, None, grad_params)?;
        }
        Ok(())
    }

    /// `J(x)` as a dense row-major matrix (zeros if the head is absent).
    pub fn j_matrix_buf(&self, buf: &mut ModelBuffer, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if self.roots.parts.is_none() {
            return Err(self.unsupported("j_matrix"));
        }
        let n = self.spec.state_dim;
        match self.roots.j_mat {
            None => {
                self.check_x(x)?;
                Ok(vec![0.0; n * n])
            }
            Some(root) => {
                self.eval_autonomous(buf, x)?;
                Ok(self.graph.value(&buf.ws, root).to_vec())
            }
        }
    }

    /// `R(x) = L Lᵀ` as a dense row-major matrix (zeros if absent).
    pub fn r_matrix_buf(&self, buf: &mut ModelBuffer, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if self.roots.parts.is_none() {
            return Err(self.unsupported("r_matrix"));
        }
        let n = self.spec.state_dim;
        match self.roots.r_factor {
            None => {
                self.check_x(x)?;
                Ok(vec![0.0; n * n])
            }
            Some(root) => {
                self.eval_autonomous(buf, x)?;
                let l = self.graph.value(&buf.ws, root);
                let lt = linalg::transpose(l, n, n);
                Ok(linalg::mat_mul(l, &lt, n, n, n))
            }
        }
    }

    /// `G(x)` as a dense row-major `n × m` matrix (empty when `m = 0`).
    pub fn g_matrix_buf(&self, buf: &mut ModelBuffer, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if self.roots.parts.is_none() {
            return Err(self.unsupported("g_matrix"));
        }
        let n = self.spec.state_dim;
        let m = self.spec.input_dim;
        match self.roots.g_mat {
            None => {
                self.check_x(x)?;
                Ok(vec![0.0; n * m])
            }
            Some(root) => {
                self.eval_autonomous(buf, x)?;
                Ok(self.graph.value(&buf.ws, root).to_vec())
            }
        }
    }

    /// Hessian of the Hamiltonian at `x` (finite differences of the exact
    /// gradient, symmetrized).
    pub fn hessian_hamiltonian(&self, x: &[f64], h: f64) -> Result<Vec<f64>, ModelError> {
        let root = self.roots.grad_h.ok_or_else(|| self.unsupported("hessian"))?;
        self.check_x(x)?;
        let n = self.spec.state_dim;
        let m = self.spec.input_dim;
        let mut inputs = vec![0.0; n + m];
        inputs[..n].copy_from_slice(x);
        let mut buf = self.buffer();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        for j in 0..n {
            let x0 = inputs[j];
            inputs[j] = x0 + h;
            self.grad_at(&mut buf, &inputs, root, &mut gp)?;
            inputs[j] = x0 - h;
            self.grad_at(&mut buf, &inputs, root, &mut gm)?;
            inputs[j] = x0;
            for i in 0..n {
                hess[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (hess[i * n + j] + hess[j * n + i]);
                hess[i * n + j] = s;
                hess[j * n + i] = s;
            }
        }
        Ok(hess)
    }

    fn grad_at(
        &self,
        buf: &mut ModelBuffer,
        inputs: &[f64],
        root: NodeId,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        self.graph.eval(inputs, self.params.values(), &mut buf.ws)?;
        out.copy_from_slice(self.graph.value(&buf.ws, root));
        Ok(())
    }

    // Allocating conveniences.

    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.hamiltonian_buf(&mut self.buffer(), x)
    }

    pub fn grad_hamiltonian(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.spec.state_dim];
        self.grad_hamiltonian_buf(&mut self.buffer(), x, &mut out)?;
        Ok(out)
    }

    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.spec.state_dim];
        self.rhs_buf(&mut self.buffer(), x, u, &mut out)?;
        Ok(out)
    }

    pub fn decompose(&self, x: &[f64], u: &[f64]) -> Result<Decomposition, ModelError> {
        self.decompose_buf(&mut self.buffer(), x, u)
    }

    pub fn supply_rate(&self, x: &[f64], u: &[f64]) -> Result<f64, ModelError> {
        self.supply_rate_buf(&mut self.buffer(), x, u)
    }

    pub fn j_matrix(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.j_matrix_buf(&mut self.buffer(), x)
    }

    pub fn r_matrix(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.r_matrix_buf(&mut self.buffer(), x)
    }

    pub fn g_matrix(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.g_matrix_buf(&mut self.buffer(), x)
    }

    /// Human-readable kind name (matches the serialized form).
    pub fn kind_name(&self) -> &'static str {
        match self.spec.kind {
            ModelKind::Sphnn => "sphnn",
            ModelKind::SphnnLm => "sphnn_lm",
            ModelKind::Bphnn => "bphnn",
            ModelKind::Phnn => "phnn",
            ModelKind::Node => "node",
        }
    }
}

impl core::fmt::Debug for PhsModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PhsModel")
            .field("kind", &self.kind_name())
            .field("state_dim", &self.spec.state_dim)
            .field("input_dim", &self.spec.input_dim)
            .field("params", &self.params.len())
            .field("nodes", &self.graph.node_count())
            .finish()
    }
}
