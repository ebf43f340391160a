//! Post-training verification: what can actually be certified about a
//! learned model, checked rather than assumed.
//!
//! The structural families make claims by construction — convex Hamiltonian
//! with a pinned minimum, dissipative `R`, radially unbounded energy.  This
//! module turns those claims into a [`Verdict`] by auditing the parts that
//! construction alone cannot guarantee (e.g. a *strictly* positive-definite
//! Hessian at the equilibrium), sampling the parts that hold pointwise
//! (definiteness of `R`, convexity along random chords, the energy-balance
//! identity), and probing trajectories from far-out initial conditions.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Trajectory;
use crate::linalg;
use crate::math;
use crate::ode::{self, IntegrationConfig, OdeError};
use crate::phs::{Definiteness, MatrixMode, ModelError, ModelKind, PhsModel};

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum VerifyError {
    /// The model kind offers nothing to verify (unstructured baseline).
    Unsupported { kind: &'static str },
    Model(ModelError),
    Ode(OdeError),
    /// Compared trajectories live on different grids.
    GridMismatch,
    Config(&'static str),
}

impl core::fmt::Display for VerifyError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            VerifyError::Unsupported { kind } => {
                write!(f, "model kind {kind} has no stability structure to verify")
            }
            VerifyError::Model(e) => write!(f, "model error: {e}"),
            VerifyError::Ode(e) => write!(f, "integration error: {e}"),
            VerifyError::GridMismatch => write!(f, "trajectories are on different time grids"),
            VerifyError::Config(msg) => write!(f, "invalid verification config: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for VerifyError {}

impl From<ModelError> for VerifyError {
    fn from(e: ModelError) -> Self {
        VerifyError::Model(e)
    }
}

impl From<OdeError> for VerifyError {
    fn from(e: OdeError) -> Self {
        VerifyError::Ode(e)
    }
}

// ── Stability certificates ──────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    /// Convex energy with a strict minimum at `x*` plus strictly positive
    /// dissipation everywhere sampled: every trajectory converges to `x*`.
    CertifiedGlobalAsymptotic,
    /// Energy is a valid Lyapunov function (non-increasing, bounded level
    /// sets) but convergence to a point is not established.
    CertifiedStableBounded,
    /// No certificate — the structure does not constrain the dynamics.
    NotCertified,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerifyConfig {
    /// Random states sampled per pointwise check.
    #[cfg_attr(feature = "serde", serde(default = "default_samples"))]
    pub n_samples: usize,
    /// Sampling box half-width around the equilibrium.
    #[cfg_attr(feature = "serde", serde(default = "default_halfwidth"))]
    pub box_halfwidth: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
    /// Step for the finite-difference Hessian of the exact gradient.
    #[cfg_attr(feature = "serde", serde(default = "default_hessian_h"))]
    pub hessian_h: f64,
    /// Strict-minimum threshold on the Hessian's smallest eigenvalue.
    #[cfg_attr(feature = "serde", serde(default = "default_hessian_min"))]
    pub hessian_min_eig: f64,
    /// Strict-dissipation threshold on sampled `R(x)` eigenvalues.
    #[cfg_attr(feature = "serde", serde(default = "default_r_min"))]
    pub r_min_eig: f64,
    /// Slack for midpoint-convexity sampling.
    #[cfg_attr(feature = "serde", serde(default = "default_slack"))]
    pub convexity_slack: f64,
}

fn default_samples() -> usize {
    1000
}
fn default_halfwidth() -> f64 {
    3.0
}
fn default_hessian_h() -> f64 {
    1e-5
}
fn default_hessian_min() -> f64 {
    1e-8
}
fn default_r_min() -> f64 {
    1e-10
}
fn default_slack() -> f64 {
    1e-10
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n_samples: default_samples(),
            box_halfwidth: default_halfwidth(),
            seed: 0,
            hessian_h: default_hessian_h(),
            hessian_min_eig: default_hessian_min(),
            r_min_eig: default_r_min(),
            convexity_slack: default_slack(),
        }
    }
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub kind: String,
    pub equilibrium: Option<Vec<f64>>,
    /// Smallest Hessian eigenvalue at the equilibrium (convex kinds only).
    pub hessian_min_eig: Option<f64>,
    /// Smallest eigenvalue of `R(x)` seen across samples (when `R` exists).
    pub r_min_eig_sampled: Option<f64>,
    /// Midpoint-convexity failures across sampled chords (convex kinds).
    pub convexity_violations: usize,
    pub samples: usize,
    /// Human-readable reasoning behind the verdict.
    pub notes: Vec<String>,
}

fn sample_box(rng: &mut ChaCha8Rng, center: &[f64], hw: f64, out: &mut [f64]) {
    for (o, c) in out.iter_mut().zip(center) {
        *o = c + rng.random_range(-hw..hw);
    }
}

/// Decide what stability guarantee the trained model actually carries.
pub fn verify_stability(
    model: &PhsModel,
    cfg: &VerifyConfig,
) -> Result<StabilityReport, VerifyError> {
    if cfg.n_samples == 0 {
        return Err(VerifyError::Config("n_samples must be positive"));
    }
    let kind = model.kind_name();
    if matches!(model.spec().kind, ModelKind::Node) {
        return Err(VerifyError::Unsupported { kind });
    }
    let n = model.state_dim();
    let center = model.xstar().unwrap_or_else(|| vec![0.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut notes = Vec::new();
    let mut report = StabilityReport {
        verdict: Verdict::NotCertified,
        kind: String::from(kind),
        equilibrium: model.xstar(),
        hessian_min_eig: None,
        r_min_eig_sampled: None,
        convexity_violations: 0,
        samples: cfg.n_samples,
        notes: Vec::new(),
    };

    // Sampled minimum eigenvalue of R(x), if the model has a dissipation head.
    let has_r = !matches!(model.spec().r_mode, MatrixMode::Zero);
    if has_r {
        let state_dep = matches!(model.spec().r_mode, MatrixMode::StateDependent);
        let mut x = vec![0.0; n];
        let mut min_eig = f64::INFINITY;
        let reps = if state_dep { cfg.n_samples } else { 1 };
        for _ in 0..reps {
            sample_box(&mut rng, &center, cfg.box_halfwidth, &mut x);
            let r = model.r_matrix(&x)?;
            let e = linalg::min_eigenvalue(&r, n).map_err(|_| {
                VerifyError::Config("eigensolver failed on a sampled R matrix")
            })?;
            min_eig = min_eig.min(e);
        }
        report.r_min_eig_sampled = Some(min_eig);
    }

    match model.spec().kind {
        ModelKind::Phnn => {
            notes.push(String::from(
                "energy is an unconstrained network: no convexity, no radial bound, no certificate",
            ));
        }
        ModelKind::Bphnn => {
            // H = Σ g² + β‖x‖² with β > 0 enforced at construction:
            // positive, radially unbounded, non-increasing along flows.
            report.verdict = Verdict::CertifiedStableBounded;
            notes.push(String::from(
                "energy is positive and radially unbounded by construction; \
                 trajectories stay bounded",
            ));
            notes.push(String::from(
                "no convex minimum is pinned, so convergence to a point is not certified",
            ));
        }
        ModelKind::Sphnn | ModelKind::SphnnLm => {
            // Convexity is structural; spot-check midpoints anyway.
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            let mut mid = vec![0.0; n];
            let mut buf = model.buffer();
            let mut violations = 0usize;
            for _ in 0..cfg.n_samples {
                sample_box(&mut rng, &center, cfg.box_halfwidth, &mut a);
                sample_box(&mut rng, &center, cfg.box_halfwidth, &mut b);
                for i in 0..n {
                    mid[i] = 0.5 * (a[i] + b[i]);
                }
                let ha = model.hamiltonian_buf(&mut buf, &a)?;
                let hb = model.hamiltonian_buf(&mut buf, &b)?;
                let hm = model.hamiltonian_buf(&mut buf, &mid)?;
                let scale = 1.0 + math::abs(ha).max(math::abs(hb));
                if hm > 0.5 * (ha + hb) + cfg.convexity_slack * scale {
                    violations += 1;
                }
            }
            report.convexity_violations = violations;

            let hess = model.hessian_hamiltonian(&center, cfg.hessian_h)?;
            let hess_min = linalg::min_eigenvalue(&hess, n)
                .map_err(|_| VerifyError::Config("eigensolver failed on the Hessian"))?;
            report.hessian_min_eig = Some(hess_min);

            let strict_min = hess_min > cfg.hessian_min_eig;
            if !strict_min {
                notes.push(String::from(
                    "Hessian at the equilibrium is not strictly positive definite: \
                     the minimum may be flat along some direction",
                ));
            }
            if violations > 0 {
                notes.push(String::from("sampled midpoint convexity failed — check the build"));
            }
            let strict_r = has_r
                && matches!(model.spec().r_definiteness, Definiteness::Strict)
                && report.r_min_eig_sampled.is_some_and(|e| e > cfg.r_min_eig);

            if strict_min && violations == 0 {
                if strict_r {
                    report.verdict = Verdict::CertifiedGlobalAsymptotic;
                    notes.push(String::from(
                        "convex energy with a strict pinned minimum and strictly \
                         positive dissipation: every trajectory converges to the equilibrium",
                    ));
                } else {
                    report.verdict = Verdict::CertifiedStableBounded;
                    notes.push(String::from(
                        "convex energy with a strict pinned minimum bounds all \
                         trajectories; dissipation is not strictly positive, so \
                         asymptotic convergence is not certified",
                    ));
                }
            }
        }
        ModelKind::Node => unreachable!("rejected above"),
    }

    report.notes = notes;
    Ok(report)
}

// ── Energy-balance audit ────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyAudit {
    /// Worst relative violation of `∇H·ẋ = −∇HᵀR∇H + s` across samples.
    pub max_residual: f64,
    pub samples: usize,
}

/// Check the power-balance identity at random states and inputs.  For a
/// correctly wired model the identity holds to rounding error; anything
/// larger means the skew/PSD structure is broken.
pub fn energy_audit(model: &PhsModel, cfg: &VerifyConfig) -> Result<EnergyAudit, VerifyError> {
    if cfg.n_samples == 0 {
        return Err(VerifyError::Config("n_samples must be positive"));
    }
    if matches!(model.spec().kind, ModelKind::Node) {
        return Err(VerifyError::Unsupported { kind: model.kind_name() });
    }
    let n = model.state_dim();
    let m = model.input_dim();
    let center = model.xstar().unwrap_or_else(|| vec![0.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut x = vec![0.0; n];
    let mut u = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut buf = model.buffer();
    let mut worst = 0.0f64;
    for _ in 0..cfg.n_samples {
        sample_box(&mut rng, &center, cfg.box_halfwidth, &mut x);
        for v in u.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        model.grad_hamiltonian_buf(&mut buf, &x, &mut grad)?;
        model.rhs_buf(&mut buf, &x, &u, &mut rhs)?;
        let supply = model.supply_rate_buf(&mut buf, &x, &u)?;
        let r = model.r_matrix(&x)?;
        let mut rg = vec![0.0; n];
        linalg::mat_vec(&r, &grad, n, n, &mut rg);
        let dissipation: f64 = grad.iter().zip(&rg).map(|(a, b)| a * b).sum();
        let hdot: f64 = grad.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        let residual = hdot - (supply - dissipation);
        let scale = 1.0 + math::abs(hdot) + dissipation.abs() + math::abs(supply);
        worst = worst.max(math::abs(residual) / scale);
    }
    Ok(EnergyAudit { max_residual: worst, samples: cfg.n_samples })
}

// ── Trajectory probes ───────────────────────────────────────────────────

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeConfig {
    /// Initial-condition box half-width around the equilibrium.
    #[cfg_attr(feature = "serde", serde(default = "default_radius"))]
    pub radius: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_horizon"))]
    pub horizon: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_probe_trajs"))]
    pub n_traj: usize,
    /// Energy is checked on this many evenly spaced grid points.
    #[cfg_attr(feature = "serde", serde(default = "default_probe_eval"))]
    pub n_eval: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
    /// Tight tolerances so solver error cannot mask an energy rise.
    #[cfg_attr(feature = "serde", serde(default = "default_probe_rtol"))]
    pub rtol: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_probe_atol"))]
    pub atol: f64,
    /// An energy increase above this counts as a violation.
    #[cfg_attr(feature = "serde", serde(default = "default_rise_tol"))]
    pub rise_tol: f64,
}

fn default_radius() -> f64 {
    10.0
}
fn default_horizon() -> f64 {
    100.0
}
fn default_probe_trajs() -> usize {
    10
}
fn default_probe_eval() -> usize {
    201
}
fn default_probe_rtol() -> f64 {
    1e-9
}
fn default_probe_atol() -> f64 {
    1e-11
}
fn default_rise_tol() -> f64 {
    1e-7
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            radius: default_radius(),
            horizon: default_horizon(),
            n_traj: default_probe_trajs(),
            n_eval: default_probe_eval(),
            seed: 0,
            rtol: default_probe_rtol(),
            atol: default_probe_atol(),
            rise_tol: default_rise_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeReport {
    pub trajectories: usize,
    /// Trajectories whose energy rose by more than `rise_tol` at any point.
    pub violations: usize,
    /// Largest single-interval energy increase observed (≤ 0 if none).
    pub max_energy_rise: f64,
    /// Largest state norm reached — finite means nothing escaped.
    pub max_state_norm: f64,
}

/// Launch autonomous trajectories from far-out initial conditions and check
/// that the learned energy really is non-increasing along each of them.
pub fn boundedness_probe(model: &PhsModel, cfg: &ProbeConfig) -> Result<ProbeReport, VerifyError> {
    if matches!(model.spec().kind, ModelKind::Node) {
        return Err(VerifyError::Unsupported { kind: model.kind_name() });
    }
    if cfg.n_traj == 0 || cfg.n_eval < 2 {
        return Err(VerifyError::Config("need at least one trajectory and two grid points"));
    }
    if !(cfg.horizon > 0.0) || !(cfg.radius > 0.0) {
        return Err(VerifyError::Config("horizon and radius must be positive"));
    }
    let n = model.state_dim();
    let m = model.input_dim();
    let center = model.xstar().unwrap_or_else(|| vec![0.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let t_eval: Vec<f64> = (0..cfg.n_eval)
        .map(|i| cfg.horizon * i as f64 / (cfg.n_eval - 1) as f64)
        .collect();
    let ode_cfg = IntegrationConfig { rtol: cfg.rtol, atol: cfg.atol, ..Default::default() };
    let u = vec![0.0; m];
    let mut report = ProbeReport {
        trajectories: cfg.n_traj,
        violations: 0,
        max_energy_rise: f64::NEG_INFINITY,
        max_state_norm: 0.0,
    };
    let mut x0 = vec![0.0; n];
    for _ in 0..cfg.n_traj {
        sample_box(&mut rng, &center, cfg.radius, &mut x0);
        let mut buf = model.buffer();
        let mut f = |_t: f64, x: &[f64], dx: &mut [f64]| {
            model.rhs_buf(&mut buf, x, &u, dx).expect("dimensions fixed");
        };
        let sol = ode::integrate_tsit5(&mut f, &x0, &t_eval, &ode_cfg)?;
        drop(f);
        let mut violated = false;
        let mut prev = None;
        let mut eval_buf = model.buffer();
        for row in &sol.states {
            report.max_state_norm = report.max_state_norm.max(math::norm2(row));
            let h = model.hamiltonian_buf(&mut eval_buf, row)?;
            if let Some(p) = prev {
                let rise: f64 = h - p;
                report.max_energy_rise = report.max_energy_rise.max(rise);
                if rise > cfg.rise_tol {
                    violated = true;
                }
            }
            prev = Some(h);
        }
        if violated {
            report.violations += 1;
        }
    }
    Ok(report)
}

// ── Metrics ─────────────────────────────────────────────────────────────

/// Root-mean-square error over paired state arrays.
pub fn rmse_states(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(crate::train::mse(a, b))
}

/// RMSE between two trajectories on the same grid.
pub fn rmse(a: &Trajectory, b: &Trajectory) -> Result<f64, VerifyError> {
    if a.len() != b.len() || a.state_dim() != b.state_dim() {
        return Err(VerifyError::GridMismatch);
    }
    for (ta, tb) in a.times().iter().zip(b.times()) {
        if math::abs(ta - tb) > 1e-9 * math::abs(*ta).max(1.0) {
            return Err(VerifyError::GridMismatch);
        }
    }
    Ok(rmse_states(a.states(), b.states()))
}

/// Interquartile mean: the average of all values between the first and
/// third quartiles (inclusive), quartiles by linear interpolation.  A
/// robust aggregate for scores across runs.
pub fn iqm(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores must not be NaN"));
    let quantile = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos as usize;
        let hi = (lo + 1).min(sorted.len() - 1);
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    };
    let (q1, q3) = (quantile(0.25), quantile(0.75));
    let mut acc = 0.0;
    let mut count = 0usize;
    for &v in &sorted {
        if v >= q1 && v <= q3 {
            acc += v;
            count += 1;
        }
    }
    if count == 0 {
        // Degenerate spacing: fall back to the median neighborhood.
        return Some(quantile(0.5));
    }
    Some(acc / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phs::ModelSpec;

    fn spec(kind: ModelKind) -> ModelSpec {
        let mut s = ModelSpec::new(kind, 3, 0);
        s.hidden = vec![6];
        s
    }

    #[test]
    fn fresh_convex_model_certifies_global_asymptotic() {
        let model = PhsModel::build(&spec(ModelKind::Sphnn), 4).unwrap();
        let cfg = VerifyConfig { n_samples: 200, ..Default::default() };
        let report = verify_stability(&model, &cfg).unwrap();
        assert_eq!(report.verdict, Verdict::CertifiedGlobalAsymptotic);
        assert_eq!(report.convexity_violations, 0);
        assert!(report.hessian_min_eig.unwrap() > 1e-8);
        // Fresh strict R has raw zeros → R = softplus(0)²·I.
        let r_min = report.r_min_eig_sampled.unwrap();
        let want = math::softplus(0.0) * math::softplus(0.0);
        assert!((r_min - want).abs() < 1e-12);
        assert!(!report.notes.is_empty());
    }

    #[test]
    fn semi_definite_damping_downgrades_to_bounded() {
        let mut s = spec(ModelKind::Sphnn);
        s.r_definiteness = Definiteness::Semi;
        let model = PhsModel::build(&s, 4).unwrap();
        let cfg = VerifyConfig { n_samples: 100, ..Default::default() };
        let report = verify_stability(&model, &cfg).unwrap();
        assert_eq!(report.verdict, Verdict::CertifiedStableBounded);
    }

    #[test]
    fn bphnn_is_bounded_phnn_is_not_certified_node_is_unsupported() {
        let cfg = VerifyConfig { n_samples: 50, ..Default::default() };
        let b = PhsModel::build(&spec(ModelKind::Bphnn), 1).unwrap();
        assert_eq!(verify_stability(&b, &cfg).unwrap().verdict, Verdict::CertifiedStableBounded);
        let p = PhsModel::build(&spec(ModelKind::Phnn), 1).unwrap();
        let rp = verify_stability(&p, &cfg).unwrap();
        assert_eq!(rp.verdict, Verdict::NotCertified);
        assert!(rp.hessian_min_eig.is_none());
        let n = PhsModel::build(&spec(ModelKind::Node), 1).unwrap();
        assert!(matches!(
            verify_stability(&n, &cfg),
            Err(VerifyError::Unsupported { kind: "node" })
        ));
    }

    #[test]
    fn learned_equilibrium_is_verified_where_it_sits() {
        let model = PhsModel::build(&spec(ModelKind::SphnnLm), 6).unwrap();
        let cfg = VerifyConfig { n_samples: 100, ..Default::default() };
        let report = verify_stability(&model, &cfg).unwrap();
        assert_eq!(report.equilibrium, model.xstar());
        assert!(matches!(
            report.verdict,
            Verdict::CertifiedGlobalAsymptotic | Verdict::CertifiedStableBounded
        ));
    }

    #[test]
    fn energy_balance_holds_to_rounding() {
        let mut s = ModelSpec::new(ModelKind::Sphnn, 3, 2);
        s.hidden = vec![5];
        s.j_mode = MatrixMode::StateDependent;
        s.g_mode = MatrixMode::StateDependent;
        let model = PhsModel::build(&s, 8).unwrap();
        let cfg = VerifyConfig { n_samples: 200, ..Default::default() };
        let audit = energy_audit(&model, &cfg).unwrap();
        assert_eq!(audit.samples, 200);
        assert!(
            audit.max_residual <= 1e-10,
            "power balance residual {:e} exceeds rounding-level tolerance",
            audit.max_residual
        );
    }

    #[test]
    fn probe_sees_no_energy_rise_on_a_dissipative_model() {
        let model = PhsModel::build(&spec(ModelKind::Sphnn), 4).unwrap();
        let cfg = ProbeConfig {
            radius: 3.0,
            horizon: 5.0,
            n_traj: 3,
            n_eval: 51,
            ..Default::default()
        };
        let report = boundedness_probe(&model, &cfg).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.max_energy_rise <= cfg.rise_tol);
        assert!(report.max_state_norm.is_finite());
        assert!(report.max_state_norm > 0.0);
    }

    #[test]
    fn rmse_and_grid_checks() {
        let a = Trajectory::new(vec![0.0, 1.0], vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let b = Trajectory::new(vec![0.0, 1.0], vec![2.0, 3.0, 4.0, 5.0], 2).unwrap();
        assert!((rmse(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let c = Trajectory::new(vec![0.0, 2.0], vec![2.0, 3.0, 4.0, 5.0], 2).unwrap();
        assert!(matches!(rmse(&a, &c), Err(VerifyError::GridMismatch)));
        let d = Trajectory::new(vec![0.0, 1.0], vec![1.0, 2.0], 1).unwrap();
        assert!(matches!(rmse(&a, &d), Err(VerifyError::GridMismatch)));
    }

    #[test]
    fn iqm_hand_values() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        // Q1 = 3.25, Q3 = 7.75 → mean of {4,5,6,7} = 5.5.
        assert!((iqm(&v).unwrap() - 5.5).abs() < 1e-12);
        assert_eq!(iqm(&[2.0]), Some(2.0));
        assert_eq!(iqm(&[]), None);
        let shuffled = [7.0, 1.0, 5.0, 3.0, 9.0, 2.0, 8.0, 4.0, 10.0, 6.0];
        assert!((iqm(&shuffled).unwrap() - 5.5).abs() < 1e-12);
    }
}
