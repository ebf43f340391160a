//! The subcommand implementations behind the `sphs` binary.  Each takes a
//! deserialized run spec and leaves its results under the spec's output
//! directory; nothing here keeps state between runs.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use sphs_core::data::{
    add_noise, euler_pairs, gen_spinning_body, rigid_body_rhs, rigid_energy, DerivativeSet,
    Normalizer, Trajectory,
};
use sphs_core::linalg;
use sphs_core::ode::{self, InputSignal, IntegrationConfig, Solver};
use sphs_core::phs::{ModelKind, PhsModel};
use sphs_core::pod::pod_fit;
use sphs_core::train::{self, TrainConfig, TrainHistory};
use sphs_core::verify::{
    boundedness_probe, energy_audit, iqm, verify_stability, EnergyAudit, ProbeReport,
    StabilityReport, Verdict, VerifyConfig,
};

use crate::checkpoint::{load_basis, load_checkpoint, save_basis, save_checkpoint, write_report};
use crate::csvio;
use crate::error::CmdError;
use crate::spec::{
    DecomposeSpec, EvalSpec, GenerateSpec, PodSpec, PredictSpec, Regime, SystemKind, TrainSpec,
    VerifySpec,
};

fn numbered_path(dir: &Path, stem: &str, i: usize) -> PathBuf {
    dir.join(format!("{stem}_{i:02}.csv"))
}

fn uniform_grid(t_end: f64, dt: f64) -> Result<Vec<f64>, CmdError> {
    if !(dt > 0.0) || !(t_end > 0.0) || !dt.is_finite() || !t_end.is_finite() {
        return Err(CmdError::Config("t_end and dt must be positive and finite".into()));
    }
    let steps = ((t_end / dt).round() as usize).max(1);
    Ok((0..=steps).map(|i| i as f64 * dt).collect())
}

// ── generate ────────────────────────────────────────────────────────────

pub fn generate(spec: &GenerateSpec) -> Result<(), CmdError> {
    match spec.system {
        SystemKind::SpinningBody => generate_spinning(spec),
        SystemKind::ForcedLinear => generate_linear(spec),
    }
}

/// Trajectories from the adaptive reference solver, derivative pairs from
/// the exact right-hand side at the sampled states.
fn generate_spinning(spec: &GenerateSpec) -> Result<(), CmdError> {
    let cfg = &spec.body;
    let trajs = gen_spinning_body(cfg)?;
    let mut set = DerivativeSet { state_dim: 3, ..Default::default() };
    let mut rhs = [0.0; 3];
    for (i, tr) in trajs.iter().enumerate() {
        csvio::write_trajectory(&numbered_path(&spec.out, "traj", i), tr)?;
        for k in 0..tr.len() {
            let x = tr.state(k);
            rigid_body_rhs(&cfg.inertia, cfg.mu, x, &mut rhs);
            set.x.extend_from_slice(x);
            set.dxdt.extend_from_slice(&rhs);
            set.rows += 1;
        }
    }
    csvio::write_derivative_set(&spec.out.join("pairs.csv"), &set)
}

fn generate_linear(spec: &GenerateSpec) -> Result<(), CmdError> {
    let sys = &spec.linear;
    let (j, r, q, g) = sys.matrices()?;
    let n = sys.state_dim;
    let m = sys.input_dim;
    // Drift matrix A = (J − R) Q.
    let mut a = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += (j[row * n + k] - r[row * n + k]) * q[k * n + col];
            }
            a[row * n + col] = acc;
        }
    }
    let times = uniform_grid(sys.t_end, sys.dt)?;
    let solver = Solver::Tsit5(IntegrationConfig {
        rtol: sys.rtol,
        atol: sys.atol,
        ..Default::default()
    });
    let rhs_at = |x: &[f64], uv: f64, dx: &mut [f64]| {
        linalg::mat_vec(&a, x, n, n, dx);
        for row in 0..n {
            for c in 0..m {
                dx[row] += g[row * m + c] * uv;
            }
        }
    };
    let mut set =
        DerivativeSet { state_dim: n, input_dim: m, ..Default::default() };
    let mut dx = vec![0.0; n];
    for (i, x0) in sys.x0.iter().enumerate() {
        let mut f = |t: f64, x: &[f64], dx: &mut [f64]| rhs_at(x, sys.input.eval(t), dx);
        let sol = ode::integrate(&mut f, x0, &times, &solver)?;
        let mut states = Vec::with_capacity(times.len() * n);
        let mut inputs = Vec::with_capacity(times.len() * m);
        for (k, row) in sol.states.iter().enumerate() {
            let uv = sys.input.eval(times[k]);
            states.extend_from_slice(row);
            inputs.extend(core::iter::repeat(uv).take(m));
            rhs_at(row, uv, &mut dx);
            set.x.extend_from_slice(row);
            set.u.extend(core::iter::repeat(uv).take(m));
            set.dxdt.extend_from_slice(&dx);
            set.rows += 1;
        }
        let tr = if m > 0 {
            Trajectory::with_inputs(times.clone(), states, n, inputs, m)?
        } else {
            Trajectory::new(times.clone(), states, n)?
        };
        csvio::write_trajectory(&numbered_path(&spec.out, "traj", i), &tr)?;
    }
    csvio::write_derivative_set(&spec.out.join("pairs.csv"), &set)
}

// ── train ───────────────────────────────────────────────────────────────

/// Model state indices the data columns map to (the default is the leading
/// block, leaving trailing dims as learned latents).
fn observed_indices(n_model: usize, cfg: &TrainConfig) -> Result<Vec<usize>, CmdError> {
    if cfg.augmented_dims >= n_model {
        return Err(CmdError::Config(
            "augmented_dims must leave at least one observed state dim".into(),
        ));
    }
    let n_obs = n_model - cfg.augmented_dims;
    match &cfg.observed {
        None => Ok((0..n_obs).collect()),
        Some(list) if list.len() == n_obs && list.iter().all(|&i| i < n_model) => Ok(list.clone()),
        Some(_) => Err(CmdError::Config(
            "observed must list state_dim - augmented_dims model dims".into(),
        )),
    }
}

/// Spread a normalizer fitted on observed channels over the full model
/// state, leaving latent channels untouched (shift 0, scale 1).
fn extend_normalizer(
    base: &Normalizer,
    n_model: usize,
    observed: &[usize],
) -> Result<Normalizer, CmdError> {
    if base.state_dim() == n_model {
        return Ok(base.clone());
    }
    if base.state_dim() != observed.len() {
        return Err(CmdError::Config(format!(
            "normalizer covers {} channels but {} dims are observed",
            base.state_dim(),
            observed.len()
        )));
    }
    let mut full = Normalizer::identity(n_model, base.input_dim());
    full.input_shift = base.input_shift.clone();
    full.input_scale = base.input_scale.clone();
    for (k, &i) in observed.iter().enumerate() {
        full.state_shift[i] = base.state_shift[k];
        full.state_scale[i] = base.state_scale[k];
    }
    Ok(full)
}

/// Fit a normalizer when only derivative pairs exist: the pair states stand
/// in for trajectory samples (row order carries no time meaning here).
fn normalizer_from_set(
    set: &DerivativeSet,
    equilibrium: Option<&[f64]>,
) -> Result<Normalizer, CmdError> {
    let times: Vec<f64> = (0..set.rows).map(|i| i as f64).collect();
    let tr = if set.input_dim > 0 {
        Trajectory::with_inputs(times, set.x.clone(), set.state_dim, set.u.clone(), set.input_dim)
    } else {
        Trajectory::new(times, set.x.clone(), set.state_dim)
    }?;
    Ok(Normalizer::fit(core::slice::from_ref(&tr), equilibrium)?)
}

enum Prepared {
    Derivative(DerivativeSet),
    Trajectory(Vec<Trajectory>),
}

fn thread_cap() -> Result<usize, CmdError> {
    match std::env::var("SPHS_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CmdError::Config(format!(
                "SPHS_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(std::env::VarError::NotPresent) => {
            Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        }
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(CmdError::Config("SPHS_THREADS must be a positive integer".into()))
        }
    }
}

#[derive(Serialize)]
struct TrainReport {
    seed: u64,
    steps: usize,
    final_loss: Option<f64>,
    wall_seconds: f64,
    stability: Option<StabilityReport>,
}

fn train_instance(
    spec: &TrainSpec,
    prepared: &Prepared,
    norm: Option<&Normalizer>,
    k: usize,
    dir: &Path,
) -> Result<(), CmdError> {
    let seed = spec.seed.wrapping_add(k as u64);
    let mut model = PhsModel::build(&spec.model, seed)?;
    let history = if spec.train.steps == 0 {
        // Zero steps is a valid request: the checkpoint is the untouched
        // initialization (useful as a baseline and for layout debugging).
        TrainHistory::default()
    } else {
        match prepared {
            Prepared::Derivative(set) => train::fit_derivative(&mut model, set, &spec.train)?,
            Prepared::Trajectory(trajs) => train::fit_trajectory(&mut model, trajs, &spec.train)?,
        }
    };
    save_checkpoint(&dir.join("checkpoint.json"), &model, norm)?;
    let mut hist_csv = String::from("step,loss\n");
    for (i, loss) in history.losses.iter().enumerate() {
        hist_csv.push_str(&format!("{i},{loss:.16e}\n"));
    }
    csvio::write_file(&dir.join("history.csv"), &hist_csv)?;
    let stability = if matches!(spec.model.kind, ModelKind::Node) {
        None
    } else {
        Some(verify_stability(&model, &VerifyConfig::default())?)
    };
    write_report(
        &dir.join("report.json"),
        &TrainReport {
            seed,
            steps: history.losses.len(),
            final_loss: history.losses.last().copied(),
            wall_seconds: history.wall_seconds,
            stability,
        },
    )
}

pub fn train(spec: &TrainSpec) -> Result<(), CmdError> {
    if spec.instances == 0 {
        return Err(CmdError::Config("instances must be at least 1".into()));
    }
    if !spec.noise_percent.is_finite() || spec.noise_percent < 0.0 {
        return Err(CmdError::Config("noise_percent must be finite and >= 0".into()));
    }
    let mut trajs = Vec::with_capacity(spec.data.trajectories.len());
    for p in &spec.data.trajectories {
        trajs.push(csvio::read_trajectory(p)?);
    }
    if spec.noise_percent > 0.0 {
        if spec.data.pairs.is_some() {
            return Err(CmdError::Config(
                "noise injection needs trajectory data; drop the pairs file so derivative \
                 targets are rebuilt from the noisy states"
                    .into(),
            ));
        }
        if trajs.is_empty() {
            return Err(CmdError::Config("noise injection needs trajectory files".into()));
        }
        add_noise(&mut trajs, spec.noise_percent, spec.noise_seed)?;
    }

    // Training data per regime, in raw units for now.
    let mut prepared = match spec.regime {
        Regime::Derivative => Prepared::Derivative(match &spec.data.pairs {
            Some(p) => csvio::read_derivative_set(p)?,
            None if !trajs.is_empty() => euler_pairs(&trajs)?,
            None => {
                return Err(CmdError::Config(
                    "derivative regime needs a pairs file or trajectory files".into(),
                ))
            }
        }),
        Regime::Trajectory => {
            if trajs.is_empty() {
                return Err(CmdError::Config(
                    "trajectory regime needs at least one trajectory file".into(),
                ));
            }
            Prepared::Trajectory(trajs.clone())
        }
    };

    // Normalization: fitted on observed channels, stored over the full
    // model state so checkpoints are self-contained.
    let observed = observed_indices(spec.model.state_dim, &spec.train)?;
    let norm_full = if spec.normalize {
        let base = if !trajs.is_empty() {
            Normalizer::fit(&trajs, spec.equilibrium.as_deref())?
        } else if let Prepared::Derivative(set) = &prepared {
            normalizer_from_set(set, spec.equilibrium.as_deref())?
        } else {
            unreachable!("trajectory regime requires trajectory files");
        };
        match &mut prepared {
            Prepared::Derivative(set) => base.apply_derivative_set(set),
            Prepared::Trajectory(trajs) => {
                for tr in trajs.iter_mut() {
                    *tr = base.apply(tr)?;
                }
            }
        }
        Some(extend_normalizer(&base, spec.model.state_dim, &observed)?)
    } else {
        None
    };

    let dirs: Vec<PathBuf> = if spec.instances == 1 {
        vec![spec.out.clone()]
    } else {
        (0..spec.instances).map(|k| spec.out.join(format!("instance_{k:02}"))).collect()
    };
    let workers = thread_cap()?.min(spec.instances);
    if workers <= 1 {
        for (k, dir) in dirs.iter().enumerate() {
            train_instance(spec, &prepared, norm_full.as_ref(), k, dir)?;
        }
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let failures: Mutex<Vec<(usize, CmdError)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= dirs.len() {
                    break;
                }
                if let Err(e) = train_instance(spec, &prepared, norm_full.as_ref(), k, &dirs[k]) {
                    failures.lock().unwrap().push((k, e));
                }
            });
        }
    });
    let mut fails = failures.into_inner().unwrap();
    fails.sort_by_key(|(k, _)| *k);
    match fails.into_iter().next() {
        None => Ok(()),
        Some((k, e)) => Err(match e {
            CmdError::Config(m) => CmdError::Config(format!("instance {k}: {m}")),
            CmdError::Data(m) => CmdError::Data(format!("instance {k}: {m}")),
            CmdError::Numerical(m) => CmdError::Numerical(format!("instance {k}: {m}")),
        }),
    }
}

// ── predict ─────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct PredictReport {
    rmse: Option<f64>,
    steps_accepted: usize,
    steps_rejected: usize,
    rhs_evals: usize,
}

/// RMSE over the leading `truth.state_dim()` columns of the prediction
/// (trailing prediction dims are latents the data never observed).
fn rmse_observed(truth: &Trajectory, pred: &Trajectory) -> (f64, Vec<f64>) {
    let n = truth.state_dim();
    let rows = truth.len();
    let mut per_dim = vec![0.0; n];
    for i in 0..rows {
        let a = truth.state(i);
        let b = pred.state(i);
        for d in 0..n {
            let e = a[d] - b[d];
            per_dim[d] += e * e;
        }
    }
    let total = (per_dim.iter().sum::<f64>() / (rows * n) as f64).sqrt();
    for v in per_dim.iter_mut() {
        *v = (*v / rows as f64).sqrt();
    }
    (total, per_dim)
}

fn check_grid_match(truth: &Trajectory, pred: &Trajectory, path: &Path) -> Result<(), CmdError> {
    if pred.len() != truth.len() {
        return Err(CmdError::Data(format!(
            "{}: {} rows, expected {}",
            path.display(),
            pred.len(),
            truth.len()
        )));
    }
    for (a, b) in truth.times().iter().zip(pred.times()) {
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(CmdError::Data(format!(
                "{}: time grid differs from the reference (t={a} vs t={b})",
                path.display()
            )));
        }
    }
    if pred.state_dim() < truth.state_dim() {
        return Err(CmdError::Data(format!(
            "{}: {} state columns, reference has {}",
            path.display(),
            pred.state_dim(),
            truth.state_dim()
        )));
    }
    Ok(())
}

pub fn predict(spec: &PredictSpec) -> Result<(), CmdError> {
    let (model, norm) = load_checkpoint(&spec.checkpoint)?;
    let norm =
        norm.unwrap_or_else(|| Normalizer::identity(model.state_dim(), model.input_dim()));
    let n = model.state_dim();
    let m = model.input_dim();

    let reference = spec.grid_from.as_deref().map(csvio::read_trajectory).transpose()?;
    let ic_file = spec.ic_from.as_deref().map(csvio::read_trajectory).transpose()?;

    let times: Vec<f64> = match &reference {
        Some(tr) => tr.times().to_vec(),
        None => uniform_grid(spec.t_end, spec.dt)?,
    };

    let x0_obs: Vec<f64> = if let Some(x0) = &spec.x0 {
        x0.clone()
    } else if let Some(tr) = &ic_file {
        tr.state(0).to_vec()
    } else if let Some(tr) = &reference {
        tr.state(0).to_vec()
    } else {
        return Err(CmdError::Config("predict needs x0, ic_from, or grid_from".into()));
    };
    if x0_obs.len() > n || x0_obs.is_empty() {
        return Err(CmdError::Config(format!(
            "initial state has {} entries, model has {n} state dims",
            x0_obs.len()
        )));
    }
    // Latent (augmented) dims start at zero, matching how they trained.
    let mut x0 = vec![0.0; n];
    x0[..x0_obs.len()].copy_from_slice(&x0_obs);

    // Input signal in raw units.  A model with ports refuses to guess.
    let interp = spec.interp.into();
    let signal: Option<InputSignal> = if m == 0 {
        None
    } else if let Some(p) = &spec.input {
        Some(csvio::read_input_signal(p, interp)?)
    } else if let Some(sig) = reference.as_ref().and_then(|tr| tr.input_signal(interp)) {
        Some(sig)
    } else if let Some(sig) = ic_file.as_ref().and_then(|tr| tr.input_signal(interp)) {
        Some(sig)
    } else {
        return Err(CmdError::Config(format!(
            "model has {m} input channel(s); provide an input CSV or a trajectory with inputs"
        )));
    };
    if let Some(sig) = &signal {
        if sig.dim() != m {
            return Err(CmdError::Data(format!(
                "input signal has {} channels, model needs {m}",
                sig.dim()
            )));
        }
    }

    // Integrate in the model's own (normalized) coordinates.
    let mut z0 = x0.clone();
    norm.normalize_state(&mut z0);
    let mut buf = model.buffer();
    let mut u_raw = vec![0.0; m];
    let mut u_n = vec![0.0; m];
    let mut f = |t: f64, z: &[f64], dz: &mut [f64]| {
        if let Some(sig) = &signal {
            sig.eval(t, &mut u_raw);
            u_n.copy_from_slice(&u_raw);
            norm.normalize_input(&mut u_n);
        }
        model.rhs_buf(&mut buf, z, &u_n, dz).expect("dimensions validated");
    };
    let sol = ode::integrate(&mut f, &z0, &times, &Solver::Tsit5(spec.integration.clone()))?;
    drop(f);

    let mut states = Vec::with_capacity(times.len() * n);
    let mut row = vec![0.0; n];
    for z in &sol.states {
        row.copy_from_slice(z);
        norm.denormalize_state(&mut row);
        states.extend_from_slice(&row);
    }
    let prediction = match &signal {
        Some(sig) => {
            let mut inputs = Vec::with_capacity(times.len() * m);
            let mut u = vec![0.0; m];
            for &t in &times {
                sig.eval(t, &mut u);
                inputs.extend_from_slice(&u);
            }
            Trajectory::with_inputs(times.clone(), states, n, inputs, m)?
        }
        None => Trajectory::new(times.clone(), states, n)?,
    };
    csvio::write_trajectory(&spec.out.join("prediction.csv"), &prediction)?;

    let rmse = reference.as_ref().map(|tr| rmse_observed(tr, &prediction).0);
    write_report(
        &spec.out.join("report.json"),
        &PredictReport {
            rmse,
            steps_accepted: sol.stats.steps_accepted,
            steps_rejected: sol.stats.steps_rejected,
            rhs_evals: sol.stats.rhs_evals,
        },
    )
}

// ── eval ────────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct PredictionMetrics {
    path: String,
    rmse: f64,
    rmse_per_dim: Vec<f64>,
}

#[derive(Serialize)]
struct EvalReport {
    truth: String,
    rows: usize,
    observed_dims: usize,
    predictions: Vec<PredictionMetrics>,
    rmse_iqm: Option<f64>,
    rmse_min: Option<f64>,
    rmse_max: Option<f64>,
}

pub fn eval(spec: &EvalSpec) -> Result<(), CmdError> {
    if spec.predictions.is_empty() {
        return Err(CmdError::Config("eval needs at least one prediction file".into()));
    }
    let truth = csvio::read_trajectory(&spec.truth)?;
    let mut preds = Vec::with_capacity(spec.predictions.len());
    for p in &spec.predictions {
        let tr = csvio::read_trajectory(p)?;
        check_grid_match(&truth, &tr, p)?;
        preds.push(tr);
    }

    let mut metrics = Vec::new();
    let mut totals = Vec::new();
    for (tr, p) in preds.iter().zip(&spec.predictions) {
        let (total, per_dim) = rmse_observed(&truth, tr);
        totals.push(total);
        metrics.push(PredictionMetrics {
            path: p.display().to_string(),
            rmse: total,
            rmse_per_dim: per_dim,
        });
    }
    write_report(
        &spec.out.join("metrics.json"),
        &EvalReport {
            truth: spec.truth.display().to_string(),
            rows: truth.len(),
            observed_dims: truth.state_dim(),
            predictions: metrics,
            rmse_iqm: iqm(&totals),
            rmse_min: totals.iter().copied().reduce(f64::min),
            rmse_max: totals.iter().copied().reduce(f64::max),
        },
    )?;

    // Optional spinning-body energy table: truth energy plus the
    // interquartile mean and range of the predicted energies per time point.
    if let Some(inertia) = &spec.inertia {
        if truth.state_dim() < 3 {
            return Err(CmdError::Config(
                "rigid-body energy needs at least 3 state columns".into(),
            ));
        }
        let mut rows = Vec::with_capacity(truth.len());
        let mut e_pred = vec![0.0; preds.len()];
        for i in 0..truth.len() {
            let e_truth = rigid_energy(inertia, &truth.state(i)[..3]);
            for (k, tr) in preds.iter().enumerate() {
                e_pred[k] = rigid_energy(inertia, &tr.state(i)[..3]);
            }
            let e_iqm = iqm(&e_pred).unwrap_or(e_pred[0]);
            let e_min = e_pred.iter().copied().fold(f64::INFINITY, f64::min);
            let e_max = e_pred.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            rows.push(vec![truth.times()[i], e_truth, e_iqm, e_min, e_max]);
        }
        let header: Vec<String> =
            ["t", "e_truth", "e_iqm", "e_min", "e_max"].iter().map(|s| s.to_string()).collect();
        csvio::write_table(&spec.out.join("energy.csv"), &header, &rows)?;
    }
    Ok(())
}

// ── verify ──────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct FullVerifyReport {
    stability: StabilityReport,
    probe: Option<ProbeReport>,
    energy_audit: Option<EnergyAudit>,
}

fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::CertifiedGlobalAsymptotic => "certified_global_asymptotic",
        Verdict::CertifiedStableBounded => "certified_stable_bounded",
        Verdict::NotCertified => "not_certified",
    }
}

pub fn verify(spec: &VerifySpec) -> Result<(), CmdError> {
    let (model, _norm) = load_checkpoint(&spec.checkpoint)?;
    let stability = verify_stability(&model, &spec.verify)?;
    let probe = spec.probe.as_ref().map(|p| boundedness_probe(&model, p)).transpose()?;
    let audit =
        if spec.energy_audit { Some(energy_audit(&model, &spec.verify)?) } else { None };
    println!("verdict: {}", verdict_name(&stability.verdict));
    write_report(
        &spec.out.join("report.json"),
        &FullVerifyReport { stability, probe, energy_audit: audit },
    )
}

// ── decompose ───────────────────────────────────────────────────────────

pub fn decompose(spec: &DecomposeSpec) -> Result<(), CmdError> {
    let (model, _norm) = load_checkpoint(&spec.checkpoint)?;
    let n = model.state_dim();
    let m = model.input_dim();
    let [di, dj] = spec.dims;
    if di == dj || di >= n || dj >= n {
        return Err(CmdError::Config(format!(
            "dims must name two distinct state indices below {n}"
        )));
    }
    if !(spec.range[1] > spec.range[0])
        || !spec.range[0].is_finite()
        || !spec.range[1].is_finite()
    {
        return Err(CmdError::Config("range must be a finite increasing pair".into()));
    }
    if spec.grid < 2 {
        return Err(CmdError::Config("grid needs at least 2 points per axis".into()));
    }
    let anchor = match &spec.anchor {
        Some(a) if a.len() == n => a.clone(),
        Some(a) => {
            return Err(CmdError::Config(format!(
                "anchor has {} entries, model has {n} state dims",
                a.len()
            )))
        }
        None => model.xstar().unwrap_or_else(|| vec![0.0; n]),
    };
    let u = match &spec.u {
        Some(u) if u.len() == m => u.clone(),
        Some(u) => {
            return Err(CmdError::Config(format!(
                "u has {} entries, model has {m} input dims",
                u.len()
            )))
        }
        None => vec![0.0; m],
    };

    let mut header = vec![format!("x{}", di + 1), format!("x{}", dj + 1)];
    for part in ["cons", "diss", "inp", "rhs"] {
        for d in 0..n {
            header.push(format!("{part}{}", d + 1));
        }
    }
    header.push("cons_dot_gradh".into());

    let g = spec.grid;
    let step = (spec.range[1] - spec.range[0]) / (g - 1) as f64;
    let mut rows = Vec::with_capacity(g * g);
    let mut x = anchor.clone();
    let mut buf = model.buffer();
    let mut grad = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for a in 0..g {
        let va = spec.range[0] + a as f64 * step;
        for b in 0..g {
            let vb = spec.range[0] + b as f64 * step;
            x.copy_from_slice(&anchor);
            x[di] = va;
            x[dj] = vb;
            let parts = model.decompose_buf(&mut buf, &x, &u)?;
            model.grad_hamiltonian_buf(&mut buf, &x, &mut grad)?;
            model.rhs_buf(&mut buf, &x, &u, &mut rhs)?;
            let dot: f64 = parts.conservative.iter().zip(&grad).map(|(a, b)| a * b).sum();
            let mut row = Vec::with_capacity(header.len());
            row.push(va);
            row.push(vb);
            row.extend_from_slice(&parts.conservative);
            row.extend_from_slice(&parts.dissipative);
            row.extend_from_slice(&parts.input);
            row.extend_from_slice(&rhs);
            row.push(dot);
            rows.push(row);
        }
    }
    csvio::write_table(&spec.out.join("field.csv"), &header, &rows)
}

// ── pod ─────────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct PodFitReport {
    n_full: usize,
    n_modes: usize,
    snapshots: usize,
    reconstruction_rmse: f64,
    /// `sqrt(Σ discarded σ² / (rows · n_full))` — what the kept modes can
    /// never recover, in the same units as the reconstruction RMSE.
    discarded_energy_bound: f64,
    singular_values: Vec<f64>,
}

fn file_stem(path: &Path) -> Result<String, CmdError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| CmdError::Config(format!("no file stem in {}", path.display())))
}

pub fn pod(spec: &PodSpec) -> Result<(), CmdError> {
    let basis = match (&spec.fit, &spec.basis) {
        (Some(_), Some(_)) => {
            return Err(CmdError::Config("give either fit or basis, not both".into()))
        }
        (None, None) => {
            return Err(CmdError::Config("pod needs a fit block or a basis path".into()))
        }
        (None, Some(path)) => load_basis(path)?,
        (Some(fit), None) => {
            let snaps = csvio::read_trajectory(&fit.snapshots)?;
            let n_full = snaps.state_dim();
            let mut basis = pod_fit(snaps.states(), n_full, fit.n_modes)?;
            if let Some(eq) = &fit.equilibrium {
                basis.set_equilibrium(eq)?;
            }
            let rows = snaps.len();
            let mut sse = 0.0;
            let mut z = vec![0.0; basis.n_modes];
            let mut y = vec![0.0; n_full];
            for i in 0..rows {
                basis.encode(snaps.state(i), &mut z)?;
                basis.decode(&z, &mut y)?;
                sse += snaps.state(i).iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            let discarded: f64 =
                basis.singular_values.iter().skip(basis.n_modes).map(|s| s * s).sum();
            let denom = (rows * n_full) as f64;
            write_report(
                &spec.out.join("fit_report.json"),
                &PodFitReport {
                    n_full,
                    n_modes: basis.n_modes,
                    snapshots: rows,
                    reconstruction_rmse: (sse / denom).sqrt(),
                    discarded_energy_bound: (discarded / denom).sqrt(),
                    singular_values: basis.singular_values.clone(),
                },
            )?;
            save_basis(&spec.out.join("basis.json"), &basis)?;
            basis
        }
    };
    for path in &spec.encode {
        let tr = csvio::read_trajectory(path)?;
        let latent = basis.encode_trajectory(&tr)?;
        let name = format!("latent_{}.csv", file_stem(path)?);
        csvio::write_trajectory(&spec.out.join(name), &latent)?;
    }
    for path in &spec.decode {
        let tr = csvio::read_trajectory(path)?;
        let field = basis.decode_trajectory(&tr)?;
        let name = format!("field_{}.csv", file_stem(path)?);
        csvio::write_trajectory(&spec.out.join(name), &field)?;
    }
    Ok(())
}
