//! End-to-end tests driving the real `sphs` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sphs_cli::checkpoint::load_checkpoint;
use sphs_core::phs::{ModelSpec, PhsModel};

fn sphs(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sphs"));
    cmd.args(args).env_remove("SPHS_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = sphs(args, &[]);
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn write_spec(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small spinning-body dataset + one trained checkpoint, shared per test.
fn small_pipeline(dir: &Path, train_steps: usize) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    let gen = write_spec(
        dir,
        "gen.json",
        &json!({
            "system": "spinning_body",
            "body": { "n_traj": 2, "t_end": 2.0, "dt": 0.1, "seed": 7 },
            "out": data,
        }),
    );
    run_ok(&["generate", "--spec", gen.to_str().unwrap()]);
    let model = dir.join("model");
    let train = write_spec(
        dir,
        "train.json",
        &json!({
            "model": { "kind": "sphnn", "state_dim": 3, "hidden": [8, 8] },
            "train": { "steps": train_steps, "lr": 1e-2, "batch_size": 32, "seed": 0 },
            "regime": "derivative",
            "data": { "pairs": data.join("pairs.csv") },
            "seed": 11,
            "out": model,
        }),
    );
    run_ok(&["train", "--spec", train.to_str().unwrap()]);
    (data, model)
}

#[test]
fn exit_codes_follow_the_error_taxonomy() {
    let dir = tempfile::tempdir().unwrap();
    // Missing spec file → data error.
    let out = sphs(&["train", "--spec", dir.path().join("nope.json").to_str().unwrap()], &[]);
    assert_eq!(exit_code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    // Spec missing a required field → config error.
    let bad = write_spec(dir.path(), "bad.json", &json!({ "model": { "kind": "sphnn" } }));
    let out = sphs(&["train", "--spec", bad.to_str().unwrap()], &[]);
    assert_eq!(exit_code(&out), 2);
    // Unknown key → config error (typos must not pass silently).
    let typo = write_spec(
        dir.path(),
        "typo.json",
        &json!({ "system": "spinning_body", "trajectoriez": 3 }),
    );
    let out = sphs(&["generate", "--spec", typo.to_str().unwrap()], &[]);
    assert_eq!(exit_code(&out), 2);
    // Missing data file → data error.
    let noeval = write_spec(
        dir.path(),
        "noeval.json",
        &json!({ "truth": dir.path().join("x.csv"), "predictions": [dir.path().join("x.csv")] }),
    );
    let out = sphs(&["eval", "--spec", noeval.to_str().unwrap()], &[]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn generate_is_deterministic_and_mu_zero_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "gen.json",
        &json!({
            "body": { "n_traj": 2, "t_end": 2.0, "dt": 0.1, "seed": 3 },
            "out": dir.path().join("a"),
        }),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["generate", "--spec", spec.to_str().unwrap()]);
    run_ok(&["generate", "--spec", spec.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    for name in ["traj_00.csv", "traj_01.csv", "pairs.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "same seed must reproduce {name} byte for byte");
    }

    let c = dir.path().join("c");
    run_ok(&[
        "generate",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
        "--mu",
        "0",
    ]);
    let (_, rows) = read_csv(&c.join("traj_00.csv"));
    let inertia = [1.0, 2.0, 3.0];
    let energy = |r: &[f64]| 0.5 * (0..3).map(|k| inertia[k] * r[k + 1] * r[k + 1]).sum::<f64>();
    let e0 = energy(&rows[0]);
    for r in &rows {
        assert!((energy(r) - e0).abs() <= 1e-10, "frictionless body must conserve energy");
    }
}

#[test]
fn pipeline_produces_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = small_pipeline(dir.path(), 60);
    let ck = model.join("checkpoint.json");
    assert!(ck.exists());
    let (_, hist) = read_csv(&model.join("history.csv"));
    assert_eq!(hist.len(), 60, "one loss row per training step");
    assert!(read_json(&model.join("report.json"))["stability"]["verdict"].is_string());

    // Predict on the grid of the first training trajectory.
    let truth = data.join("traj_00.csv");
    let pred_dir = dir.path().join("pred");
    let predict = write_spec(
        dir.path(),
        "predict.json",
        &json!({ "checkpoint": ck, "grid_from": truth, "out": pred_dir }),
    );
    run_ok(&["predict", "--spec", predict.to_str().unwrap()]);
    let (theader, trows) = read_csv(&truth);
    let (pheader, prows) = read_csv(&pred_dir.join("prediction.csv"));
    assert_eq!(pheader, theader);
    assert_eq!(prows.len(), trows.len(), "output row count equals requested grid length");
    assert!(read_json(&pred_dir.join("report.json"))["rmse"].is_number());

    // Eval: truth against itself is exactly zero and the energy column is
    // the rigid-body kinetic energy of the state row.
    let eval_dir = dir.path().join("eval");
    let eval = write_spec(
        dir.path(),
        "eval.json",
        &json!({
            "truth": truth,
            "predictions": [truth, pred_dir.join("prediction.csv")],
            "inertia": [1.0, 2.0, 3.0],
            "out": eval_dir,
        }),
    );
    run_ok(&["eval", "--spec", eval.to_str().unwrap()]);
    let metrics = read_json(&eval_dir.join("metrics.json"));
    assert_eq!(metrics["predictions"][0]["rmse"].as_f64().unwrap(), 0.0);
    assert!(metrics["rmse_iqm"].is_number());
    let (eheader, erows) = read_csv(&eval_dir.join("energy.csv"));
    assert_eq!(eheader, ["t", "e_truth", "e_iqm", "e_min", "e_max"]);
    let r0 = &trows[0];
    let want = 0.5 * (1.0 * r0[1] * r0[1] + 2.0 * r0[2] * r0[2] + 3.0 * r0[3] * r0[3]);
    assert_eq!(erows[0][1], want, "energy column is ½ Σ Iᵢ ωᵢ² of the state row");

    // Verify: trained sphnn certifies, and the report carries the probe.
    let verify_dir = dir.path().join("verify");
    let verify = write_spec(
        dir.path(),
        "verify.json",
        &json!({
            "checkpoint": ck,
            "probe": { "radius": 2.0, "horizon": 3.0, "n_traj": 2, "n_eval": 31 },
            "energy_audit": true,
            "out": verify_dir,
        }),
    );
    let out = run_ok(&["verify", "--spec", verify.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict: certified_global_asymptotic"));
    let report = read_json(&verify_dir.join("report.json"));
    assert_eq!(report["probe"]["violations"], 0);
    assert!(report["energy_audit"]["max_residual"].as_f64().unwrap() <= 1e-10);

    // Decompose: 2-D slice with the remaining dim at the anchor; per row the
    // three components sum to the rhs bit-exactly and the conservative part
    // is orthogonal to ∇H.
    let field_dir = dir.path().join("field");
    let decompose = write_spec(
        dir.path(),
        "decompose.json",
        &json!({ "checkpoint": ck, "grid": 5, "out": field_dir }),
    );
    run_ok(&["decompose", "--spec", decompose.to_str().unwrap()]);
    let (fheader, frows) = read_csv(&field_dir.join("field.csv"));
    assert_eq!(frows.len(), 25, "grid dims as configured");
    assert_eq!(fheader[0], "x1");
    assert_eq!(fheader[fheader.len() - 1], "cons_dot_gradh");
    let col = |name: &str| fheader.iter().position(|h| h == name).unwrap();
    for row in &frows {
        for d in 0..3 {
            let sum = row[col(&format!("cons{}", d + 1))]
                + row[col(&format!("diss{}", d + 1))]
                + row[col(&format!("inp{}", d + 1))];
            let rhs = row[col(&format!("rhs{}", d + 1))];
            assert_eq!(sum.to_bits(), rhs.to_bits(), "component sums equal rhs per row");
        }
        assert!(row[col("cons_dot_gradh")].abs() <= 1e-10);
    }
}

#[test]
fn steps_zero_checkpoint_equals_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = small_pipeline(dir.path(), 0);
    let (loaded, norm) = load_checkpoint(&model.join("checkpoint.json")).unwrap();
    assert!(norm.is_none());
    let mut spec = ModelSpec::new(sphs_core::phs::ModelKind::Sphnn, 3, 0);
    spec.hidden = vec![8, 8];
    let fresh = PhsModel::build(&spec, 11).unwrap();
    assert_eq!(fresh.params().values(), loaded.params().values());
    let (_, hist) = read_csv(&model.join("history.csv"));
    assert!(hist.is_empty(), "zero steps leaves an empty history");
}

#[test]
fn prediction_from_the_equilibrium_stays_there() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = small_pipeline(dir.path(), 0);
    let pred_dir = dir.path().join("pred");
    let predict = write_spec(
        dir.path(),
        "predict.json",
        &json!({
            "checkpoint": model.join("checkpoint.json"),
            "x0": [0.0, 0.0, 0.0],
            "t_end": 5.0,
            "dt": 0.5,
            "out": pred_dir,
        }),
    );
    run_ok(&["predict", "--spec", predict.to_str().unwrap()]);
    let (_, rows) = read_csv(&pred_dir.join("prediction.csv"));
    assert_eq!(rows.len(), 11);
    for r in &rows {
        for v in &r[1..] {
            assert!(v.abs() <= 1e-12, "x* is a fixed point of the learned flow");
        }
    }
}

#[test]
fn predict_requires_inputs_when_the_model_has_ports() {
    let dir = tempfile::tempdir().unwrap();
    let model_dir = dir.path().join("forced");
    let gen = write_spec(
        dir.path(),
        "genlin.json",
        &json!({ "system": "forced_linear", "linear": { "t_end": 2.0 }, "out": dir.path().join("lin") }),
    );
    run_ok(&["generate", "--spec", gen.to_str().unwrap()]);
    let train = write_spec(
        dir.path(),
        "trainlin.json",
        &json!({
            "model": {
                "kind": "sphnn", "state_dim": 2, "input_dim": 1, "hidden": [6, 6],
                "j_mode": "constant", "r_mode": "constant", "g_mode": "constant"
            },
            "train": { "steps": 0 },
            "regime": "derivative",
            "data": { "pairs": dir.path().join("lin").join("pairs.csv") },
            "out": model_dir,
        }),
    );
    run_ok(&["train", "--spec", train.to_str().unwrap()]);
    let predict = write_spec(
        dir.path(),
        "predlin.json",
        &json!({
            "checkpoint": model_dir.join("checkpoint.json"),
            "x0": [0.5, -0.3],
            "t_end": 1.0,
            "dt": 0.1,
            "out": dir.path().join("out"),
        }),
    );
    let out = sphs(&["predict", "--spec", predict.to_str().unwrap()], &[]);
    assert_eq!(exit_code(&out), 2, "a ported model must not silently assume u = 0");
    // With the training trajectory supplying u the same request runs.
    let predict = write_spec(
        dir.path(),
        "predlin2.json",
        &json!({
            "checkpoint": model_dir.join("checkpoint.json"),
            "grid_from": dir.path().join("lin").join("traj_00.csv"),
            "out": dir.path().join("out"),
        }),
    );
    run_ok(&["predict", "--spec", predict.to_str().unwrap()]);
    let (header, _) = read_csv(&dir.path().join("out").join("prediction.csv"));
    assert_eq!(header, ["t", "x1", "x2", "u1"], "ports appear in the output");
}

#[test]
fn multi_instance_training_honors_the_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = write_spec(
        dir.path(),
        "gen.json",
        &json!({
            "body": { "n_traj": 2, "t_end": 1.0, "dt": 0.1, "seed": 1 },
            "out": data,
        }),
    );
    run_ok(&["generate", "--spec", gen.to_str().unwrap()]);
    let spec = write_spec(
        dir.path(),
        "train.json",
        &json!({
            "model": { "kind": "sphnn", "state_dim": 3, "hidden": [4, 4] },
            "train": { "steps": 5, "batch_size": 8 },
            "data": { "pairs": data.join("pairs.csv") },
            "instances": 3,
            "seed": 40,
            "out": dir.path().join("multi"),
        }),
    );
    let out = sphs(&["train", "--spec", spec.to_str().unwrap()], &[("SPHS_THREADS", "2")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..3 {
        let ck = dir.path().join("multi").join(format!("instance_{k:02}")).join("checkpoint.json");
        let report = read_json(&ck)["seed"].as_u64().unwrap();
        assert_eq!(report, 40 + k, "instance seeds are consecutive");
    }
    let out = sphs(&["train", "--spec", spec.to_str().unwrap()], &[("SPHS_THREADS", "zero")]);
    assert_eq!(exit_code(&out), 2, "a malformed thread cap is a config error");
}
