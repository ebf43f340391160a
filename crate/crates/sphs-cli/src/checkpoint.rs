//! Model checkpoints: everything needed to rebuild a trained model exactly.
//!
//! The spec and the seed reconstruct the parameter layout; the stored value
//! array then overwrites the fresh initialization.  JSON numbers round-trip
//! `f64` bit-exactly (shortest-representation printing), so a loaded model
//! reproduces every output of the saved one to the last bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sphs_core::data::Normalizer;
use sphs_core::phs::{ModelSpec, PhsModel};
use sphs_core::pod::PodBasis;

use crate::error::CmdError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub seed: u64,
    pub params: Vec<f64>,
    /// Equilibrium echo for human readers; derived from spec + params.
    pub xstar: Option<Vec<f64>>,
    /// Present when the model was trained in normalized coordinates.
    pub normalizer: Option<Normalizer>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CmdError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CmdError::io(dir, e))?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CmdError::Config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CmdError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CmdError> {
    let text = fs::read_to_string(path).map_err(|e| CmdError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CmdError::Config(format!("{}: {e}", path.display())))
}

pub fn save_checkpoint(
    path: &Path,
    model: &PhsModel,
    normalizer: Option<&Normalizer>,
) -> Result<(), CmdError> {
    let ck = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        spec: model.spec().clone(),
        seed: model.seed(),
        params: model.params().values().to_vec(),
        xstar: model.xstar(),
        normalizer: normalizer.cloned(),
    };
    write_json(path, &ck)
}

pub fn load_checkpoint(path: &Path) -> Result<(PhsModel, Option<Normalizer>), CmdError> {
    let ck: Checkpoint = read_json(path)?;
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(CmdError::Config(format!(
            "{}: unsupported checkpoint version {} (this build reads {CHECKPOINT_VERSION})",
            path.display(),
            ck.format_version
        )));
    }
    let mut model = PhsModel::build(&ck.spec, ck.seed)?;
    if ck.params.len() != model.params().len() {
        return Err(CmdError::Config(format!(
            "{}: checkpoint has {} parameters but the spec builds {}",
            path.display(),
            ck.params.len(),
            model.params().len()
        )));
    }
    if ck.params.iter().any(|v| !v.is_finite()) {
        return Err(CmdError::Data(format!("{}: non-finite parameter", path.display())));
    }
    model.params_mut().values_mut().copy_from_slice(&ck.params);
    if let Some(norm) = &ck.normalizer {
        if norm.state_dim() != model.state_dim() {
            return Err(CmdError::Config(format!(
                "{}: normalizer covers {} state channels, model has {}",
                path.display(),
                norm.state_dim(),
                model.state_dim()
            )));
        }
    }
    Ok((model, ck.normalizer))
}

pub fn save_basis(path: &Path, basis: &PodBasis) -> Result<(), CmdError> {
    write_json(path, basis)
}

pub fn load_basis(path: &Path) -> Result<PodBasis, CmdError> {
    read_json(path)
}

/// Generic JSON report writer (metrics, stability reports, summaries).
pub fn write_report<T: Serialize>(path: &Path, value: &T) -> Result<(), CmdError> {
    write_json(path, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sphs_core::phs::ModelKind;

    #[test]
    fn checkpoint_round_trip_reproduces_outputs_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut spec = ModelSpec::new(ModelKind::SphnnLm, 3, 0);
        spec.hidden = vec![6, 6];
        let mut model = PhsModel::build(&spec, 42).unwrap();
        // Perturb away from init so the params array is doing real work.
        for (i, v) in model.params_mut().values_mut().iter_mut().enumerate() {
            *v += 1e-3 * ((i % 13) as f64 - 6.0) / 7.0;
        }
        save_checkpoint(&path, &model, None).unwrap();
        let (loaded, norm) = load_checkpoint(&path).unwrap();
        assert!(norm.is_none());
        assert_eq!(loaded.params().values().len(), model.params().values().len());
        for (a, b) in model.params().values().iter().zip(loaded.params().values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let x = [0.3, -0.7, 0.2];
        let a = model.rhs(&x, &[]).unwrap();
        let b = loaded.rhs(&x, &[]).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.to_bits(), q.to_bits(), "rhs must match bit for bit");
        }
        assert_eq!(model.xstar(), loaded.xstar());
    }

    #[test]
    fn version_and_length_mismatches_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let spec = ModelSpec::new(ModelKind::Phnn, 2, 0);
        let model = PhsModel::build(&spec, 0).unwrap();
        save_checkpoint(&path, &model, None).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 99");
        std::fs::write(&path, bumped).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");

        let mut ck: Checkpoint = serde_json::from_str(&text).unwrap();
        ck.params.pop();
        std::fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }

    #[test]
    fn basis_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.json");
        let snaps = vec![
            4.0, 0.0, 0.0, 0.0, //
            0.0, 3.0, 0.0, 0.0, //
            0.0, 0.0, 2.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ];
        let basis = sphs_core::pod::pod_fit(&snaps, 4, 2).unwrap();
        save_basis(&path, &basis).unwrap();
        let back = load_basis(&path).unwrap();
        assert_eq!(basis, back);
    }
}
