//! Proper orthogonal decomposition for model-order reduction: fit an
//! orthogonal basis to high-dimensional snapshots via the smaller of the
//! two Gram matrices, then move between full and reduced coordinates.
//!
//! The stored modes are scaled by a single constant `c` chosen so encoded
//! snapshot coordinates have unit population variance — reduced models then
//! train on O(1) numbers regardless of the physical units of the snapshots.
//! With `M = c·Ṽ` (orthonormal `Ṽ`):
//!
//! ```text
//! encode(y) = (1/c²) Mᵀ y − shift        decode(x) = M (x + shift)
//! ```
//!
//! so `decode(encode(y))` is exactly the orthogonal projection of `y` onto
//! the mode subspace, and `shift` places a chosen full-space equilibrium at
//! the reduced-space origin (where the stable model families pin theirs).

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{DataError, Trajectory};
use crate::linalg::{self, LinalgError};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub enum PodError {
    Empty,
    /// Snapshot buffer length is not a multiple of the state dimension.
    Shape { len: usize, n_full: usize },
    DimZero,
    /// Requested more modes than `min(#snapshots, n_full)` or than the
    /// numerical rank supports.
    TooManyModes { requested: usize, available: usize },
    /// Snapshots carry (numerically) no signal.
    ZeroVariance,
    Eig(LinalgError),
    /// Vector passed to encode/decode has the wrong length.
    VecLength { expected: usize, got: usize },
}

impl core::fmt::Display for PodError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PodError::Empty => write!(f, "no snapshots"),
            PodError::Shape { len, n_full } => {
                write!(f, "snapshot buffer of {len} values is not a multiple of n_full {n_full}")
            }
            PodError::DimZero => write!(f, "dimensions must be at least 1"),
            PodError::TooManyModes { requested, available } => {
                write!(f, "{requested} modes requested but only {available} available")
            }
            PodError::ZeroVariance => write!(f, "snapshots have no variance to decompose"),
            PodError::Eig(e) => write!(f, "eigendecomposition failed: {e}"),
            PodError::VecLength { expected, got } => {
                write!(f, "vector has length {got}, expected {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PodError {}

impl From<LinalgError> for PodError {
    fn from(e: LinalgError) -> Self {
        PodError::Eig(e)
    }
}

/// A fitted reduced basis.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PodBasis {
    pub n_full: usize,
    pub n_modes: usize,
    /// Row-major `n_full × n_modes`; column `j` is mode `j` scaled by `c`.
    pub modes: Vec<f64>,
    /// Coordinate scale: `MᵀM = c²·I`.
    pub c: f64,
    /// Reduced-space offset subtracted on encode (see `set_equilibrium`).
    pub shift: Vec<f64>,
    /// All singular values of the snapshot matrix, descending (length
    /// `min(#snapshots, n_full)`), kept for energy diagnostics.
    pub singular_values: Vec<f64>,
}

/// Fit `n_modes` modes to row-major `#snapshots × n_full` data.  Uses the
/// eigendecomposition of the smaller Gram matrix (`AᵀA` or `AAᵀ`), so cost
/// scales with `min(#snapshots, n_full)³`.
pub fn pod_fit(snapshots: &[f64], n_full: usize, n_modes: usize) -> Result<PodBasis, PodError> {
    if n_full == 0 || n_modes == 0 {
        return Err(PodError::DimZero);
    }
    if snapshots.is_empty() {
        return Err(PodError::Empty);
    }
    if snapshots.len() % n_full != 0 {
        return Err(PodError::Shape { len: snapshots.len(), n_full });
    }
    let rows = snapshots.len() / n_full;
    let dim = rows.min(n_full);
    if n_modes > dim {
        return Err(PodError::TooManyModes { requested: n_modes, available: dim });
    }
    let a = snapshots;
    let cols_side = n_full <= rows;

    let mut gram = vec![0.0; dim * dim];
    if cols_side {
        // G = AᵀA (n_full × n_full).
        for p in 0..dim {
            for q in p..dim {
                let mut acc = 0.0;
                for r in 0..rows {
                    acc += a[r * n_full + p] * a[r * n_full + q];
                }
                gram[p * dim + q] = acc;
                gram[q * dim + p] = acc;
            }
        }
    } else {
        // G = AAᵀ (rows × rows).
        for p in 0..dim {
            for q in p..dim {
                let mut acc = 0.0;
                for c in 0..n_full {
                    acc += a[p * n_full + c] * a[q * n_full + c];
                }
                gram[p * dim + q] = acc;
                gram[q * dim + p] = acc;
            }
        }
    }

    let eig = linalg::jacobi_eigh(&gram, dim)?;
    let singular_values: Vec<f64> =
        eig.values.iter().map(|&l| math::sqrt(l.max(0.0))).collect();
    let smax = singular_values[0];
    if !(smax > 0.0) {
        return Err(PodError::ZeroVariance);
    }
    let rank = singular_values.iter().filter(|&&s| s > 1e-12 * smax).count();
    if n_modes > rank {
        return Err(PodError::TooManyModes { requested: n_modes, available: rank });
    }

    // Orthonormal spatial modes Ṽ (n_full × n_modes).
    let mut v = vec![0.0; n_full * n_modes];
    if cols_side {
        for i in 0..n_full {
            for j in 0..n_modes {
                v[i * n_modes + j] = eig.vectors[i * dim + j];
            }
        }
    } else {
        // Vⱼ = Aᵀ uⱼ / σⱼ.
        for j in 0..n_modes {
            let s = singular_values[j];
            for i in 0..n_full {
                let mut acc = 0.0;
                for r in 0..rows {
                    acc += a[r * n_full + i] * eig.vectors[r * dim + j];
                }
                v[i * n_modes + j] = acc / s;
            }
        }
    }

    // Projection coefficients ŨΣ̃ = A Ṽ and their population std.
    let mut mean = 0.0;
    let mut coeffs = vec![0.0; rows * n_modes];
    for r in 0..rows {
        for j in 0..n_modes {
            let mut acc = 0.0;
            for i in 0..n_full {
                acc += a[r * n_full + i] * v[i * n_modes + j];
            }
            coeffs[r * n_modes + j] = acc;
            mean += acc;
        }
    }
    mean /= coeffs.len() as f64;
    let mut var = 0.0;
    for q in &coeffs {
        var += (q - mean) * (q - mean);
    }
    let c = math::sqrt(var / coeffs.len() as f64);
    if c < 1e-12 {
        return Err(PodError::ZeroVariance);
    }

    let modes: Vec<f64> = v.iter().map(|m| c * m).collect();
    Ok(PodBasis {
        n_full,
        n_modes,
        modes,
        c,
        shift: vec![0.0; n_modes],
        singular_values,
    })
}

impl PodBasis {
    fn check(&self, what: &'static str, len: usize, expected: usize) -> Result<(), PodError> {
        let _ = what;
        if len != expected {
            return Err(PodError::VecLength { expected, got: len });
        }
        Ok(())
    }

    /// Full state → reduced coordinates.
    pub fn encode(&self, y: &[f64], out: &mut [f64]) -> Result<(), PodError> {
        self.check("full state", y.len(), self.n_full)?;
        self.check("reduced state", out.len(), self.n_modes)?;
        linalg::mat_t_vec(&self.modes, y, self.n_full, self.n_modes, out);
        let inv_c2 = 1.0 / (self.c * self.c);
        for (o, s) in out.iter_mut().zip(&self.shift) {
            *o = *o * inv_c2 - s;
        }
        Ok(())
    }

    /// Reduced coordinates → full state (projection onto the mode span).
    pub fn decode(&self, x: &[f64], out: &mut [f64]) -> Result<(), PodError> {
        self.check("reduced state", x.len(), self.n_modes)?;
        self.check("full state", out.len(), self.n_full)?;
        let shifted: Vec<f64> = x.iter().zip(&self.shift).map(|(a, b)| a + b).collect();
        linalg::mat_vec(&self.modes, &shifted, self.n_full, self.n_modes, out);
        Ok(())
    }

    pub fn encode_vec(&self, y: &[f64]) -> Result<Vec<f64>, PodError> {
        let mut out = vec![0.0; self.n_modes];
        self.encode(y, &mut out)?;
        Ok(out)
    }

    pub fn decode_vec(&self, x: &[f64]) -> Result<Vec<f64>, PodError> {
        let mut out = vec![0.0; self.n_full];
        self.decode(x, &mut out)?;
        Ok(out)
    }

    /// Choose `shift` so the given full-space equilibrium encodes to the
    /// reduced-space origin: `encode(y_eq) = 0` exactly.
    pub fn set_equilibrium(&mut self, y_eq: &[f64]) -> Result<(), PodError> {
        self.check("full state", y_eq.len(), self.n_full)?;
        let mut proj = vec![0.0; self.n_modes];
        linalg::mat_t_vec(&self.modes, y_eq, self.n_full, self.n_modes, &mut proj);
        let inv_c2 = 1.0 / (self.c * self.c);
        for (s, p) in self.shift.iter_mut().zip(&proj) {
            *s = p * inv_c2;
        }
        Ok(())
    }

    /// Encode every state row of a trajectory (times and inputs pass
    /// through unchanged).
    pub fn encode_trajectory(&self, tr: &Trajectory) -> Result<Trajectory, PodError> {
        self.map_trajectory(tr, true)
    }

    /// Decode every state row of a reduced trajectory.
    pub fn decode_trajectory(&self, tr: &Trajectory) -> Result<Trajectory, PodError> {
        self.map_trajectory(tr, false)
    }

    fn map_trajectory(&self, tr: &Trajectory, enc: bool) -> Result<Trajectory, PodError> {
        let (from, to) = if enc { (self.n_full, self.n_modes) } else { (self.n_modes, self.n_full) };
        self.check("trajectory state", tr.state_dim(), from)?;
        let mut states = Vec::with_capacity(tr.len() * to);
        let mut row = vec![0.0; to];
        for i in 0..tr.len() {
            if enc {
                self.encode(tr.state(i), &mut row)?;
            } else {
                self.decode(tr.state(i), &mut row)?;
            }
            states.extend_from_slice(&row);
        }
        let built = match tr.inputs() {
            Some(u) => Trajectory::with_inputs(
                tr.times().to_vec(),
                states,
                to,
                u.to_vec(),
                tr.input_dim(),
            ),
            None => Trajectory::new(tr.times().to_vec(), states, to),
        };
        built.map_err(|e| match e {
            DataError::NonFinite => PodError::ZeroVariance,
            _ => PodError::Shape { len: tr.len() * to, n_full: to },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
        // Deterministic xorshift* filler.
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = move || {
            s ^= s >> 12;
            s ^= s << 25;
            s ^= s >> 27;
            (s.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        (0..rows * cols).map(|_| next()).collect()
    }

    #[test]
    fn diagonal_snapshots_give_exact_singular_values() {
        #[rustfmt::skip]
        let a = vec![
            4.0, 0.0, 0.0, 0.0,
            0.0, 3.0, 0.0, 0.0,
            0.0, 0.0, 2.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ];
        let basis = pod_fit(&a, 4, 2).unwrap();
        let sv = &basis.singular_values;
        assert_eq!(sv.len(), 4);
        for (got, want) in sv.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-9, "σ = {got}, want {want}");
        }
    }

    #[test]
    fn wide_snapshots_use_the_small_gram_side() {
        // 2 snapshots in R⁵: σ = {4, 3}, modes e₂ and e₁.
        let a = vec![
            3.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 4.0, 0.0, 0.0, 0.0,
        ];
        let basis = pod_fit(&a, 5, 2).unwrap();
        assert_eq!(basis.singular_values.len(), 2);
        assert!((basis.singular_values[0] - 4.0).abs() < 1e-12);
        assert!((basis.singular_values[1] - 3.0).abs() < 1e-12);
        // First mode ∝ e₂ (the σ=4 direction).
        let m0: Vec<f64> = (0..5).map(|i| basis.modes[i * 2]).collect();
        assert!(m0[1].abs() > 0.99 * basis.c);
        for i in [0usize, 2, 3, 4] {
            assert!(m0[i].abs() < 1e-9);
        }
    }

    #[test]
    fn modes_are_orthogonal_with_norm_c() {
        let a = test_matrix(12, 5, 1);
        let basis = pod_fit(&a, 5, 3).unwrap();
        let c2 = basis.c * basis.c;
        for p in 0..3 {
            for q in 0..3 {
                let mut dot = 0.0;
                for i in 0..5 {
                    dot += basis.modes[i * 3 + p] * basis.modes[i * 3 + q];
                }
                let want = if p == q { c2 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10 * c2.max(1.0), "MᵀM[{p}][{q}] = {dot}");
            }
        }
    }

    #[test]
    fn encoded_snapshots_have_unit_population_variance() {
        let a = test_matrix(20, 4, 2);
        let basis = pod_fit(&a, 4, 4).unwrap();
        let mut coords = Vec::new();
        for r in 0..20 {
            coords.extend(basis.encode_vec(&a[r * 4..(r + 1) * 4]).unwrap());
        }
        let mean: f64 = coords.iter().sum::<f64>() / coords.len() as f64;
        let var: f64 =
            coords.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / coords.len() as f64;
        assert!((var - 1.0).abs() < 1e-10, "population variance {var}");
    }

    #[test]
    fn truncation_error_matches_discarded_energy() {
        // Eckart–Young with equality: ‖A − Aₖ‖²_F = Σ_{i>k} σᵢ².
        let a = test_matrix(8, 5, 3);
        let basis = pod_fit(&a, 5, 2).unwrap();
        let mut err = 0.0;
        for r in 0..8 {
            let row = &a[r * 5..(r + 1) * 5];
            let recon = basis.decode_vec(&basis.encode_vec(row).unwrap()).unwrap();
            for (x, y) in row.iter().zip(&recon) {
                err += (x - y) * (x - y);
            }
        }
        let tail: f64 = basis.singular_values[2..].iter().map(|s| s * s).sum();
        assert!(
            (err - tail).abs() < 1e-8 * tail.max(1.0),
            "reconstruction error {err} vs discarded energy {tail}"
        );
    }

    #[test]
    fn equilibrium_shift_centers_the_origin() {
        let a = test_matrix(10, 4, 4);
        let mut basis = pod_fit(&a, 4, 3).unwrap();
        let y_eq = [0.7, -1.2, 0.4, 2.0];
        basis.set_equilibrium(&y_eq).unwrap();
        let x = basis.encode_vec(&y_eq).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12), "equilibrium encodes to {x:?}");
        // decode(0) is the projection of the equilibrium onto the basis.
        let back = basis.decode_vec(&[0.0; 3]).unwrap();
        let mut no_shift = pod_fit(&a, 4, 3).unwrap();
        no_shift.set_equilibrium(&[0.0; 4]).unwrap();
        let proj = no_shift.decode_vec(&no_shift.encode_vec(&y_eq).unwrap()).unwrap();
        for (b, p) in back.iter().zip(&proj) {
            assert!((b - p).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(pod_fit(&[0.0; 12], 4, 2), Err(PodError::ZeroVariance)));
        assert!(matches!(pod_fit(&[], 4, 2), Err(PodError::Empty)));
        assert!(matches!(pod_fit(&[1.0; 10], 4, 2), Err(PodError::Shape { .. })));
        assert!(matches!(
            pod_fit(&[1.0, 2.0, 3.0, 4.0], 4, 2),
            Err(PodError::TooManyModes { available: 1, .. })
        ));
        // Rank-1 data cannot support 2 modes even if dims allow.
        let rank1 = vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        assert!(matches!(
            pod_fit(&rank1, 2, 2),
            Err(PodError::TooManyModes { available: 1, .. })
        ));
    }

    #[test]
    fn trajectory_mapping_round_trip() {
        let a = test_matrix(6, 4, 5);
        let basis = pod_fit(&a, 4, 4).unwrap();
        let tr = Trajectory::with_inputs(
            vec![0.0, 1.0, 2.0],
            a[..12].to_vec(),
            4,
            vec![1.0, 2.0, 3.0],
            1,
        )
        .unwrap();
        let red = basis.encode_trajectory(&tr).unwrap();
        assert_eq!(red.state_dim(), 4);
        assert_eq!(red.inputs(), tr.inputs());
        let back = basis.decode_trajectory(&red).unwrap();
        // Full-rank basis: lossless up to rounding.
        for (x, y) in tr.states().iter().zip(back.states()) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
