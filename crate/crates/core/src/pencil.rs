//! Matrix pencil baseline.
//!
//! The rank-reducing values `z` of `Ȳ − z·Y̲` (rows shifted by one) are the
//! nonzero eigenvalues of `Y̲† Ȳ`; in the noiseless case they are exactly
//! `exp(2πi·k/n)` for the active `k`. Both pencil matrices are denoised by
//! truncating their SVD before the eigensolve.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fourier::Measurement;
use crate::hankel::{build_hankel, NOISELESS_RANK_RTOL};
use crate::linalg::{self, CMatrix, CVector};
use crate::pruning::{least_squares, RecoveryResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PencilConfig {
    /// `c` in the singular value cut `c·σ·√(L ln L)`.
    pub denoise_constant: f64,
    /// Accepted eigenvalue moduli `[ρ_lo, ρ_hi]`.
    pub magnitude_band: (f64, f64),
}

impl Default for PencilConfig {
    fn default() -> Self {
        Self {
            denoise_constant: 1.5,
            magnitude_band: (0.7, 1.3),
        }
    }
}

impl PencilConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.magnitude_band;
        if !(0.0 < lo && lo <= 1.0 && 1.0 <= hi) {
            return Err(domain(format!("magnitude band must satisfy 0 < lo <= 1 <= hi, got [{lo}, {hi}]")));
        }
        if !(self.denoise_constant > 0.0) {
            return Err(domain(format!(
                "denoise constant must be positive, got {}",
                self.denoise_constant
            )));
        }
        Ok(())
    }

    pub fn with_denoise_constant(mut self, c: f64) -> Self {
        self.denoise_constant = c;
        self
    }
}

/// `(Ȳ, Y̲)`: the Hankel matrix without its first row and without its last row.
pub fn pencil_pair(y_matrix: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let rows = y_matrix.nrows();
    if rows < 2 {
        return Err(domain(format!("pencil needs at least 2 Hankel rows, got {rows}")));
    }
    let upper = y_matrix.rows(1, rows - 1).into_owned();
    let lower = y_matrix.rows(0, rows - 1).into_owned();
    Ok((upper, lower))
}

/// `c·σ·√(L ln L)`.
pub fn denoise_threshold(sigma: f64, l: usize, c: f64) -> f64 {
    let lf = l as f64;
    c * sigma * (lf * lf.ln()).sqrt()
}

/// Count of singular values kept: those above the denoising threshold, or
/// above round-off when `σ = 0`.
fn retained(singular_values: &[f64], sigma: f64, l: usize, c: f64, shape: (usize, usize)) -> usize {
    let Some(&s1) = singular_values.first() else {
        return 0;
    };
    let tau = if sigma == 0.0 {
        let max_dim = shape.0.max(shape.1) as f64;
        s1 * (max_dim * f64::EPSILON / 2.0).max(NOISELESS_RANK_RTOL)
    } else {
        denoise_threshold(sigma, l, c)
    };
    singular_values.iter().filter(|&&s| s > tau).count()
}

/// Best approximation of `m` with every singular value at or below
/// `c·σ·√(L ln L)` set to zero. Returns `m` unchanged when `σ = 0`.
pub fn denoise(m: &CMatrix, sigma: f64, l: usize, c: f64) -> Result<CMatrix> {
    if !(c > 0.0) {
        return Err(domain(format!("denoise constant must be positive, got {c}")));
    }
    if sigma == 0.0 {
        return Ok(m.clone());
    }
    let (u, s, v) = linalg::svd_full(m)?;
    let tau = denoise_threshold(sigma, l, c);
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for (i, &si) in s.iter().enumerate().take_while(|(_, &si)| si > tau) {
        out += u.column(i) * v.column(i).adjoint() * Complex64::new(si, 0.0);
    }
    Ok(out)
}

/// Nonzero eigenvalues of `Y̲_d† Ȳ_d` (both pencil matrices denoised).
///
/// With `Y̲_d = U_r Σ_r V_r*`, the nonzero spectrum of `V_r Σ_r⁻¹ U_r* Ȳ_d`
/// coincides with that of the `r × r` matrix `Σ_r⁻¹ U_r* Ȳ_d V_r`.
pub fn pencil_eigenvalues(y: &Measurement, sigma: f64, config: &PencilConfig) -> Result<Vec<Complex64>> {
    config.validate()?;
    let l = y.model().l();
    let hankel = build_hankel(y, l)?;
    let (upper, lower) = pencil_pair(&hankel)?;
    let c = config.denoise_constant;
    let upper = denoise(&upper, sigma, l, c)?;
    let (u, s, v) = linalg::svd_full(&lower)?;
    let r = retained(&s, sigma, l, c, lower.shape());
    if r == 0 {
        return Ok(Vec::new());
    }
    let u_r = u.columns(0, r);
    let v_r = v.columns(0, r);
    let inv = CVector::from_iterator(r, s[..r].iter().map(|&si| Complex64::new(1.0 / si, 0.0)));
    let mut reduced = u_r.adjoint() * &upper * v_r;
    for (i, mut row) in reduced.row_iter_mut().enumerate() {
        row *= inv[i];
    }
    linalg::eigenvalues(&reduced)
}

/// Nearest grid index to `arg(z)`, wrapped into `[−n/2, n/2)`.
pub fn grid_index(z: Complex64, n: usize) -> i64 {
    let n_i = n as i64;
    let k = (n as f64 * z.arg() / std::f64::consts::TAU).round() as i64;
    let k = k.rem_euclid(n_i);
    if k >= n_i / 2 {
        k - n_i
    } else {
        k
    }
}

/// Grid frequencies read off the pencil eigenvalues: those with modulus in
/// the band, snapped to the grid, deduplicated, at most one per retained
/// singular value, preferring eigenvalues closest to the unit circle.
pub fn pencil_frequencies(y: &Measurement, sigma: f64, config: &PencilConfig) -> Result<Vec<i64>> {
    let eigenvalues = pencil_eigenvalues(y, sigma, config)?;
    let rank = eigenvalues.len();
    let (lo, hi) = config.magnitude_band;
    let mut candidates: Vec<(f64, i64)> = eigenvalues
        .iter()
        .filter(|z| {
            let r = z.norm();
            lo <= r && r <= hi
        })
        .map(|&z| ((z.norm() - 1.0).abs(), grid_index(z, y.model().n())))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut picked: Vec<i64> = Vec::with_capacity(rank);
    for (_, k) in candidates {
        if picked.len() == rank {
            break;
        }
        if !picked.contains(&k) {
            picked.push(k);
        }
    }
    if picked.is_empty() {
        return Err(Error::EmptyEstimate);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Pencil frequencies followed by a least-squares amplitude fit.
pub fn pencil_recover(y: &Measurement, sigma: f64, config: &PencilConfig) -> Result<RecoveryResult> {
    let support = pencil_frequencies(y, sigma, config)?;
    let values = least_squares(y, &support)?;
    let model = y.model();
    let mut coefficients = vec![Complex64::new(0.0, 0.0); model.n()];
    for (&k, &v) in support.iter().zip(&values) {
        coefficients[(k + model.half()) as usize] = v;
    }
    let a = crate::fourier::atom_matrix(model, &support)?;
    let residual = linalg::norm(&(y.values() - a * CVector::from_column_slice(&values)));
    Ok(RecoveryResult {
        n: model.n(),
        support,
        coefficients,
        residual,
        gammas: Vec::new(),
        prune_trace: Vec::new(),
        iterations: 0,
        epsilon1: None,
        epsilon2: None,
        possibly_zero: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{atom_window, measure, root_of_unity, MeasurementModel, NoiseSpec, SparseSignal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pair_of_two_by_two() {
        let y = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        let (upper, lower) = pencil_pair(&y).unwrap();
        assert_eq!(upper, CMatrix::from_row_slice(1, 2, &[c(3.0, 0.0), c(4.0, 0.0)]));
        assert_eq!(lower, CMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(2.0, 0.0)]));
        assert!(pencil_pair(&CMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn single_atom_pencil_is_a_scaled_shift() {
        let samples = atom_window(100, 17, 0, 20);
        let h = crate::hankel::hankel_from_samples(&samples, 6).unwrap();
        let (upper, lower) = pencil_pair(&h).unwrap();
        let z = root_of_unity(17, 100);
        assert!((upper - lower * z).norm() < 1e-13);
    }

    #[test]
    fn two_sparse_pencil_drops_rank_at_true_frequencies() {
        let s = SparseSignal::new(256, vec![-30, 41], vec![c(1.0, 0.0), c(0.5, -0.5)]).unwrap();
        let model = MeasurementModel::new(256, 16, 5).unwrap();
        let y = measure(&s, &model, &NoiseSpec::noiseless()).unwrap();
        let h = build_hankel(&y, 5).unwrap();
        let (upper, lower) = pencil_pair(&h).unwrap();
        let smallest = |z: Complex64| {
            let (_, s) = linalg::svd_left(&(&upper - &lower * z)).unwrap();
            s[1] / s[0]
        };
        assert!(smallest(root_of_unity(-30, 256)) < 1e-10);
        assert!(smallest(root_of_unity(41, 256)) < 1e-10);
        assert!(smallest(root_of_unity(40, 256)) > 1e-4);
    }

    #[test]
    fn denoise_identity_without_noise() {
        let m = CMatrix::from_fn(3, 4, |i, j| c(i as f64, j as f64));
        assert_eq!(denoise(&m, 0.0, 10, 1.0).unwrap(), m);
    }

    #[test]
    fn denoise_truncates_small_singular_values() {
        // Rank-2 matrix with singular values (1, 1e-6); threshold ≈ 0.0121.
        let u1 = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let u2 = CVector::from_vec(vec![c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let v1 = CVector::from_vec(vec![c(0.6, 0.0), c(0.8, 0.0)]);
        let v2 = CVector::from_vec(vec![c(0.8, 0.0), c(-0.6, 0.0)]);
        let m = &u1 * v1.adjoint() + &u2 * v2.adjoint() * c(1e-6, 0.0);
        assert!((denoise_threshold(1e-3, 40, 1.0) - 0.012_147_229_238_166).abs() < 1e-14);
        let d = denoise(&m, 1e-3, 40, 1.0).unwrap();
        let (_, s) = linalg::svd_left(&d).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[1] < 1e-14);
        let zero = denoise(&(m * c(1e-3, 0.0)), 1e-3, 40, 1.0).unwrap();
        assert_eq!(zero, CMatrix::zeros(3, 2));
    }

    #[test]
    fn grid_mapping_inverts_atoms() {
        for n in [8usize, 64, 1000] {
            let half = (n / 2) as i64;
            for k in -half..half {
                assert_eq!(grid_index(root_of_unity(k, n), n), k, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn one_sparse_is_exact() {
        let s = SparseSignal::new(1000, vec![-123], vec![c(0.3, 0.4)]).unwrap();
        let model = MeasurementModel::new(1000, 30, 10).unwrap();
        let y = measure(&s, &model, &NoiseSpec::noiseless()).unwrap();
        assert_eq!(pencil_frequencies(&y, 0.0, &PencilConfig::default()).unwrap(), vec![-123]);
    }

    #[test]
    fn adjacent_pair_is_resolved_without_noise() {
        let h = 0.5f64.sqrt();
        let s = SparseSignal::new(1000, vec![100, 101], vec![c(h, 0.0), c(-h, 0.0)]).unwrap();
        let model = MeasurementModel::with_default_l(1000, 120).unwrap();
        let y = measure(&s, &model, &NoiseSpec::noiseless()).unwrap();
        assert_eq!(pencil_frequencies(&y, 0.0, &PencilConfig::default()).unwrap(), vec![100, 101]);
        let r = pencil_recover(&y, 0.0, &PencilConfig::default()).unwrap();
        assert!(r.relative_error(&s).unwrap() < 1e-8);
    }

    #[test]
    fn structural_zero_eigenvalues_are_rejected() {
        let s = SparseSignal::new(64, vec![3, 20], vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let model = MeasurementModel::new(64, 24, 8).unwrap();
        let y = measure(&s, &model, &NoiseSpec::noiseless()).unwrap();
        let eig = pencil_eigenvalues(&y, 0.0, &PencilConfig::default()).unwrap();
        assert_eq!(eig.len(), 2);
        assert_eq!(pencil_frequencies(&y, 0.0, &PencilConfig::default()).unwrap(), vec![3, 20]);
    }

    #[test]
    fn zero_signal_is_an_empty_estimate() {
        let model = MeasurementModel::new(64, 24, 8).unwrap();
        let y = Measurement::new(CVector::zeros(24), model).unwrap();
        assert!(matches!(
            pencil_recover(&y, 1e-3, &PencilConfig::default()),
            Err(Error::EmptyEstimate)
        ));
        assert!(matches!(
            pencil_recover(&y, 0.0, &PencilConfig::default()),
            Err(Error::EmptyEstimate)
        ));
    }

    #[test]
    fn config_validation() {
        let bad = PencilConfig {
            magnitude_band: (1.1, 1.3),
            ..PencilConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(PencilConfig::default().with_denoise_constant(0.0).validate().is_err());
    }
}
