//! Support identification: the Hankel matrix of observations, its numerical
//! range, and the angle test that selects a superset of the true support.
//!
//! In the noiseless case the range of `Y = Hankel(y)` is exactly the span of
//! the length-`L` restrictions of the active atoms, so an atom belongs to the
//! support iff its sine-angle `γ_k` to that range vanishes. With noise the
//! test becomes `γ_k ≤ ε₁`, and the selected set is a superset of the support
//! with high probability.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fourier::{atom_window, Measurement, MeasurementModel};
use crate::linalg::{self, CMatrix, CVector};

const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

/// Smallest relative singular value counted as signal without noise. Spikes
/// of opposite sign cancel in `y`, so `s₁` can sit orders of magnitude below
/// the round-off carried by the individual terms.
pub const NOISELESS_RANK_RTOL: f64 = 1e-10;

/// `Y[i, j] = y[i + j]`, an `L × (m − L + 1)` matrix using all `m` samples.
pub fn hankel_from_samples(samples: &CVector, l: usize) -> Result<CMatrix> {
    let m = samples.len();
    if !(1 < l && l < m) {
        return Err(domain(format!("Hankel row count must satisfy 1 < L < m, got L = {l}, m = {m}")));
    }
    Ok(CMatrix::from_fn(l, m - l + 1, |i, j| samples[i + j]))
}

pub fn build_hankel(y: &Measurement, l: usize) -> Result<CMatrix> {
    hankel_from_samples(y.values(), l)
}

/// Number of singular values above the noise floor `c_rank·σ·√(m ln m)`,
/// never less than one. Without noise the floor is
/// `s₁·max(max(L, m − L + 1)·u, 10⁻¹⁰)`, which only discards round-off.
pub fn estimate_rank(singular_values: &[f64], sigma: f64, m: usize, c_rank: f64) -> Result<usize> {
    let Some(&s1) = singular_values.first() else {
        return Err(domain("empty singular value list"));
    };
    if !(sigma >= 0.0) {
        return Err(domain(format!("noise level must be non-negative, got {sigma}")));
    }
    let tau = if sigma == 0.0 {
        // For an L × (m − L + 1) Hankel matrix the larger side is m + 1 − min(L, m − L + 1).
        let max_dim = (m + 1).saturating_sub(singular_values.len()).max(singular_values.len());
        s1 * (max_dim as f64 * UNIT_ROUNDOFF).max(NOISELESS_RANK_RTOL)
    } else {
        let mf = m as f64;
        c_rank * sigma * (mf * mf.ln()).sqrt()
    };
    let above = singular_values.iter().filter(|&&s| s > tau).count();
    Ok(above.max(1))
}

/// How the retained range of the Hankel matrix is orthonormalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMethod {
    /// Leading `r` left singular vectors.
    #[default]
    Svd,
    /// First `r` columns of `Q` in a column-pivoted QR factorization `Y E = Q R`.
    PivotedQr,
}

/// Orthonormal `L × r` basis for the dominant rank-`r` range of `y_matrix`.
pub fn range_basis(y_matrix: &CMatrix, r: usize, method: BasisMethod) -> Result<CMatrix> {
    let max_rank = y_matrix.nrows().min(y_matrix.ncols());
    if r == 0 || r > max_rank {
        return Err(domain(format!("rank {r} outside [1, {max_rank}]")));
    }
    match method {
        BasisMethod::Svd => {
            let (u, _) = linalg::svd_left(y_matrix)?;
            Ok(u.columns(0, r).into_owned())
        }
        BasisMethod::PivotedQr => {
            let q = y_matrix.clone().col_piv_qr().q();
            Ok(q.columns(0, r).into_owned())
        }
    }
}

/// `‖a − Q Q* a‖ / ‖a‖`: the sine of the angle between `a` and `Ran Q`.
pub fn atom_angle(a: &CVector, basis: &CMatrix) -> Result<f64> {
    if a.len() != basis.nrows() {
        return Err(domain(format!(
            "vector length {} does not match basis row count {}",
            a.len(),
            basis.nrows()
        )));
    }
    let a_norm = linalg::norm(a);
    if a_norm == 0.0 {
        return Err(domain("angle of the zero vector is undefined"));
    }
    let residual = linalg::project_out(basis, a);
    Ok((linalg::norm(&residual) / a_norm).min(1.0))
}

/// Where the constant `c` enters the selection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScaling {
    /// `ε₁(c) = √c · ε₁(1)`, so that `c` scales `ε₁²` linearly.
    #[default]
    SqrtC,
    /// `ε₁(c) = c · ε₁(1)`.
    LinearC,
}

/// Angle threshold `ε₁` from `ε₁² = σ·√(r·m·ln m) / (s₁ − s₂)`, scaled by `c`.
pub fn epsilon1(
    sigma: f64,
    r: usize,
    m: usize,
    s1: f64,
    s2: f64,
    c: f64,
    scaling: ThresholdScaling,
) -> Result<f64> {
    if !(sigma >= 0.0) || r == 0 {
        return Err(domain(format!("invalid threshold inputs: sigma = {sigma}, r = {r}")));
    }
    if !(s1 > s2) || s2 < 0.0 {
        return Err(Error::DegenerateGap { s1, s2 });
    }
    let mf = m as f64;
    let base = (sigma * (r as f64 * mf * mf.ln()).sqrt() / (s1 - s2)).sqrt();
    Ok(match scaling {
        ThresholdScaling::SqrtC => c.sqrt() * base,
        ThresholdScaling::LinearC => c * base,
    })
}

/// Which singular value gap fed the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Noiseless,
    LeadingGap,
    RankGap,
    Fixed,
    Override,
}

/// Threshold used when neither singular value gap is informative.
pub const DEGENERATE_EPSILON1: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Multiplier `c` on the angle threshold.
    pub c: f64,
    pub scaling: ThresholdScaling,
    /// Multiplier on the `σ√(m ln m)` rank cut.
    pub c_rank: f64,
    pub basis: BasisMethod,
    /// Replaces the computed threshold entirely.
    pub epsilon1_override: Option<f64>,
    /// Lower bound on the threshold; absorbs round-off in exact arithmetic cases.
    pub epsilon1_floor: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            scaling: ThresholdScaling::default(),
            c_rank: 2.0,
            basis: BasisMethod::default(),
            epsilon1_override: None,
            epsilon1_floor: 1e-8,
        }
    }
}

impl SelectionConfig {
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

/// The Hankel matrix together with its spectrum and retained range.
#[derive(Debug, Clone)]
pub struct HankelSpectrum {
    pub matrix: CMatrix,
    pub singular_values: Vec<f64>,
    pub basis: CMatrix,
    pub rank_estimate: usize,
}

impl HankelSpectrum {
    pub fn new(y: &Measurement, sigma: f64, config: &SelectionConfig) -> Result<Self> {
        let model = y.model();
        let matrix = build_hankel(y, model.l())?;
        let (u, singular_values) = linalg::svd_left(&matrix)?;
        let rank_estimate = estimate_rank(&singular_values, sigma, model.m(), config.c_rank)?;
        let basis = match config.basis {
            BasisMethod::Svd => u.columns(0, rank_estimate).into_owned(),
            BasisMethod::PivotedQr => range_basis(&matrix, rank_estimate, BasisMethod::PivotedQr)?,
        };
        Ok(Self {
            matrix,
            singular_values,
            basis,
            rank_estimate,
        })
    }

    /// `γ_k` for every grid frequency, ascending in `k`.
    pub fn gammas(&self, model: &MeasurementModel) -> Vec<f64> {
        let l = model.l();
        model
            .frequencies()
            .map(|k| {
                let a = atom_window(model.n(), k, 0, l);
                atom_angle(&a, &self.basis).expect("atom restrictions are nonzero")
            })
            .collect()
    }
}

/// Result of the angle test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersetSelection {
    /// Selected indices, ascending.
    pub omega: Vec<i64>,
    /// `γ_k` for `k = −n/2, …, n/2 − 1`.
    pub gammas: Vec<f64>,
    pub epsilon1: f64,
    pub threshold_source: ThresholdSource,
    pub rank_estimate: usize,
    /// True when more than `L` atoms passed and the set was trimmed.
    pub capped: bool,
}

impl SupersetSelection {
    pub fn gamma(&self, k: i64) -> f64 {
        self.gammas[(k + (self.gammas.len() / 2) as i64) as usize]
    }

    /// `k,gamma` rows for plotting selection profiles.
    pub fn write_gamma_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let half = (self.gammas.len() / 2) as i64;
        writeln!(w, "k,gamma")?;
        for (i, g) in self.gammas.iter().enumerate() {
            writeln!(w, "{},{:.16e}", i as i64 - half, g)?;
        }
        Ok(())
    }
}

fn selection_threshold(
    spectrum: &HankelSpectrum,
    sigma: f64,
    m: usize,
    config: &SelectionConfig,
) -> (f64, ThresholdSource) {
    if let Some(eps) = config.epsilon1_override {
        return (eps, ThresholdSource::Override);
    }
    if sigma == 0.0 {
        return (config.epsilon1_floor, ThresholdSource::Noiseless);
    }
    let sv = &spectrum.singular_values;
    let r = spectrum.rank_estimate;
    let at = |i: usize| sv.get(i).copied().unwrap_or(0.0);
    let informative = 10.0 * sigma;
    let eps = |s_hi: f64, s_lo: f64| epsilon1(sigma, r, m, s_hi, s_lo, config.c, config.scaling);

    let (s1, s2) = (at(0), at(1));
    if s1 - s2 > informative {
        if let Ok(e) = eps(s1, s2) {
            return (e.max(config.epsilon1_floor), ThresholdSource::LeadingGap);
        }
    }
    let (sr, sr1) = (at(r - 1), at(r));
    if sr - sr1 > informative {
        if let Ok(e) = eps(sr, sr1) {
            return (e.max(config.epsilon1_floor), ThresholdSource::RankGap);
        }
    }
    warn!(
        "no informative singular value gap (s1 = {s1:e}, s2 = {s2:e}, s_r = {sr:e}, s_r+1 = {sr1:e}); \
         using fixed threshold {DEGENERATE_EPSILON1}"
    );
    (DEGENERATE_EPSILON1, ThresholdSource::Fixed)
}

/// Support identification: selects `Ω = {k : γ_k ≤ ε₁}`, keeping at most
/// `L` indices (those with the smallest `γ`, ties toward smaller `|k|`).
pub fn select_superset(y: &Measurement, sigma: f64, config: &SelectionConfig) -> Result<SupersetSelection> {
    let model = y.model();
    let spectrum = HankelSpectrum::new(y, sigma, config)?;
    let gammas = spectrum.gammas(model);
    let (epsilon1, threshold_source) = selection_threshold(&spectrum, sigma, model.m(), config);
    let (omega, capped) = threshold_candidates(&gammas, model, epsilon1);
    Ok(SupersetSelection {
        omega,
        gammas,
        epsilon1,
        threshold_source,
        rank_estimate: spectrum.rank_estimate,
        capped,
    })
}

fn threshold_candidates(gammas: &[f64], model: &MeasurementModel, epsilon1: f64) -> (Vec<i64>, bool) {
    let half = model.half();
    let mut passing: Vec<(f64, i64)> = gammas
        .iter()
        .enumerate()
        .filter(|(_, &g)| g <= epsilon1)
        .map(|(i, &g)| (g, i as i64 - half))
        .collect();
    let capped = passing.len() > model.l();
    if capped {
        passing.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.abs().cmp(&b.1.abs()))
                .then(a.1.cmp(&b.1))
        });
        passing.truncate(model.l());
    }
    let mut omega: Vec<i64> = passing.into_iter().map(|(_, k)| k).collect();
    omega.sort_unstable();
    (omega, capped)
}

/// Convenience for tests and diagnostics: the sine-angle between the
/// length-`L` restriction of atom `k` and an arbitrary basis.
pub fn restricted_atom_angle(model: &MeasurementModel, k: i64, basis: &CMatrix) -> Result<f64> {
    model.check_index(k)?;
    atom_angle(&atom_window(model.n(), k, 0, basis.nrows()), basis)
}
