//! Support pruning and the final least-squares fit.
//!
//! Given a superset `Ω` of the support, the removal loop repeatedly drops the
//! atom whose deletion changes the projection of `y` the least, as long as
//! that change `δ_k = ‖Π_Ω y − Π_{Ω∖k} y‖` stays below `ε₂`.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fourier::{atom_matrix, atom_window, Measurement, MeasurementModel, SparseSignal};
use crate::hankel::{self, SelectionConfig, SupersetSelection};
use crate::linalg::{self, CMatrix, CVector};

/// One accepted removal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneStep {
    pub index: i64,
    pub delta: f64,
}

/// Output of a recovery method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub n: usize,
    /// Estimated support, ascending.
    pub support: Vec<i64>,
    /// Dense estimate, position `k + n/2` holding `x̂_k`; zero off the support.
    pub coefficients: Vec<Complex64>,
    /// `‖y − A_Ω̂ x̂‖`.
    pub residual: f64,
    /// Selection-phase angles, ascending in `k` (empty when not computed).
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub prune_trace: Vec<PruneStep>,
    pub iterations: usize,
    #[serde(default)]
    pub epsilon1: Option<f64>,
    #[serde(default)]
    pub epsilon2: Option<f64>,
    /// Set when the last remaining atom fell below `ε₂`.
    #[serde(default)]
    pub possibly_zero: bool,
}

impl RecoveryResult {
    fn from_fit(y: &Measurement, support: Vec<i64>, values: &[Complex64]) -> Result<Self> {
        let model = y.model();
        let mut coefficients = vec![Complex64::new(0.0, 0.0); model.n()];
        let half = model.half();
        for (&k, &v) in support.iter().zip(values) {
            coefficients[(k + half) as usize] = v;
        }
        let residual = residual_norm(y, &support, values)?;
        Ok(Self {
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

    pub fn coefficient(&self, k: i64) -> Complex64 {
        self.coefficients[(k + (self.n / 2) as i64) as usize]
    }

    /// Sparse view of the estimate.
    pub fn to_signal(&self) -> Result<SparseSignal> {
        let (support, amps): (Vec<i64>, Vec<Complex64>) = self
            .support
            .iter()
            .map(|&k| (k, self.coefficient(k)))
            .filter(|(_, a)| *a != Complex64::new(0.0, 0.0))
            .unzip();
        SparseSignal::new(self.n, support, amps)
    }

    /// `‖x̂ − x₀‖₂`.
    pub fn error_norm(&self, truth: &SparseSignal) -> Result<f64> {
        if truth.n() != self.n {
            return Err(domain(format!(
                "ground truth has dimension {}, estimate {}",
                truth.n(),
                self.n
            )));
        }
        let dense = truth.to_dense();
        Ok(self
            .coefficients
            .iter()
            .zip(&dense)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// `‖x̂ − x₀‖₂ / ‖x₀‖₂`; the plain error norm when `x₀ = 0`.
    pub fn relative_error(&self, truth: &SparseSignal) -> Result<f64> {
        let err = self.error_norm(truth)?;
        let scale = truth.norm();
        Ok(if scale > 0.0 { err / scale } else { err })
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }
}

fn residual_norm(y: &Measurement, support: &[i64], values: &[Complex64]) -> Result<f64> {
    let a = atom_matrix(y.model(), support)?;
    let x = CVector::from_column_slice(values);
    Ok(linalg::norm(&(y.values() - a * x)))
}

fn validate_support(model: &MeasurementModel, omega: &[i64]) -> Result<()> {
    if omega.is_empty() {
        return Err(domain("empty index set"));
    }
    if omega.len() > model.m() {
        return Err(Error::OverComplete {
            atoms: omega.len(),
            measurements: model.m(),
        });
    }
    for &k in omega {
        model.check_index(k)?;
    }
    let mut sorted = omega.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(domain("index set has duplicates"));
    }
    Ok(())
}

/// `argmin_x ‖y − A_Ω x‖`, solved through a QR factorization of `A_Ω`.
/// Coefficients are returned in the order of `omega`.
pub fn least_squares(y: &Measurement, omega: &[i64]) -> Result<Vec<Complex64>> {
    validate_support(y.model(), omega)?;
    let a = atom_matrix(y.model(), omega)?;
    Ok(linalg::least_squares(&a, y.values())?.iter().copied().collect())
}

/// Orthogonal projection of `y` onto `Ran A_S` (zero for empty `S`).
fn project_onto(model: &MeasurementModel, support: &[i64], y: &CVector) -> Result<CVector> {
    if support.is_empty() {
        return Ok(CVector::zeros(y.len()));
    }
    let q = linalg::orthonormal_columns(&atom_matrix(model, support)?);
    Ok(&q * q.ad_mul(y))
}

/// `δ_k = ‖(Q_(k) Q_(k)* − Q Q*) y‖` with `Q`, `Q_(k)` orthonormal bases of
/// `Ran A_Ω` and `Ran A_{Ω∖k}`, each factored from scratch.
pub fn projection_gap(y: &Measurement, omega: &[i64], k: i64) -> Result<f64> {
    let model = y.model();
    validate_support(model, omega)?;
    if !omega.contains(&k) {
        return Err(domain(format!("index {k} is not in the candidate set")));
    }
    let reduced: Vec<i64> = omega.iter().copied().filter(|&j| j != k).collect();
    let full = project_onto(model, omega, y.values())?;
    let partial = project_onto(model, &reduced, y.values())?;
    Ok(linalg::norm(&(partial - full)))
}

/// All `δ_k` for `k ∈ Ω` from one QR factorization `A_Ω = Q R`.
///
/// `Π_Ω y − Π_{Ω∖k} y = x̂_k (a_k − Π_{Ω∖k} a_k)` where `x̂ = R⁻¹ Q* y`, and
/// `‖a_k − Π_{Ω∖k} a_k‖ = 1 / ‖row_k(R⁻¹)‖`.
pub fn projection_gaps_single_factorization(y: &Measurement, omega: &[i64]) -> Result<Vec<f64>> {
    let model = y.model();
    validate_support(model, omega)?;
    let a = atom_matrix(model, omega)?;
    let qr = a.qr();
    let q = qr.q();
    let r = qr.r();
    let p = omega.len();
    let r_inv = r
        .solve_upper_triangular(&CMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("rank-deficient atom matrix".into()))?;
    let x = &r_inv * q.ad_mul(y.values());
    Ok((0..p)
        .map(|i| {
            let row_norm = r_inv.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            x[i].norm() / row_norm
        })
        .collect())
}

/// How the removal loop evaluates `δ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapEvaluation {
    /// One QR of `A_Ω` per iteration.
    #[default]
    SingleFactorization,
    /// A fresh QR of `A_{Ω∖k}` for every candidate, as in the textbook loop.
    PerCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub gap_evaluation: GapEvaluation,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            gap_evaluation: GapEvaluation::SingleFactorization,
        }
    }
}

fn gaps(y: &Measurement, omega: &[i64], config: &PruneConfig) -> Result<Vec<f64>> {
    match config.gap_evaluation {
        GapEvaluation::SingleFactorization => projection_gaps_single_factorization(y, omega),
        GapEvaluation::PerCandidate => omega.iter().map(|&k| projection_gap(y, omega, k)).collect(),
    }
}

/// Position of the smallest gap; exact ties go to the larger `|k|`, then larger `k`.
fn removal_candidate(omega: &[i64], deltas: &[f64]) -> usize {
    (0..omega.len())
        .min_by(|&a, &b| {
            deltas[a]
                .total_cmp(&deltas[b])
                .then(omega[b].abs().cmp(&omega[a].abs()))
                .then(omega[b].cmp(&omega[a]))
        })
        .expect("nonempty candidate set")
}

/// Removal loop followed by the least-squares fit on the surviving set.
/// Never removes the last atom.
pub fn prune(y: &Measurement, omega: &[i64], epsilon2: f64, config: &PruneConfig) -> Result<RecoveryResult> {
    if !(epsilon2 >= 0.0) {
        return Err(domain(format!("epsilon2 must be non-negative, got {epsilon2}")));
    }
    validate_support(y.model(), omega)?;
    let mut active = omega.to_vec();
    active.sort_unstable();
    let mut trace = Vec::new();
    let mut possibly_zero = false;
    loop {
        let deltas = gaps(y, &active, config)?;
        let pos = removal_candidate(&active, &deltas);
        if deltas[pos] >= epsilon2 {
            break;
        }
        if active.len() == 1 {
            possibly_zero = true;
            break;
        }
        trace.push(PruneStep {
            index: active[pos],
            delta: deltas[pos],
        });
        active.remove(pos);
    }
    let values = least_squares(y, &active)?;
    let mut result = RecoveryResult::from_fit(y, active, &values)?;
    result.iterations = trace.len();
    result.prune_trace = trace;
    result.epsilon2 = Some(epsilon2);
    result.possibly_zero = possibly_zero;
    Ok(result)
}

/// Angle tolerance below which an atom counts as lying in `Ran Y` without noise.
pub const NOISELESS_ANGLE_TOL: f64 = 1e-8;

/// Exact recovery for noiseless data: keep every atom with `γ_k < 10⁻⁸`
/// and solve `A_T x_T = y`.
pub fn noiseless_recover(y: &Measurement) -> Result<RecoveryResult> {
    let model = y.model();
    let spectrum = hankel::HankelSpectrum::new(y, 0.0, &SelectionConfig::default())?;
    let gammas = spectrum.gammas(model);
    let support: Vec<i64> = model
        .frequencies()
        .zip(&gammas)
        .filter(|(_, &g)| g < NOISELESS_ANGLE_TOL)
        .map(|(k, _)| k)
        .collect();
    if support.len() > model.m() {
        return Err(Error::OverComplete {
            atoms: support.len(),
            measurements: model.m(),
        });
    }
    let mut result = if support.is_empty() {
        RecoveryResult::from_fit(y, Vec::new(), &[])?
    } else {
        let values = least_squares(y, &support)?;
        RecoveryResult::from_fit(y, support, &values)?
    };
    result.gammas = gammas;
    result.epsilon1 = Some(NOISELESS_ANGLE_TOL);
    Ok(result)
}

/// Parameters of the full selection-and-pruning pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupersetConfig {
    pub selection: SelectionConfig,
    /// Removal threshold; `None` means `10σ`.
    pub epsilon2: Option<f64>,
    /// Lower bound on the removal threshold, so that atoms carrying only
    /// round-off are still removed from noiseless data.
    pub epsilon2_floor: f64,
    pub prune: PruneConfig,
}

impl Default for SupersetConfig {
    fn default() -> Self {
        Self {
            selection: SelectionConfig::default(),
            epsilon2: None,
            epsilon2_floor: 1e-8,
            prune: PruneConfig::default(),
        }
    }
}

impl SupersetConfig {
    pub fn epsilon2_for(&self, sigma: f64) -> f64 {
        self.epsilon2.unwrap_or(10.0 * sigma).max(self.epsilon2_floor)
    }
}

/// Superset selection followed by pruning.
pub fn superset_method(y: &Measurement, sigma: f64, config: &SupersetConfig) -> Result<RecoveryResult> {
    let selection = hankel::select_superset(y, sigma, &config.selection)?;
    recover_from_selection(y, selection, config.epsilon2_for(sigma), &config.prune)
}

pub fn recover_from_selection(
    y: &Measurement,
    selection: SupersetSelection,
    epsilon2: f64,
    config: &PruneConfig,
) -> Result<RecoveryResult> {
    if selection.omega.is_empty() {
        return Err(domain(format!(
            "no atom passed the angle test (epsilon1 = {:e})",
            selection.epsilon1
        )));
    }
    let mut result = prune(y, &selection.omega, epsilon2, config)?;
    result.gammas = selection.gammas;
    result.epsilon1 = Some(selection.epsilon1);
    Ok(result)
}

/// `‖Π_Ω y‖ · sin∠(Π_Ω y, Ran A_{Ω∖k})`, the angle form of `δ_k`.
pub fn projection_gap_angle_form(y: &Measurement, omega: &[i64], k: i64) -> Result<f64> {
    let model = y.model();
    validate_support(model, omega)?;
    let projected = project_onto(model, omega, y.values())?;
    let p_norm = linalg::norm(&projected);
    if p_norm == 0.0 {
        return Ok(0.0);
    }
    let reduced: Vec<i64> = omega.iter().copied().filter(|&j| j != k).collect();
    if reduced.is_empty() {
        return Ok(p_norm);
    }
    let q = linalg::orthonormal_columns(&atom_matrix(model, &reduced)?);
    Ok(p_norm * hankel::atom_angle(&projected, &q)?)
}

/// Distance from `a_k` to `Ran A_S`.
pub fn atom_distance(model: &MeasurementModel, k: i64, others: &[i64]) -> Result<f64> {
    let a = atom_window(model.n(), k, 0, model.m());
    if others.is_empty() {
        return Ok(linalg::norm(&a));
    }
    let q = linalg::orthonormal_columns(&atom_matrix(model, others)?);
    Ok(linalg::norm(&linalg::project_out(&q, &a)))
}
