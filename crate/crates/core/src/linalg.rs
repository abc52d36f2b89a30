//! Small dense complex helpers shared by the recovery routines.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Euclidean norm of a complex vector.
pub fn norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Left singular vectors and singular values, largest first.
pub fn svd_left(m: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
    let svd = nalgebra::SVD::try_new(m.clone(), true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = svd.u.expect("left vectors requested");
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = CMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    Ok((u_sorted, values))
}

/// Full thin SVD `m = U diag(s) V*` with singular values sorted descending.
pub fn svd_full(m: &CMatrix) -> Result<(CMatrix, Vec<f64>, CMatrix)> {
    let svd = nalgebra::SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = CMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let v_sorted = CMatrix::from_fn(v_t.ncols(), order.len(), |i, j| v_t[(order[j], i)].conj());
    Ok((u_sorted, s, v_sorted))
}

/// Orthonormal basis of the column space of a full-column-rank matrix.
pub fn orthonormal_columns(m: &CMatrix) -> CMatrix {
    m.clone().qr().q()
}

/// `v - Q Q* v` for an orthonormal `Q`.
pub fn project_out(q: &CMatrix, v: &CVector) -> CVector {
    let coeffs = q.ad_mul(v);
    v - q * coeffs
}

/// Solves `min ‖b − A x‖` for a tall matrix with independent columns via QR.
pub fn least_squares(a: &CMatrix, b: &CVector) -> Result<CVector> {
    let (rows, cols) = a.shape();
    if cols > rows {
        return Err(Error::OverComplete {
            atoms: cols,
            measurements: rows,
        });
    }
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let rhs = q.ad_mul(b);
    r.solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("rank-deficient least-squares system".into()))
}

/// Eigenvalues of a square complex matrix, via the complex Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}
