//! Dense linear-algebra helpers shared by the decomposition and the samplers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Eigenvector columns follow the same order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Flips `v` so that its largest-magnitude entry is positive. Returns true on flip.
pub fn fix_sign(v: &mut DVector<f64>) -> bool {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

/// Solves max Tr(Bᵀ M) over P×K matrices with orthonormal columns: B = U Vᵀ
/// from the thin SVD of `m`.
pub fn procrustes(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax();
    if !scale.is_finite() {
        return Err(Error::Numerical("non-finite Procrustes target".into()));
    }
    if scale == 0.0 {
        return Err(Error::DegenerateInput("Procrustes target is the zero matrix".into()));
    }
    let svd = m.clone().svd(true, true);
    let mut u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let mut v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return Vᵀ".into()))?;
    // Pairwise sign normalisation of singular vectors; U Vᵀ is unchanged.
    for j in 0..u.ncols() {
        let mut col = u.column(j).into_owned();
        if fix_sign(&mut col) {
            u.set_column(j, &col);
            let row = -v_t.row(j).into_owned();
            v_t.set_row(j, &row);
        }
    }
    Ok(u * v_t)
}

/// Orthonormal basis of the column space of `m` (thin QR), with the sign
/// convention that each column of R has a positive diagonal.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j).into_owned();
            q.set_column(j, &col);
        }
    }
    q
}

/// log|A| for symmetric positive-definite `a`, via Cholesky.
pub fn spd_log_det(a: &DMatrix<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Largest absolute deviation of `m` from the identity.
pub fn identity_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    (m - DMatrix::<f64>::identity(n, m.ncols())).amax()
}

/// B diag(c) Bᵀ.
pub fn low_rank_product(b: &DMatrix<f64>, c: &[f64]) -> DMatrix<f64> {
    let mut scaled = b.clone();
    for (k, &ck) in c.iter().enumerate() {
        scaled.column_mut(k).scale_mut(ck);
    }
    scaled * b.transpose()
}

/// B diag(c).
pub fn scale_columns(b: &DMatrix<f64>, c: &[f64]) -> DMatrix<f64> {
    let mut out = b.clone();
    for (k, &ck) in c.iter().enumerate() {
        out.column_mut(k).scale_mut(ck);
    }
    out
}
