//! Small dense linear-algebra helpers over `nalgebra` for the N x N matrices
//! that appear everywhere in this crate (N is the number of modulating states,
//! typically below ten).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RMatrix = DMatrix<f64>;
pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(c)
}

/// Real part, failing if the imaginary part is not negligible relative to `tol * max|m|`.
pub fn real_part(m: &CMatrix, tol: f64, what: &str) -> Result<RMatrix> {
    let scale = m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
    let worst = m.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    if worst > tol * scale {
        return Err(Error::Spectral(format!("{what}: imaginary residue {worst:e} where a real matrix was expected")));
    }
    Ok(m.map(|z| z.re))
}

pub fn diag(d: &[f64]) -> RMatrix {
    RMatrix::from_diagonal(&DVector::from_column_slice(d))
}

pub fn cdiag(d: &[Complex64]) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_column_slice(d))
}

pub fn max_abs(m: &RMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.norm()))
}

pub fn row_sums(m: &RMatrix) -> Vec<f64> {
    m.row_iter().map(|r| r.sum()).collect()
}

pub fn inverse(m: &RMatrix, what: &'static str) -> Result<RMatrix> {
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

pub fn inverse_c(m: &CMatrix, what: &'static str) -> Result<CMatrix> {
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

/// Solves `a x = b` by LU.
pub fn solve(a: &RMatrix, b: &RMatrix, what: &'static str) -> Result<RMatrix> {
    a.clone().lu().solve(b).ok_or(Error::Singular(what))
}

pub fn solve_c(a: &CMatrix, b: &CMatrix, what: &'static str) -> Result<CMatrix> {
    a.clone().lu().solve(b).ok_or(Error::Singular(what))
}

pub fn expm(m: &RMatrix) -> RMatrix {
    m.exp()
}

pub fn expm_c(m: &CMatrix) -> CMatrix {
    m.exp()
}

pub fn eigenvalues(m: &RMatrix) -> Vec<Complex64> {
    m.complex_eigenvalues().iter().copied().collect()
}

pub fn eigenvalues_c(m: &CMatrix) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Spectral("Schur iteration did not converge".into()))?;
    let ev = schur.eigenvalues().ok_or_else(|| Error::Spectral("Schur form is not triangular".into()))?;
    Ok(ev.iter().copied().collect())
}

/// Unit right null vector of a (numerically) singular matrix, together with the
/// smallest singular value relative to the largest one.
pub fn null_vector_c(m: &CMatrix) -> (CVector, f64) {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let (k, smin) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
    let mut v = CVector::from_iterator(n, v_t.row(k).iter().map(|z| z.conj()));
    // fix the phase so the largest entry is real and positive
    let (_, pivot) = v.iter().fold((0.0, c(1.0)), |acc, z| if z.norm() > acc.0 { (z.norm(), *z) } else { acc });
    let phase = pivot.conj() / pivot.norm();
    v *= phase;
    (v, if smax > 0.0 { smin / smax } else { 0.0 })
}

pub fn null_vector(m: &RMatrix) -> (Vec<f64>, f64) {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (k, smin) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
    let v: Vec<f64> = (0..n).map(|j| v_t[(k, j)]).collect();
    (v, if smax > 0.0 { smin / smax } else { 0.0 })
}

/// Largest singular value.
pub fn spectral_norm_c(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.iter().fold(0.0f64, |a, &s| a.max(s))
}

pub fn condition_number(m: &RMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0f64, |a, &s| a.max(s));
    let smin = sv.iter().fold(f64::INFINITY, |a, &s| a.min(s));
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Eigen-decomposition `m = S diag(lambda) S^-1` for a matrix with distinct eigenvalues.
/// Fails with `DefectiveMatrix` when two eigenvalues are closer than `gap_tol` (relative).
pub fn eig_decompose(m: &CMatrix, gap_tol: f64) -> Result<(Vec<Complex64>, CMatrix)> {
    let n = m.nrows();
    let lambda = eigenvalues_c(m)?;
    let scale = 1.0 + max_abs_c(m);
    let mut gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            gap = gap.min((lambda[i] - lambda[j]).norm() / scale);
        }
    }
    if gap < gap_tol {
        return Err(Error::DefectiveMatrix { gap });
    }
    let mut s = CMatrix::zeros(n, n);
    for (k, &l) in lambda.iter().enumerate() {
        let shifted = m - CMatrix::identity(n, n) * l;
        let (v, _) = null_vector_c(&shifted);
        s.set_column(k, &v);
    }
    Ok((lambda, s))
}

pub fn determinant_c(m: &CMatrix) -> Complex64 {
    m.clone().lu().determinant()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_vector_of_rank_deficient_matrix() {
        let m = RMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let (v, rel) = null_vector(&m);
        assert!(rel < 1e-14);
        assert!((v[0] * 1.0 + v[1] * 2.0).abs() < 1e-14);
    }

    #[test]
    fn eig_decompose_reconstructs() {
        let m = to_complex(&RMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]));
        let (l, s) = eig_decompose(&m, 1e-10).unwrap();
        let back = &s * cdiag(&l) * s.clone().try_inverse().unwrap();
        assert!(max_abs_c(&(back - m)) < 1e-12);
    }

    #[test]
    fn repeated_eigenvalue_is_defective() {
        let m = to_complex(&RMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));
        assert!(matches!(eig_decompose(&m, 1e-8), Err(Error::DefectiveMatrix { .. })));
    }
}
