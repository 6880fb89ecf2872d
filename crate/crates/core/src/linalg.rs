//! Small dense helpers shared by the solvers.
//!
//! Everything here operates on `nalgebra` dynamic matrices; problem sizes
//! are desk scale (n, l1, l2, d in the single digits), so plain dense
//! algorithms are the right tool.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Replace `m` by `(m + m') / 2`.
///
/// Exact on already-symmetric input: `(a + a) / 2 == a` in IEEE-754.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let nt = m.transpose();
    *m += nt;
    *m *= 0.5;
}

/// Symmetrized copy.
pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    symmetrize(&mut s);
    s
}

/// Frobenius norm of `m - m'`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

/// Minimum eigenvalue of a symmetric matrix; `+inf` for the 0x0 matrix
/// (an empty block imposes no constraint).
pub fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factor of a symmetric positive definite matrix, treating the
/// 0x0 matrix as trivially factorizable.
pub fn spd_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}

/// Inverse through Cholesky; `None` when the factorization fails.
/// The inverse of the 0x0 matrix is the 0x0 matrix, so that products
/// over an empty control channel contribute nothing.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    spd_cholesky(m).map(|c| c.inverse())
}

/// max |m[i,j]| over all entries; 0 for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Check declared shape, reporting the offending block by name.
pub fn expect_shape(m: &DMatrix<f64>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dims(
            what,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrize_is_exact_on_symmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 3.0]);
        let mut s = m.clone();
        symmetrize(&mut s);
        assert_eq!(m, s);
    }

    #[test]
    fn empty_blocks_are_neutral() {
        let e = DMatrix::<f64>::zeros(0, 0);
        assert_eq!(min_sym_eig(&e), f64::INFINITY);
        assert_eq!(spd_inverse(&e).unwrap().nrows(), 0);
    }

    #[test]
    fn spd_inverse_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_inverse(&m).is_none());
    }
}
