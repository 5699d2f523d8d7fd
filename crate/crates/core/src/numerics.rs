//! Dense complex-matrix primitives shared by every other module.
//!
//! Everything here operates on Hermitian matrices: eigendecomposition with a
//! fixed descending order, a positive-definite solve, and the log-det kernel
//! `sum log2(1 + lambda_i)`. Numerical contracts (symmetrization, eigenvalue
//! clamping) are centralized so downstream code never has to re-derive them.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, the working representation for all channel and
/// covariance quantities.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Hermitian deviation tolerated before a matrix is rejected, relative to
/// its Frobenius norm.
pub const HERMITIAN_REL_TOL: f64 = 1e-10;
/// Negative eigenvalues of a PSD-up-to-round-off matrix are clamped to zero
/// when they exceed `-PSD_CLAMP_REL * max|lambda|`.
pub const PSD_CLAMP_REL: f64 = 1e-12;
/// Positive-definiteness floor for [`solve_hermitian`], relative to the
/// Frobenius norm of the matrix.
pub const PD_FLOOR_REL: f64 = 1e-12;

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are real and sorted descending; column `k` of `eigenvectors`
/// pairs with `eigenvalues[k]`. For a PSD input, negative round-off
/// eigenvalues are clamped to zero.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

/// Returns an error if any entry is NaN or infinite.
pub fn check_finite(a: &CMat) -> Result<()> {
    for col in 0..a.ncols() {
        for row in 0..a.nrows() {
            let z = a[(row, col)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

fn check_square(a: &CMat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

/// Returns `(A + A^H) / 2` after checking that the deviation from Hermitian
/// symmetry stays below `HERMITIAN_REL_TOL * ||A||_F`.
pub fn symmetrize(a: &CMat) -> Result<CMat> {
    check_square(a)?;
    check_finite(a)?;
    let deviation = (a - a.adjoint()).norm();
    let tolerance = HERMITIAN_REL_TOL * a.norm();
    if deviation > tolerance {
        return Err(Error::NotHermitian {
            deviation,
            tolerance,
        });
    }
    Ok((a + a.adjoint()).scale(0.5))
}

/// Real part of the trace. Valid for Hermitian matrices, whose trace is real.
pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// Hermitian eigendecomposition with descending eigenvalues.
///
/// The input is symmetrized before decomposing. If the spectrum is
/// nonnegative up to round-off, negative eigenvalues are clamped to zero;
/// genuinely indefinite spectra are returned as-is.
pub fn hermitian_eig(a: &CMat) -> Result<HermitianEig> {
    let sym = symmetrize(a)?;
    let n = sym.nrows();
    let eig =
        SymmetricEigen::try_new(sym, f64::EPSILON, 100_000).ok_or(Error::EigFailed)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[src]);
        eigenvectors
            .column_mut(dst)
            .copy_from(&eig.eigenvectors.column(src));
    }

    let scale = eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    if eigenvalues.iter().all(|&l| l >= -PSD_CLAMP_REL * scale) {
        for l in &mut eigenvalues {
            if *l < 0.0 {
                *l = 0.0;
            }
        }
    }

    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Solves `A x = b` for Hermitian positive-definite `A` via the spectral
/// decomposition. Fails with [`Error::Singular`] naming the smallest
/// eigenvalue when `A` is indefinite or singular.
pub fn solve_hermitian(a: &CMat, b: &CVec) -> Result<CVec> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "solve_hermitian",
            expected: format!("rhs of length {}", a.nrows()),
            got: format!("length {}", b.len()),
        });
    }
    let eig = hermitian_eig(a)?;
    let floor = PD_FLOOR_REL * a.norm();
    let min_eigenvalue = eig.eigenvalues.last().copied().unwrap_or(0.0);
    if min_eigenvalue <= floor {
        return Err(Error::Singular { min_eigenvalue });
    }
    let u = &eig.eigenvectors;
    let mut y = u.adjoint() * b;
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        y[i] /= Complex64::new(*lambda, 0.0);
    }
    Ok(u * y)
}

/// `sum_i log2(1 + lambda_i(A))` for Hermitian PSD `A`.
///
/// Equals `log2 |I + A|`; zero iff `A = 0`.
pub fn logdet2_plus_identity(a: &CMat) -> Result<f64> {
    let eig = hermitian_eig(a)?;
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, &l| m.max(l.abs()));
    let min = eig.eigenvalues.last().copied().unwrap_or(0.0);
    if min < -PSD_CLAMP_REL * scale {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(eig
        .eigenvalues
        .iter()
        .map(|&l| (1.0 + l.max(0.0)).log2())
        .sum())
}
