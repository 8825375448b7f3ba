//! Dense complex linear algebra kernel.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>` (column-major storage). Products
//! go through `matrixmultiply::zgemm`, which is several times faster than the
//! generic nalgebra kernel for complex entries; factorizations that are not
//! performance critical (SVD, Hessenberg-QR Schur) come from nalgebra.

mod expm;
mod lu;
mod schur;
mod svd;

pub use expm::{expm, EXPM_NORM_LIMIT};
pub use lu::{lu, solve, Lu};
pub use schur::{eigenvalues, ordered_schur, solve_triangular_sylvester, SchurForm};
pub use svd::{kernel_basis, norm2, norm2_upto, numerical_rank, sigma_min, singular_values, RANK_TOL};

use crate::error::{Error, Result};
use matrixmultiply::CGemmOption;
use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

pub type CMatrix = DMatrix<C64>;

/// Machine epsilon for f64.
pub const UNIT_ROUNDOFF: f64 = f64::EPSILON;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn zeros(r: usize, c: usize) -> CMatrix {
    CMatrix::zeros(r, c)
}

/// Builds a matrix from rows, rejecting ragged input and non-finite entries.
pub fn from_rows(rows: &[Vec<C64>]) -> Result<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("ragged rows".into()));
    }
    let m = CMatrix::from_fn(r, c, |i, j| rows[i][j]);
    check_finite(&m)?;
    Ok(m)
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let r = rows.len();
    let c = rows[0].len();
    CMatrix::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
}

pub fn diag(entries: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries))
}

pub fn check_finite(a: &CMatrix) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let z = a[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

pub fn check_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// `a * b` via zgemm.
pub fn mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "mul: inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // SAFETY: Complex64 is repr(C) {re, im}, layout-identical to [f64; 2];
    // nalgebra DMatrix storage is contiguous column-major, so the row stride
    // is 1 and the column stride is the row count.
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    out
}

pub fn mul3(a: &CMatrix, b: &CMatrix, c: &CMatrix) -> CMatrix {
    mul(&mul(a, b), c)
}

/// Product of a list of factors, left to right.
pub fn product(factors: &[&CMatrix]) -> CMatrix {
    let mut it = factors.iter();
    let first = it.next().expect("product of zero factors");
    it.fold((*first).clone(), |acc, f| mul(&acc, f))
}

/// `[a, b] = ab - ba`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    mul(a, b) - mul(b, a)
}

pub fn adjoint(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

/// Maximum absolute column sum.
pub fn norm1(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_fro(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Largest entrywise deviation from being Hermitian, in spectral norm.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    norm2(&(a - a.adjoint()))
}

pub fn skew_hermitian_defect(a: &CMatrix) -> f64 {
    norm2(&(a + a.adjoint()))
}

/// Nilpotent right shift on `d` coordinates: ones on the first superdiagonal.
pub fn shift_matrix(d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| if j == i + 1 { ONE } else { ZERO })
}
