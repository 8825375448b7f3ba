use super::CMatrix;

/// Shared relative tolerance for rank and kernel decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Singular values in descending order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Spectral norm (largest singular value).
pub fn norm2(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
        return 0.0;
    }
    singular_values(a)[0]
}

/// `‖a‖₂` when it may exceed `tol`; when the Frobenius norm already shows
/// `‖a‖₂ ≤ tol` that cheaper bound is returned instead. Use for threshold
/// checks against `tol`.
pub fn norm2_upto(a: &CMatrix, tol: f64) -> f64 {
    let fro = super::norm_fro(a);
    if fro <= tol {
        fro
    } else {
        norm2(a)
    }
}

pub fn sigma_min(a: &CMatrix) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Number of singular values above `tol · σ_max`.
pub fn numerical_rank(a: &CMatrix, tol: f64) -> usize {
    let s = singular_values(a);
    let Some(&smax) = s.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > tol * smax).count()
}

/// Orthonormal basis (as columns) of the numerical kernel of a square or
/// wide matrix: right singular vectors whose singular value is at most
/// `tol · σ_max`.
pub fn kernel_basis(a: &CMatrix, tol: f64) -> CMatrix {
    let n = a.ncols();
    // pad to square so the SVD returns a full V
    let padded = if a.nrows() < n {
        let mut p = CMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&k| s[k] <= tol * smax || smax == 0.0).collect();
    let mut basis = CMatrix::zeros(n, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        for i in 0..n {
            basis[(i, col)] = v_t[(k, i)].conj();
        }
    }
    basis
}
