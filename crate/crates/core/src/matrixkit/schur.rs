use super::{check_finite, check_square, mul, norm_fro, CMatrix, C64};
use crate::error::{Error, Result};

/// Complex Schur form `A = Q T Q*` with the selected eigenvalues leading.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub q: CMatrix,
    pub t: CMatrix,
    /// Number of selected eigenvalues; they occupy `T[..selected, ..selected]`.
    pub selected: usize,
    /// `perm[k]` is the diagonal position, in the unordered Schur form, of the
    /// eigenvalue now at position `k`.
    pub perm: Vec<usize>,
}

impl SchurForm {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.t.diagonal().iter().copied().collect()
    }

    pub fn reconstruct(&self) -> CMatrix {
        mul(&mul(&self.q, &self.t), &self.q.adjoint())
    }

    pub fn t11(&self) -> CMatrix {
        let k = self.selected;
        self.t.view((0, 0), (k, k)).into_owned()
    }

    pub fn t12(&self) -> CMatrix {
        let k = self.selected;
        let d = self.t.nrows();
        self.t.view((0, k), (k, d - k)).into_owned()
    }

    pub fn t22(&self) -> CMatrix {
        let k = self.selected;
        let d = self.t.nrows();
        self.t.view((k, k), (d - k, d - k)).into_owned()
    }
}

/// Unordered complex Schur form via nalgebra's shifted QR.
fn schur_raw(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 0).ok_or(Error::EigenSolver)?;
    let (mut q, mut t) = schur.unpack();
    triangularize(&mut q, &mut t);
    Ok((q, t))
}

/// Removes any remaining 2x2 bumps below the diagonal with one unitary
/// rotation each, and zeroes negligible subdiagonal entries.
fn triangularize(q: &mut CMatrix, t: &mut CMatrix) {
    let d = t.nrows();
    let scale = norm_fro(t).max(f64::MIN_POSITIVE);
    for i in 0..d.saturating_sub(1) {
        let sub = t[(i + 1, i)];
        if sub.norm() <= 4.0 * f64::EPSILON * scale {
            t[(i + 1, i)] = C64::new(0.0, 0.0);
            continue;
        }
        // eigenvector of the 2x2 block for one of its eigenvalues
        let (a, b, c, dd) = (t[(i, i)], t[(i, i + 1)], sub, t[(i + 1, i + 1)]);
        let tr = a + dd;
        let det = a * dd - b * c;
        let disc = (tr * tr * 0.25 - det).sqrt();
        let mu = tr * 0.5 + disc;
        let (mut v1, mut v2) = if (mu - a).norm() >= (mu - dd).norm() {
            (b, mu - a)
        } else {
            (mu - dd, c)
        };
        let r = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
        v1 /= r;
        v2 /= r;
        apply_rotation(q, t, i, v1, v2);
        t[(i + 1, i)] = C64::new(0.0, 0.0);
    }
}

/// `T ← G* T G`, `Q ← Q G` on coordinates (i, i+1) with `G = [v, v⊥]`.
fn apply_rotation(q: &mut CMatrix, t: &mut CMatrix, i: usize, v1: C64, v2: C64) {
    let d = t.nrows();
    let (g11, g21, g12, g22) = (v1, v2, -v2.conj(), v1.conj());
    for r in 0..d {
        let (x, y) = (t[(r, i)], t[(r, i + 1)]);
        t[(r, i)] = x * g11 + y * g21;
        t[(r, i + 1)] = x * g12 + y * g22;
        let (x, y) = (q[(r, i)], q[(r, i + 1)]);
        q[(r, i)] = x * g11 + y * g21;
        q[(r, i + 1)] = x * g12 + y * g22;
    }
    for col in 0..d {
        let (x, y) = (t[(i, col)], t[(i + 1, col)]);
        t[(i, col)] = g11.conj() * x + g21.conj() * y;
        t[(i + 1, col)] = g12.conj() * x + g22.conj() * y;
    }
}

/// Swaps the adjacent diagonal entries `T[i,i]` and `T[i+1,i+1]`.
fn swap_adjacent(q: &mut CMatrix, t: &mut CMatrix, i: usize, tol: f64) -> Result<()> {
    let a = t[(i, i)];
    let b = t[(i + 1, i + 1)];
    if (a - b).norm() <= tol {
        return Err(Error::SchurCollision {
            selected: b,
            other: a,
        });
    }
    let c = t[(i, i + 1)];
    let diff = b - a;
    let r = (c.norm_sqr() + diff.norm_sqr()).sqrt();
    apply_rotation(q, t, i, c / r, diff / r);
    t[(i + 1, i)] = C64::new(0.0, 0.0);
    t[(i, i)] = b;
    t[(i + 1, i + 1)] = a;
    Ok(())
}

/// Complex Schur decomposition with the eigenvalues satisfying `select`
/// moved to the leading block, keeping their relative order.
///
/// Reconstruction residual is a small multiple of `u·‖A‖` (κ ≈ 10·d in
/// practice). Fails when a selected eigenvalue must pass an unselected one
/// that coincides with it to `1e-12·max(1, ‖A‖)`.
pub fn ordered_schur(a: &CMatrix, select: impl Fn(C64) -> bool) -> Result<SchurForm> {
    let d = check_square(a)?;
    check_finite(a)?;
    let (mut q, mut t) = schur_raw(a)?;
    let tol = 1e-12 * norm_fro(a).max(1.0);
    let mut perm: Vec<usize> = (0..d).collect();
    let mut k = 0;
    for j in 0..d {
        if select(t[(j, j)]) {
            for i in (k..j).rev() {
                swap_adjacent(&mut q, &mut t, i, tol)?;
                perm.swap(i, i + 1);
            }
            k += 1;
        }
    }
    Ok(SchurForm {
        q,
        t,
        selected: k,
        perm,
    })
}

/// Eigenvalues (diagonal of the complex Schur factor), in QR output order.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    check_square(a)?;
    check_finite(a)?;
    let (_, t) = schur_raw(a)?;
    Ok(t.diagonal().iter().copied().collect())
}

/// Solves `T11 X − X T22 = C` for upper-triangular `T11`, `T22` by column
/// back substitution. Fails if the two spectra meet.
pub fn solve_triangular_sylvester(t11: &CMatrix, t22: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    let k = t11.nrows();
    let l = t22.nrows();
    if c.shape() != (k, l) {
        return Err(Error::Dimension("sylvester right-hand side".into()));
    }
    let scale = norm_fro(t11).max(norm_fro(t22)).max(1.0);
    let mut x = CMatrix::zeros(k, l);
    for j in 0..l {
        let mut rhs: Vec<C64> = (0..k).map(|i| c[(i, j)]).collect();
        for m in 0..j {
            let f = t22[(m, j)];
            for i in 0..k {
                rhs[i] += x[(i, m)] * f;
            }
        }
        let shift = t22[(j, j)];
        for i in (0..k).rev() {
            let mut s = rhs[i];
            for m in i + 1..k {
                s -= t11[(i, m)] * x[(m, j)];
            }
            let piv = t11[(i, i)] - shift;
            if piv.norm() <= 1e-14 * scale {
                return Err(Error::SchurCollision {
                    selected: t11[(i, i)],
                    other: shift,
                });
            }
            x[(i, j)] = s / piv;
        }
    }
    Ok(x)
}
