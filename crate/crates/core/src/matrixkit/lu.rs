use super::{check_finite, check_square, norm1, CMatrix, C64};
use crate::error::{Error, Result};

/// Pivots smaller than this times ‖A‖₁ are treated as exact zeros.
pub const PIVOT_TOL: f64 = 1e-14;

/// LU factorization with partial pivoting, `PA = LU`, stored compactly.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
}

/// Factors `a`. Fails with the offending pivot when `a` is singular to
/// `PIVOT_TOL · ‖a‖₁`. Condition numbers above ~1e12 are accepted but the
/// solve residual contract no longer holds.
pub fn lu(a: &CMatrix) -> Result<Lu> {
    let n = check_square(a)?;
    check_finite(a)?;
    let scale = norm1(a);
    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let data = m.as_mut_slice();
    for k in 0..n {
        let col = &data[k * n..(k + 1) * n];
        let (p, pv) = (k..n)
            .map(|i| (i, col[i].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pv <= PIVOT_TOL * scale || pv == 0.0 {
            return Err(Error::Singular {
                pivot: pv,
                column: k,
            });
        }
        if p != k {
            perm.swap(p, k);
            for j in 0..n {
                data.swap(j * n + p, j * n + k);
            }
        }
        let inv = C64::new(1.0, 0.0) / data[k * n + k];
        for i in k + 1..n {
            data[k * n + i] *= inv;
        }
        let (left, right) = data.split_at_mut((k + 1) * n);
        let lcol = &left[k * n..];
        for j in 0..n - k - 1 {
            let col = &mut right[j * n..(j + 1) * n];
            let f = col[k];
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for i in k + 1..n {
                col[i] -= lcol[i] * f;
            }
        }
    }
    Ok(Lu { lu: m, perm })
}

impl Lu {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "solve: A is {n}x{n} but B has {} rows",
                b.nrows()
            )));
        }
        let lu = self.lu.as_slice();
        let mut x = CMatrix::from_fn(n, b.ncols(), |i, j| b[(self.perm[i], j)]);
        for j in 0..b.ncols() {
            let col = &mut x.as_mut_slice()[j * n..(j + 1) * n];
            // forward substitution, unit lower triangle
            for k in 0..n {
                let v = col[k];
                if v.re == 0.0 && v.im == 0.0 {
                    continue;
                }
                let lcol = &lu[k * n..(k + 1) * n];
                for i in k + 1..n {
                    col[i] -= lcol[i] * v;
                }
            }
            // back substitution, upper triangle
            for k in (0..n).rev() {
                let ucol = &lu[k * n..(k + 1) * n];
                col[k] /= ucol[k];
                let v = col[k];
                if v.re == 0.0 && v.im == 0.0 {
                    continue;
                }
                for i in 0..k {
                    col[i] -= ucol[i] * v;
                }
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        self.solve(&CMatrix::identity(self.dim(), self.dim()))
    }
}

/// Solves `A X = B` by partial-pivot LU.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    lu(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::{diag, identity, mul, norm2, c};

    #[test]
    fn identity_system() {
        let b = CMatrix::from_fn(3, 2, |i, j| c(i as f64, j as f64 + 1.0));
        assert_eq!(solve(&identity(3), &b).unwrap(), b);
    }

    #[test]
    fn diagonal_inverse() {
        let a = diag(&[c(2.0, 0.0), c(4.0, 0.0)]);
        let x = solve(&a, &identity(2)).unwrap();
        assert!(norm2(&(x - diag(&[c(0.5, 0.0), c(0.25, 0.0)]))) < 1e-15);
    }

    #[test]
    fn well_conditioned_residual() {
        let a = CMatrix::from_fn(8, 8, |i, j| {
            let base = c(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 1.0);
            if i == j { base + c(12.0, 0.0) } else { base }
        });
        let b = CMatrix::from_fn(8, 3, |i, j| c((i + j) as f64, 1.0));
        let x = solve(&a, &b).unwrap();
        assert!(norm2(&(mul(&a, &x) - &b)) <= 1e-10 * norm2(&b));
    }

    #[test]
    fn singular_reports_pivot() {
        let a = CMatrix::from_fn(3, 3, |i, _| c(i as f64 + 1.0, 0.0));
        match solve(&a, &identity(3)) {
            Err(Error::Singular { pivot, .. }) => assert!(pivot < 1e-13),
            other => panic!("expected singularity, got {other:?}"),
        }
    }
}
