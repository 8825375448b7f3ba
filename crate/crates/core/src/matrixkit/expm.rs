use super::{check_finite, check_square, identity, mul, norm1, CMatrix, C64};
use crate::error::{Error, Result};

/// Inputs with a larger 1-norm are rejected. Beyond this the squaring phase
/// needs more than ~20 doublings and overflow is likely for non-skew input.
pub const EXPM_NORM_LIMIT: f64 = 1e6;

/// Matrix exponential by scaling and squaring with a truncated Taylor
/// polynomial evaluated Paterson–Stockmeyer style.
///
/// The matrix is scaled by 2^-s until its 1-norm is at most 1, the degree is
/// the smallest one whose truncation bound `x^(m+1)/(m+1)! e^x` is below
/// 5e-17, and the result is squared s times. Relative error is ~1e-14 for
/// well-conditioned inputs with ‖A‖ ≤ 50.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let d = check_square(a)?;
    check_finite(a)?;
    let n1 = norm1(a);
    if n1 > EXPM_NORM_LIMIT {
        return Err(Error::ExpmRange {
            norm: n1,
            limit: EXPM_NORM_LIMIT,
        });
    }
    if n1 == 0.0 {
        return Ok(identity(d));
    }
    if is_diagonal(a) {
        let e = CMatrix::from_fn(d, d, |i, j| if i == j { a[(i, i)].exp() } else { C64::new(0.0, 0.0) });
        check_finite(&e).map_err(|_| Error::ExpmRange {
            norm: n1,
            limit: EXPM_NORM_LIMIT,
        })?;
        return Ok(e);
    }
    let s = if n1 > 1.0 { n1.log2().ceil() as i32 } else { 0 };
    let scale = 2f64.powi(-s);
    let x = a * C64::new(scale, 0.0);
    let xn = n1 * scale;
    let degree = taylor_degree(xn);
    let mut e = taylor_ps(&x, degree);
    for _ in 0..s {
        e = mul(&e, &e);
    }
    check_finite(&e).map_err(|_| Error::ExpmRange {
        norm: n1,
        limit: EXPM_NORM_LIMIT,
    })?;
    Ok(e)
}

fn is_diagonal(a: &CMatrix) -> bool {
    let d = a.nrows();
    (0..d).all(|j| (0..d).all(|i| i == j || a[(i, j)] == C64::new(0.0, 0.0)))
}

fn taylor_degree(xn: f64) -> usize {
    let mut term = xn; // x^(m+1)/(m+1)! for m = 0
    for m in 1..=30usize {
        term *= xn / (m + 1) as f64;
        if term * xn.exp() <= 5e-17 {
            return m;
        }
    }
    30
}

/// Σ_{k≤m} X^k/k! with about 2√m matrix products.
fn taylor_ps(x: &CMatrix, m: usize) -> CMatrix {
    let d = x.nrows();
    let p = ((m + 1) as f64).sqrt().ceil().max(1.0) as usize;
    let mut coef = vec![1.0f64; m + 1];
    for k in 1..=m {
        coef[k] = coef[k - 1] / k as f64;
    }
    // powers[i] = X^i for i = 0..=p
    let mut powers = Vec::with_capacity(p + 1);
    powers.push(identity(d));
    powers.push(x.clone());
    for i in 2..=p {
        let next = mul(&powers[i - 1], x);
        powers.push(next);
    }
    let blocks = m / p; // highest block index
    let block = |j: usize| -> CMatrix {
        let mut acc = CMatrix::zeros(d, d);
        for i in 0..p {
            let k = j * p + i;
            if k > m {
                break;
            }
            acc += &powers[i] * C64::new(coef[k], 0.0);
        }
        acc
    };
    let mut acc = block(blocks);
    for j in (0..blocks).rev() {
        acc = mul(&acc, &powers[p]) + block(j);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::{from_real_rows, norm2, ZERO};

    fn taylor_oracle(a: &CMatrix, terms: usize) -> CMatrix {
        let d = a.nrows();
        let mut sum = identity(d);
        let mut term = identity(d);
        for k in 1..terms {
            term = &term * a * C64::new(1.0 / k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    #[test]
    fn zero_gives_identity() {
        let z = CMatrix::from_element(2, 2, ZERO);
        assert_eq!(expm(&z).unwrap(), identity(2));
    }

    #[test]
    fn full_rotation_is_identity() {
        let tau = 2.0 * std::f64::consts::PI;
        let a = from_real_rows(&[&[0.0, tau], &[-tau, 0.0]]);
        let e = expm(&a).unwrap();
        assert!(norm2(&(e - identity(2))) < 1e-12);
    }

    #[test]
    fn matches_long_taylor_series() {
        // deterministic pseudo-random entries scaled to norm <= 1
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = CMatrix::from_fn(6, 6, |_, _| C64::new(next(), next()));
        let a = &a * C64::new(1.0 / norm2(&a), 0.0);
        let oracle = taylor_oracle(&a, 200);
        let e = expm(&a).unwrap();
        assert!(norm2(&(e - &oracle)) <= 1e-12 * norm2(&oracle));
    }

    #[test]
    fn rejects_huge_norm() {
        let a = CMatrix::from_element(2, 2, C64::new(1e7, 0.0));
        assert!(matches!(expm(&a), Err(Error::ExpmRange { .. })));
    }

    #[test]
    fn large_diagonal_is_accurate() {
        let a = crate::matrixkit::diag(&[C64::new(-40.0, 3.0), C64::new(10.0, -20.0)]);
        let e = expm(&a).unwrap();
        for k in 0..2 {
            let exact = a[(k, k)].exp();
            assert!((e[(k, k)] - exact).norm() <= 1e-12 * exact.norm());
        }
    }
}
