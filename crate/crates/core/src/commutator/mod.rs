//! Solvers for the commutator equation `BA − AB = [P', P]` and its mollified
//! approximate variant used when `λ(t)` is not isolated.
//!
//! Every construction returns the residual matrices of the identity it is
//! supposed to satisfy, so callers can check them without recomputing.

mod mollify;
mod nogap;
mod schedule;

pub use mollify::{MollifiedDerivative, BUMP_NODES};
pub use nogap::{solve_multi, solve_nogap, MultiMode};
pub use schedule::{delta_schedule, predicted_exponent, remainder_weight, DeltaSchedule, ScheduleKind};

use crate::error::{Error, Result};
use crate::matrixkit::{self, commutator, identity, mul, mul3, norm2, norm_fro, CMatrix, C64};
use crate::opfamily::{OperatorFamily, ProjectionFamily, SpectralCurve};
use crate::spectral::{Contour, MAX_NODES};
use crate::util::{sig12, try_par_map};
use std::io::Write;

/// Smallest admissible gap, relative to `max(1, ‖A‖)`, for contour quadrature.
pub const MIN_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum Construction {
    Contour,
    PoleForm,
    Approximate { n: usize, deltas: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct CommutatorSolution {
    pub construction: Construction,
    pub grid: Vec<f64>,
    pub b: Vec<CMatrix>,
    /// `BA − AB − target`, or `BA − AB + C − K_n` for the approximate case.
    pub residual: Vec<CMatrix>,
    /// Empty unless the construction is approximate.
    pub c_plus: Vec<CMatrix>,
    pub c_minus: Vec<CMatrix>,
    /// Grid indices left out (curve collisions in the multi-curve gap mode).
    pub skipped: Vec<usize>,
    pub warnings: Vec<String>,
}

impl CommutatorSolution {
    fn exact(construction: Construction, grid: &[f64], parts: Vec<(CMatrix, CMatrix)>) -> Self {
        let (b, residual) = parts.into_iter().unzip();
        Self {
            construction,
            grid: grid.to_vec(),
            b,
            residual,
            c_plus: Vec::new(),
            c_minus: Vec::new(),
            skipped: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Spectral norm of the residual per grid point (NaN where skipped).
    pub fn residual_norms(&self) -> Vec<f64> {
        self.residual
            .iter()
            .enumerate()
            .map(|(k, r)| if self.skipped.contains(&k) { f64::NAN } else { norm2(r) })
            .collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_norms().into_iter().filter(|x| !x.is_nan()).fold(0.0, f64::max)
    }

    pub fn max_b_norm(&self) -> f64 {
        self.b.iter().map(norm2).fold(0.0, f64::max)
    }

    /// CSV with columns `t,residual_norm,C_plus_norm,C_minus_norm`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["t", "residual_norm", "C_plus_norm", "C_minus_norm"]).map_err(io)?;
        let res = self.residual_norms();
        for (k, &t) in self.grid.iter().enumerate() {
            let cp = self.c_plus.get(k).map_or(0.0, norm2);
            let cm = self.c_minus.get(k).map_or(0.0, norm2);
            w.write_record([sig12(t), sig12(res[k]), sig12(cp), sig12(cm)]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(2πi)⁻¹ ∮ (z−A)⁻¹ X (z−A)⁻¹ dz` summed over `contours`, by the trapezoid
/// rule with node doubling until successive estimates agree to `1e-12`.
pub(crate) fn resolvent_sandwich(a: &CMatrix, x: &CMatrix, contours: &[Contour]) -> Result<CMatrix> {
    let d = a.nrows();
    let mut total = CMatrix::zeros(d, d);
    for contour in contours {
        let term = |z: C64| -> Result<CMatrix> {
            let f = matrixkit::lu(&(identity(d) * z - a)).map_err(|_| Error::ContourTouchesSpectrum { z, sigma_min: 0.0 })?;
            let r = f.inverse()?;
            Ok(mul3(&r, x, &r) * (z - contour.center))
        };
        let mut n = contour.nodes.max(4);
        let mut sum = CMatrix::zeros(d, d);
        for k in 0..n {
            sum += term(contour.node(k, n))?;
        }
        let mut est = &sum / C64::from(n as f64);
        loop {
            if 2 * n > MAX_NODES {
                return Err(Error::QuadratureCap { nodes: n, change: f64::NAN });
            }
            for k in 0..n {
                sum += term(contour.node(2 * k + 1, 2 * n))?;
            }
            n *= 2;
            let next = &sum / C64::from(n as f64);
            let change = norm_fro(&(&next - &est));
            let size = norm_fro(&next).max(1.0);
            est = next;
            if change <= 1e-12 * size {
                break;
            }
        }
        total += est;
    }
    Ok(total)
}

/// One circle around `λ(t)` per grid point, sized by [`Contour::around`].
pub fn around_curve(curve: &SpectralCurve) -> impl Fn(f64, &CMatrix) -> Result<Vec<Contour>> + Sync + '_ {
    move |t, a| Ok(vec![Contour::around(a, curve.lambda(t))?])
}

fn check_gap(a: &CMatrix, contours: &[Contour]) -> Result<()> {
    let scale = norm2(a).max(1.0);
    for c in contours {
        if 2.0 * c.radius < MIN_GAP * scale {
            return Err(Error::GapTooSmall { gap: 2.0 * c.radius });
        }
    }
    Ok(())
}

/// `B(t) = (2πi)⁻¹ ∮ R(z) P'(t) R(z) dz` with the contours returned by
/// `contours(t, A(t))`, which must enclose exactly the part of the spectrum
/// that `P(t)` projects onto.
pub fn solve_gap_contour(
    a: &OperatorFamily,
    p: &ProjectionFamily,
    contours: impl Fn(f64, &CMatrix) -> Result<Vec<Contour>> + Sync,
    grid: &[f64],
) -> Result<CommutatorSolution> {
    let parts = try_par_map(grid, |&t| {
        let at = a.at(t);
        let cs = contours(t, &at)?;
        check_gap(&at, &cs)?;
        let dp = p.derivative(t);
        let b = resolvent_sandwich(&at, &dp, &cs)?;
        let res = commutator(&b, &at) - commutator(&dp, &p.at(t));
        Ok((b, res))
    })?;
    Ok(CommutatorSolution::exact(Construction::Contour, grid, parts))
}

/// `(λ−A)⁻¹` restricted to `ran(1−P)`, extended by zero on `ran P`.
pub fn reduced_resolvent(a: &CMatrix, p: &CMatrix, lambda: C64) -> Result<CMatrix> {
    let d = a.nrows();
    let id = identity(d);
    let pbar = &id - p;
    let m = mul(&(&id * lambda - a), &pbar) + p;
    matrixkit::solve(&m, &pbar)
}

/// `B = Σ_{k<m₀} R̄^{k+1} P' (λ−A)^k P + (λ−A)^k P P' R̄^{k+1}` with `R̄` the
/// reduced resolvent at `λ(t)`.
pub fn solve_gap_pole(
    a: &OperatorFamily,
    p: &ProjectionFamily,
    curve: &SpectralCurve,
    m0: usize,
    grid: &[f64],
) -> Result<CommutatorSolution> {
    if m0 == 0 {
        return Err(Error::InvalidParam {
            name: "m0".into(),
            reason: "must be at least 1".into(),
        });
    }
    let parts = try_par_map(grid, |&t| {
        let at = a.at(t);
        let pt = p.at(t);
        let dp = p.derivative(t);
        let lambda = curve.lambda(t);
        let n = identity(a.dim) * lambda - &at;
        let rbar = reduced_resolvent(&at, &pt, lambda)?;
        let mut b = CMatrix::zeros(a.dim, a.dim);
        let mut rpow = rbar.clone();
        let mut npow = pt.clone();
        for _ in 0..m0 {
            b += mul3(&rpow, &dp, &npow) + mul3(&npow, &dp, &rpow);
            rpow = mul(&rpow, &rbar);
            npow = mul(&n, &npow);
        }
        let res = commutator(&b, &at) - commutator(&dp, &pt);
        Ok((b, res))
    })?;
    Ok(CommutatorSolution::exact(Construction::PoleForm, grid, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::{c, diag, shift_matrix};
    use crate::opfamily::{similarity_family, similarity_projection};

    fn rotated_diag() -> (OperatorFamily, ProjectionFamily, SpectralCurve) {
        let a0 = OperatorFamily::constant("d", diag(&[c(0.0, 0.0), c(0.0, 1.0), c(-0.5, -1.0)]));
        let p0 = ProjectionFamily::constant(diag(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));
        let gen = CMatrix::from_fn(3, 3, |i, j| match (i, j) {
            (0, 1) => c(0.7, 0.0),
            (1, 0) => c(-0.7, 0.0),
            (0, 2) => c(0.0, 0.4),
            (2, 0) => c(0.0, 0.4),
            _ => c(0.0, 0.0),
        });
        (
            similarity_family(&a0, &gen).unwrap(),
            similarity_projection(&p0, &gen).unwrap(),
            SpectralCurve::constant(c(0.0, 0.0), 0.0, 0.2),
        )
    }

    #[test]
    fn pole_form_on_diagonal_family() {
        let (a, p, curve) = rotated_diag();
        let sol = solve_gap_pole(&a, &p, &curve, 1, &[0.0, 0.4, 1.0]).unwrap();
        assert!(sol.max_residual() <= 1e-10, "{}", sol.max_residual());
        assert!(sol.max_b_norm() > 0.1);
    }

    #[test]
    fn contour_matches_pole() {
        let (a, p, curve) = rotated_diag();
        let grid = [0.1, 0.7];
        let x = solve_gap_contour(&a, &p, around_curve(&curve), &grid).unwrap();
        let y = solve_gap_pole(&a, &p, &curve, 1, &grid).unwrap();
        for k in 0..2 {
            assert!(norm2(&(&x.b[k] - &y.b[k])) <= 1e-10);
        }
    }

    #[test]
    fn reduced_resolvent_of_jordan_sum() {
        // J_2(0) ⊕ (2): reduced resolvent at 0 is -1/2 on the last coordinate
        let mut a = CMatrix::zeros(3, 3);
        a.view_mut((0, 0), (2, 2)).copy_from(&shift_matrix(2));
        a[(2, 2)] = c(2.0, 0.0);
        let p = diag(&[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let r = reduced_resolvent(&a, &p, c(0.0, 0.0)).unwrap();
        assert!((r[(2, 2)] - c(-0.5, 0.0)).norm() < 1e-15);
        assert!(norm_fro(&r) - 0.5 < 1e-15);
    }

    #[test]
    fn tiny_gap_rejected() {
        let a = OperatorFamily::constant("g", diag(&[c(0.0, 0.0), c(1e-9, 0.0)]));
        let p = ProjectionFamily::constant(diag(&[c(1.0, 0.0), c(0.0, 0.0)]));
        let cs = |_t: f64, _a: &CMatrix| Ok(vec![Contour::new(c(0.0, 0.0), 5e-10)]);
        let res = solve_gap_contour(&a, &p, cs, &[0.5]);
        assert!(matches!(res, Err(Error::GapTooSmall { .. })));
    }
}
