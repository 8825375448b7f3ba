use super::{check_gap, resolvent_sandwich, CommutatorSolution, Construction};
use crate::error::{Error, Result};
use crate::matrixkit::{self, commutator, identity, mul, mul3, norm2, norm2_upto, CMatrix, C64};
use crate::opfamily::{OperatorFamily, ProjectionFamily, SpectralCurve};
use crate::spectral::Contour;
use crate::util::try_par_map;

use super::mollify::MollifiedDerivative;

/// Pieces of `B_{jj'}` and its remainder at one `t`.
struct Approx {
    b: CMatrix,
    c_plus: CMatrix,
    c_minus: CMatrix,
}

/// `Σ_{k<m} (Π_{i≤k+1} R̄_{δ_i}) Q (λ−A)^k P + (λ−A)^k P Q (Π R̄_{δ_i})`
/// together with the two remainder sums that make the identity exact.
fn approx_terms(t: f64, at: &CMatrix, pt: &CMatrix, q: &CMatrix, ray: (C64, f64), deltas: &[f64], m: usize) -> Result<Approx> {
    let d = at.nrows();
    let id = identity(d);
    let (lambda, theta) = ray;
    let dir = C64::from_polar(1.0, theta);
    let pbar = &id - pt;
    let n = &id * lambda - at;
    let mut approx = Approx {
        b: CMatrix::zeros(d, d),
        c_plus: CMatrix::zeros(d, d),
        c_minus: CMatrix::zeros(d, d),
    };
    let mut prod = pbar.clone();
    let mut npow = pt.clone();
    for (k, &delta) in deltas.iter().enumerate().take(m) {
        let z = lambda + dir * delta;
        let shifted = &id * z - at;
        let rbar = matrixkit::lu(&shifted)
            .and_then(|f| f.solve(&pbar))
            .map_err(|_| Error::RayHitsSpectrum { t, delta })?;
        prod = mul(&prod, &rbar);
        let left = mul3(&prod, q, &npow);
        let right = mul3(&npow, q, &prod);
        let w = dir * delta;
        approx.c_plus += &left * w;
        approx.c_minus += &right * w;
        approx.b += left + right;
        if k + 1 < m {
            npow = mul(&n, &npow);
        }
    }
    Ok(approx)
}

fn clamp_deltas(deltas: &[f64], delta0: f64, warnings: &mut Vec<String>) -> Result<Vec<f64>> {
    deltas
        .iter()
        .map(|&dl| {
            if !(dl > 0.0) || !dl.is_finite() {
                Err(Error::InvalidParam {
                    name: "delta".into(),
                    reason: format!("{dl} is not in (0, δ₀]"),
                })
            } else if dl > delta0 {
                warnings.push(format!("delta {dl} clamped to delta0 = {delta0}"));
                Ok(delta0)
            } else {
                Ok(dl)
            }
        })
        .collect()
}

/// Approximate solution `B_{n,δ}` for a single curve; `deltas.len()` terms
/// are summed, so it should be at least the nilpotent order `m₀`.
///
/// The residual stored is `BA − AB + C⁺ − C⁻ − [Q_n, P]`, which vanishes
/// identically.
pub fn solve_nogap(
    a: &OperatorFamily,
    p: &ProjectionFamily,
    curve: &SpectralCurve,
    n: usize,
    deltas: &[f64],
    grid: &[f64],
) -> Result<CommutatorSolution> {
    if deltas.is_empty() {
        return Err(Error::InvalidParam {
            name: "deltas".into(),
            reason: "need at least one regularisation distance".into(),
        });
    }
    let mut warnings = Vec::new();
    let deltas = clamp_deltas(deltas, curve.delta0, &mut warnings)?;
    let q = MollifiedDerivative::new(p, n)?;
    let parts = try_par_map(grid, |&t| {
        let at = a.at(t);
        let pt = p.at(t);
        let qt = q.at(t);
        let ap = approx_terms(t, &at, &pt, &qt, (curve.lambda(t), curve.theta(t)), &deltas, deltas.len())?;
        let res = commutator(&ap.b, &at) + &ap.c_plus - &ap.c_minus - commutator(&qt, &pt);
        Ok((ap, res))
    })?;
    let mut sol = CommutatorSolution::exact(Construction::Approximate { n, deltas }, grid, Vec::new());
    for (ap, res) in parts {
        sol.b.push(ap.b);
        sol.c_plus.push(ap.c_plus);
        sol.c_minus.push(ap.c_minus);
        sol.residual.push(res);
    }
    sol.warnings = warnings;
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MultiMode {
    Gap,
    NoGap { n: usize, deltas: Vec<f64> },
}

/// Overlap and collision checks shared by both modes; returns the grid
/// indices where two curves meet.
fn check_multi(a: &OperatorFamily, curves: &[SpectralCurve], projs: &[ProjectionFamily], grid: &[f64]) -> Result<Vec<usize>> {
    if curves.is_empty() || curves.len() != projs.len() {
        return Err(Error::Dimension(format!("{} curves for {} projections", curves.len(), projs.len())));
    }
    if projs.iter().any(|p| p.dim != a.dim) {
        return Err(Error::Dimension("projection dimension differs from the family".into()));
    }
    let r = curves.len();
    let mut collisions = vec![0usize; r * r];
    let mut hit = Vec::new();
    for (idx, &t) in grid.iter().enumerate() {
        let ps: Vec<CMatrix> = projs.iter().map(|p| p.at(t)).collect();
        let scale = norm2(&a.at(t)).max(1.0);
        let mut any = false;
        for i in 0..r {
            for j in 0..r {
                if i == j {
                    continue;
                }
                let ov = norm2_upto(&mul(&ps[i], &ps[j]), 1e-9);
                if ov > 1e-9 {
                    return Err(Error::ProjectionOverlap { i, j, norm: ov });
                }
                if i < j && (curves[i].lambda(t) - curves[j].lambda(t)).norm() <= 1e-12 * scale {
                    collisions[i * r + j] += 1;
                    any = true;
                }
            }
        }
        if any {
            hit.push(idx);
        }
    }
    for i in 0..r {
        for j in i + 1..r {
            let fraction = 100.0 * collisions[i * r + j] as f64 / grid.len().max(1) as f64;
            if fraction > 10.0 {
                return Err(Error::CurveCollision { i, j, fraction });
            }
        }
    }
    Ok(hit)
}

/// Simultaneous solver for several curves `λ_j` with mutually orthogonal
/// projections `P_j`.
///
/// Gap mode solves `BA − AB = K` with `K = ½ Σ_{j≤r+1} [P_j', P_j]`, where
/// `P_{r+1} = 1 − Σ P_j`. No-gap mode builds `½(Σ_j B_jj + Σ_{j,j'} B_jj')`
/// and stores the residual of `BA − AB + C = K_n`; there `m_j = rk P_j` and
/// `deltas` must have at least `max_j m_j` entries (the first `m_j` are used).
pub fn solve_multi(
    a: &OperatorFamily,
    curves: &[SpectralCurve],
    projs: &[ProjectionFamily],
    mode: &MultiMode,
    grid: &[f64],
) -> Result<CommutatorSolution> {
    let hit = check_multi(a, curves, projs, grid)?;
    let r = curves.len();
    let d = a.dim;
    let half = C64::from(0.5);
    match mode {
        MultiMode::Gap => {
            let idx: Vec<usize> = (0..grid.len()).collect();
            let parts = try_par_map(&idx, |&i| {
                let t = grid[i];
                let at = a.at(t);
                if hit.contains(&i) {
                    return Ok((CMatrix::zeros(d, d), CMatrix::zeros(d, d)));
                }
                let contours: Vec<Contour> = curves
                    .iter()
                    .map(|c| Contour::around(&at, c.lambda(t)))
                    .collect::<Result<_>>()?;
                check_gap(&at, &contours)?;
                let mut b = CMatrix::zeros(d, d);
                let mut target = CMatrix::zeros(d, d);
                let mut dp_sum = CMatrix::zeros(d, d);
                let mut p_sum = CMatrix::zeros(d, d);
                for (j, p) in projs.iter().enumerate() {
                    let (pj, dpj) = (p.at(t), p.derivative(t));
                    b += resolvent_sandwich(&at, &dpj, &contours[j..=j])?;
                    target += commutator(&dpj, &pj);
                    dp_sum += dpj;
                    p_sum += pj;
                }
                b += resolvent_sandwich(&at, &dp_sum, &contours)?;
                target += commutator(&dp_sum, &p_sum);
                let (b, target) = (b * half, target * half);
                let res = commutator(&b, &at) - target;
                Ok((b, res))
            })?;
            let mut sol = CommutatorSolution::exact(Construction::Contour, grid, parts);
            sol.skipped = hit;
            if !sol.skipped.is_empty() {
                sol.warnings.push(format!("{} grid points skipped at curve collisions", sol.skipped.len()));
            }
            Ok(sol)
        }
        MultiMode::NoGap { n, deltas } => {
            let max_rank = projs.iter().map(|p| p.rank).max().unwrap_or(0);
            if deltas.len() < max_rank {
                return Err(Error::InvalidParam {
                    name: "deltas".into(),
                    reason: format!("need {max_rank} entries (largest rank), got {}", deltas.len()),
                });
            }
            let mut warnings = Vec::new();
            let delta0 = curves.iter().map(|c| c.delta0).fold(f64::INFINITY, f64::min);
            let deltas = clamp_deltas(deltas, delta0, &mut warnings)?;
            let qs: Vec<MollifiedDerivative> = projs.iter().map(|p| MollifiedDerivative::new(p, *n)).collect::<Result<_>>()?;
            let parts = try_par_map(grid, |&t| {
                let at = a.at(t);
                let ps: Vec<CMatrix> = projs.iter().map(|p| p.at(t)).collect();
                let qts: Vec<CMatrix> = qs.iter().map(|q| q.at(t)).collect();
                let mut b = CMatrix::zeros(d, d);
                let mut cp = CMatrix::zeros(d, d);
                let mut cm = CMatrix::zeros(d, d);
                let mut kn = CMatrix::zeros(d, d);
                for j in 0..r {
                    let ray = (curves[j].lambda(t), curves[j].theta(t));
                    let m = projs[j].rank;
                    // diagonal term enters twice: once as B_jj, once inside B_{r+1}
                    for jp in 0..r {
                        let ap = approx_terms(t, &at, &ps[j], &qts[jp], ray, &deltas, m)?;
                        let k = commutator(&qts[jp], &ps[j]);
                        let w = if jp == j { C64::from(2.0) } else { C64::from(1.0) };
                        b += ap.b * w;
                        cp += ap.c_plus * w;
                        cm += ap.c_minus * w;
                        kn += k * w;
                    }
                }
                let (b, cp, cm, kn) = (b * half, cp * half, cm * half, kn * half);
                let res = commutator(&b, &at) + &cp - &cm - kn;
                Ok((b, res, cp, cm))
            })?;
            let mut sol = CommutatorSolution::exact(Construction::Approximate { n: *n, deltas }, grid, Vec::new());
            for (b, res, cp, cm) in parts {
                sol.b.push(b);
                sol.residual.push(res);
                sol.c_plus.push(cp);
                sol.c_minus.push(cm);
            }
            sol.warnings = warnings;
            Ok(sol)
        }
    }
}
