use crate::error::{Error, Result};
use crate::matrixkit::{identity, lu, mul, norm2, CMatrix, C64};
use crate::opfamily::{OperatorFamily, ProjectionFamily, SpectralCurve};
use crate::util::try_par_map;
use nalgebra::DVector;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityKind {
    /// `‖e^{A(t)s}‖ ≤ 1`, checked through the logarithmic norm.
    Contraction,
    /// `(M, 0)`-stability of `λ(t) + α(t)N` families.
    M0,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub kind: StabilityKind,
    /// Contraction: largest eigenvalue of `(A + A*)/2` over the grid.
    /// M0: `r₀ = inf (−Re λ)/α` over points with `α > 0` (infinite if none).
    pub value: f64,
    pub pass: bool,
}

pub fn check_stability(a: &OperatorFamily, kind: StabilityKind, probe: &[f64]) -> Result<StabilityReport> {
    match kind {
        StabilityKind::Contraction => {
            let abscissa = try_par_map(probe, |&t| {
                let at = a.at(t);
                let herm = (&at + at.adjoint()) * C64::from(0.5);
                Ok(herm.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max))
            })?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
            Ok(StabilityReport {
                kind,
                value: abscissa,
                pass: abscissa <= 1e-10,
            })
        }
        StabilityKind::M0 => {
            let s = a.structure.as_ref().ok_or(Error::MissingStructure)?;
            let mut r0 = f64::INFINITY;
            let mut re_max = f64::NEG_INFINITY;
            for &t in probe {
                let re = (s.lambda)(t).re;
                let alpha = (s.alpha)(t);
                re_max = re_max.max(re);
                if alpha > 0.0 {
                    r0 = r0.min(-re / alpha);
                }
            }
            Ok(StabilityReport {
                kind,
                value: r0,
                pass: r0 > 0.0 && re_max <= 0.0,
            })
        }
    }
}

/// `‖(z − A)⁻¹ (1 − P)‖`, or an error when `z` is numerically in the spectrum.
pub fn reduced_resolvent_norm(a: &CMatrix, p: &CMatrix, z: C64, t: f64, delta: f64) -> Result<f64> {
    Ok(norm2(&reduced_resolvent(a, p, z, t, delta)?))
}

fn reduced_resolvent(a: &CMatrix, p: &CMatrix, z: C64, t: f64, delta: f64) -> Result<CMatrix> {
    let d = a.nrows();
    let q = identity(d) - p;
    lu(&(identity(d) * z - a))
        .and_then(|f| f.solve(&q))
        .map_err(|_| Error::RayHitsSpectrum { t, delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventSample {
    pub t: f64,
    pub delta: f64,
    /// `δ‖(λ(t) + δe^{iθ(t)} − A(t))⁻¹ (1 − P(t))‖`.
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventProbe {
    /// Largest sample: the empirical `M₀`.
    pub m0: f64,
    /// Largest sample over the upper half of the δ-grid.
    pub m0_fit: f64,
    /// Samples exceeding `m0_fit` by more than 5%: the estimate degrades as
    /// δ shrinks there.
    pub violations: Vec<ResolventSample>,
    pub samples: Vec<ResolventSample>,
}

impl ResolventProbe {
    /// `M0_local(t)`: largest sample at time `t`.
    pub fn local(&self, t: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.t == t)
            .map(|s| s.value)
            .fold(f64::NAN, f64::max)
    }
}

/// Samples `δ‖R̄_δ(t)‖` on `probe × deltas`.
pub fn probe_resolvent_estimate(
    a: &OperatorFamily,
    curve: &SpectralCurve,
    p: &ProjectionFamily,
    deltas: &[f64],
    probe: &[f64],
) -> Result<ResolventProbe> {
    if deltas.is_empty() || deltas.iter().any(|&d| !(d > 0.0 && d <= curve.delta0)) {
        return Err(Error::InvalidParam {
            name: "deltas".into(),
            reason: format!("must be non-empty and lie in (0, {}]", curve.delta0),
        });
    }
    let per_t = try_par_map(probe, |&t| {
        let at = a.at(t);
        let pt = p.at(t);
        deltas
            .iter()
            .map(|&delta| {
                let z = curve.ray_point(t, delta);
                let value = delta * reduced_resolvent_norm(&at, &pt, z, t, delta)?;
                Ok(ResolventSample { t, delta, value })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let samples: Vec<ResolventSample> = per_t.into_iter().flatten().collect();
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let m0 = samples.iter().map(|s| s.value).fold(0.0, f64::max);
    let m0_fit = samples.iter().filter(|s| s.delta >= median).map(|s| s.value).fold(0.0, f64::max);
    let violations = samples.iter().filter(|s| s.value > 1.05 * m0_fit).copied().collect();
    Ok(ResolventProbe {
        m0,
        m0_fit,
        violations,
        samples,
    })
}

/// `δ ↦ ‖δ R̄_δ(t) x‖`, which tends to zero for every `x` when the
/// resolvent estimate holds.
pub fn resolvent_decay(
    a: &OperatorFamily,
    curve: &SpectralCurve,
    p: &ProjectionFamily,
    t: f64,
    x: &DVector<C64>,
    deltas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let at = a.at(t);
    let pt = p.at(t);
    let xm = CMatrix::from_column_slice(x.len(), 1, x.as_slice());
    deltas
        .iter()
        .map(|&delta| {
            let r = reduced_resolvent(&at, &pt, curve.ray_point(t, delta), t, delta)?;
            Ok((delta, delta * mul(&r, &xm).norm()))
        })
        .collect()
}

/// `(η⁺(δ), η⁻(δ))`: the integrals over `[0, 1]` of `‖δR_δ(s)P'(s)P(s)‖`
/// and `‖P(s)P'(s)δR_δ(s)‖`, by adaptive Simpson to relative `1e-6`.
pub fn compute_eta(a: &OperatorFamily, curve: &SpectralCurve, p: &ProjectionFamily, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta <= curve.delta0) {
        return Err(Error::InvalidParam {
            name: "delta".into(),
            reason: format!("must lie in (0, {}]", curve.delta0),
        });
    }
    let f = |s: f64| -> Result<[f64; 2]> {
        let ps = p.at(s);
        let dp = p.derivative(s);
        let right = mul(&dp, &ps);
        let left = mul(&ps, &dp);
        if right.iter().all(|z| *z == C64::from(0.0)) && left.iter().all(|z| *z == C64::from(0.0)) {
            return Ok([0.0, 0.0]);
        }
        let at = a.at(s);
        let d = at.nrows();
        let shifted = identity(d) * curve.ray_point(s, delta) - at;
        let fac = lu(&shifted).map_err(|_| Error::RayHitsSpectrum { t: s, delta })?;
        let plus = fac.solve(&right)?;
        // ‖L R‖ = ‖R* L*‖ and R* = ((z − A)*)⁻¹
        let minus = lu(&shifted.adjoint())?.solve(&left.adjoint())?;
        Ok([delta * norm2(&plus), delta * norm2(&minus)])
    };
    let panels = 8;
    let nodes: Vec<f64> = (0..=2 * panels).map(|k| k as f64 / (2 * panels) as f64).collect();
    let vals = try_par_map(&nodes, |&s| f(s))?;
    let h = 1.0 / panels as f64;
    let mut coarse = [0.0; 2];
    for k in 0..panels {
        for c in 0..2 {
            coarse[c] += h / 6.0 * (vals[2 * k][c] + 4.0 * vals[2 * k + 1][c] + vals[2 * k + 2][c]);
        }
    }
    let tol = 1e-6 * coarse[0].abs().max(coarse[1].abs());
    let mut total = [0.0; 2];
    for k in 0..panels {
        let (x0, x1) = (k as f64 * h, (k + 1) as f64 * h);
        let (f0, fm, f1) = (vals[2 * k], vals[2 * k + 1], vals[2 * k + 2]);
        let whole = simpson(x1 - x0, f0, fm, f1);
        let part = adaptive(&f, x0, x1, f0, fm, f1, whole, tol / panels as f64, 14)?;
        total[0] += part[0];
        total[1] += part[1];
    }
    Ok((total[0], total[1]))
}

fn simpson(h: f64, f0: [f64; 2], fm: [f64; 2], f1: [f64; 2]) -> [f64; 2] {
    [0, 1].map(|c| h / 6.0 * (f0[c] + 4.0 * fm[c] + f1[c]))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> Result<[f64; 2]>,
    a: f64,
    b: f64,
    fa: [f64; 2],
    fm: [f64; 2],
    fb: [f64; 2],
    whole: [f64; 2],
    tol: f64,
    depth: u32,
) -> Result<[f64; 2]> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = simpson(m - a, fa, flm, fm);
    let right = simpson(b - m, fm, frm, fb);
    let err = (0..2)
        .map(|c| (left[c] + right[c] - whole[c]).abs())
        .fold(0.0, f64::max);
    if depth == 0 || err <= 15.0 * tol {
        return Ok([0, 1].map(|c| left[c] + right[c] + (left[c] + right[c] - whole[c]) / 15.0));
    }
    let l = adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
    let r = adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
    Ok([l[0] + r[0], l[1] + r[1]])
}
