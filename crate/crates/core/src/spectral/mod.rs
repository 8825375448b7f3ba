//! Spectral projections, stability and resolvent probes, gap diagnostics.
//!
//! Two routes to a spectral projection: [`riesz_projection`] integrates the
//! resolvent over a circle, [`weakly_associated_projection`] decouples an
//! ordered Schur form. They agree whenever the circle encloses exactly the
//! selected eigenvalue.

mod gap;
mod probe;

pub use gap::{gap_diagnostics, GapOptions, SpectralAnalysis, SpectralRecord};
pub use probe::{
    check_stability, compute_eta, probe_resolvent_estimate, reduced_resolvent_norm, resolvent_decay, ResolventProbe,
    ResolventSample, StabilityKind, StabilityReport,
};

use crate::error::{Error, Result};
use crate::matrixkit::{
    self, check_finite, check_square, identity, lu, mul, norm2, norm_fro, ordered_schur, singular_values,
    solve_triangular_sylvester, CMatrix, C64, RANK_TOL,
};
use std::f64::consts::PI;

/// Node cap for the trapezoid rule on a circle.
pub const MAX_NODES: usize = 4096;

/// A positively oriented circle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    pub center: C64,
    pub radius: f64,
    /// Initial node count; doubled until the projection stabilises.
    pub nodes: usize,
}

impl Contour {
    pub fn new(center: C64, radius: f64) -> Self {
        Self {
            center,
            radius,
            nodes: 16,
        }
    }

    /// Circle around `lambda` with radius half the distance to the nearest
    /// eigenvalue of `a` outside `lambda`'s cluster.
    pub fn around(a: &CMatrix, lambda: C64) -> Result<Self> {
        let eig = matrixkit::eigenvalues(a)?;
        let scale = norm_fro(a).max(1.0);
        let own = eig
            .iter()
            .map(|z| (z - lambda).norm())
            .filter(|&d| d <= 1e-6 * scale)
            .count()
            .max(1);
        let gap = nth_distance(&eig, lambda, own);
        if !gap.is_finite() {
            // whole spectrum in the cluster
            return Ok(Self::new(lambda, scale));
        }
        if gap <= 1e-8 * scale {
            return Err(Error::GapTooSmall { gap });
        }
        Ok(Self::new(lambda, gap / 2.0))
    }

    pub fn node(&self, k: usize, n: usize) -> C64 {
        self.center + C64::from_polar(self.radius, 2.0 * PI * k as f64 / n as f64)
    }
}

/// Distance from `lambda` to the `(k+1)`-th nearest entry of `eig`
/// (infinite when there are at most `k` entries).
pub(crate) fn nth_distance(eig: &[C64], lambda: C64, k: usize) -> f64 {
    let mut d: Vec<f64> = eig.iter().map(|z| (z - lambda).norm()).collect();
    d.sort_by(f64::total_cmp);
    d.get(k).copied().unwrap_or(f64::INFINITY)
}

/// Result of [`riesz_projection`].
#[derive(Debug, Clone)]
pub struct RieszResult {
    pub p: CMatrix,
    /// Node count at which the projection stabilised.
    pub nodes: usize,
    /// Smallest `σ_min(z − A)` over the nodes used.
    pub sigma_min: f64,
}

/// `P = (2πi)⁻¹ ∮ (z − A)⁻¹ dz` by the trapezoid rule, doubling the node
/// count until two successive estimates agree to `1e-12` (relative).
pub fn riesz_projection(a: &CMatrix, contour: &Contour) -> Result<RieszResult> {
    let d = check_square(a)?;
    check_finite(a)?;
    if !(contour.radius > 0.0) {
        return Err(Error::InvalidParam {
            name: "radius".into(),
            reason: "must be positive".into(),
        });
    }
    let scale = norm2(a).max(f64::MIN_POSITIVE);
    let floor = 1e-10 * scale;
    let mut sigma_min = f64::INFINITY;

    // weight of node z_k is r e^{iφ_k} / N
    let mut term = |z: C64| -> Result<CMatrix> {
        let shifted = identity(d) * z - a;
        let r = lu(&shifted)
            .and_then(|f| f.inverse())
            .map_err(|_| Error::ContourTouchesSpectrum { z, sigma_min: 0.0 })?;
        // σ_min ≥ 1/‖R‖_F; only pay for an SVD when that bound is inconclusive
        let mut smin = 1.0 / norm_fro(&r);
        if smin <= floor {
            smin = singular_values(&shifted).last().copied().unwrap_or(0.0);
            if smin <= floor {
                return Err(Error::ContourTouchesSpectrum { z, sigma_min: smin });
            }
        }
        sigma_min = sigma_min.min(smin);
        Ok(r * (z - contour.center))
    };

    let mut n = contour.nodes.max(4);
    let mut sum = CMatrix::zeros(d, d);
    for k in 0..n {
        sum += term(contour.node(k, n))?;
    }
    let mut p = &sum / C64::from(n as f64);
    let mut change = f64::NAN;
    loop {
        if 2 * n > MAX_NODES {
            return Err(Error::QuadratureCap { nodes: n, change });
        }
        // the refined rule reuses the old nodes and adds the midpoints
        for k in 0..n {
            sum += term(contour.node(2 * k + 1, 2 * n))?;
        }
        n *= 2;
        let next = &sum / C64::from(n as f64);
        change = norm_fro(&(&next - &p));
        let size = norm_fro(&next).max(1.0);
        p = next;
        if change <= 1e-12 * size {
            break;
        }
    }
    Ok(RieszResult { p, nodes: n, sigma_min })
}

/// Projection onto the invariant subspace of the eigenvalues selected by
/// `select`, along the complementary invariant subspace.
///
/// With `A = Q [[T11, T12], [0, T22]] Q*` and `T11 Y − Y T22 = T12` the
/// projection is `Q [[I, Y], [0, 0]] Q*`.
pub fn schur_projection(a: &CMatrix, select: impl Fn(C64) -> bool) -> Result<CMatrix> {
    let d = check_square(a)?;
    let s = ordered_schur(a, select)?;
    let k = s.selected;
    let mut pt = CMatrix::zeros(d, d);
    if k == 0 {
        return Ok(pt);
    }
    pt.view_mut((0, 0), (k, k)).fill_with_identity();
    if k < d {
        let y = solve_triangular_sylvester(&s.t11(), &s.t22(), &s.t12())?;
        pt.view_mut((0, k), (k, d - k)).copy_from(&y);
    }
    Ok(mul(&mul(&s.q, &pt), &s.q.adjoint()))
}

/// Outcome of [`weakly_associated_projection`].
#[derive(Debug, Clone)]
pub struct WeakProjection {
    pub p: CMatrix,
    /// Smallest `k` at which `rank (A − λ)^k` stops decreasing.
    pub m: usize,
    /// Algebraic multiplicity `d − rank (A − λ)^m`.
    pub multiplicity: usize,
    /// Radius of the eigenvalue cluster that was selected.
    pub cluster_radius: f64,
}

/// Nilpotent order and algebraic multiplicity of `λ` from the ranks of
/// `(A − λ)^k`, `k = 1..=d`, with the shared SVD tolerance.
///
/// A singular value within a factor 10 of the threshold makes the decision
/// unreliable and is reported as [`Error::RankAmbiguity`].
pub fn rank_stagnation(a: &CMatrix, lambda: C64) -> Result<(usize, usize)> {
    let d = check_square(a)?;
    let shifted = a - identity(d) * lambda;
    let mut power = shifted.clone();
    let mut prev = d;
    for k in 1..=d {
        let s = singular_values(&power);
        let smax = s.first().copied().unwrap_or(0.0);
        let threshold = RANK_TOL * smax;
        if let Some(&v) = s.iter().find(|&&v| v > threshold / 10.0 && v <= threshold * 10.0 && smax > 0.0) {
            return Err(Error::RankAmbiguity { value: v, threshold });
        }
        let rank = if smax == 0.0 { 0 } else { s.iter().filter(|&&v| v > threshold).count() };
        if rank == prev {
            return Ok((k - 1, d - rank));
        }
        prev = rank;
        if rank == 0 {
            return Ok((k, d));
        }
        power = mul(&power, &shifted);
    }
    Ok((d, d - prev))
}

/// Projection onto `ker (A − λ)^d` along `ran (A − λ)^d`, with the nilpotent
/// order `m` of `A − λ` on its range.
///
/// `tol` bounds `σ_min(A − λ) / max(1, ‖A‖)`, i.e. how far `λ` may be from
/// the spectrum. The eigenvalue cluster is the `multiplicity` eigenvalues
/// nearest `λ` (a Jordan block of size `m` splits by about `u^{1/m}`), and
/// its radius is at least `1e-8·‖A‖`. Another eigenvalue within twice the
/// radius is an error.
pub fn weakly_associated_projection(a: &CMatrix, lambda: C64, tol: f64) -> Result<WeakProjection> {
    let d = check_square(a)?;
    check_finite(a)?;
    let scale = norm2(a).max(1.0);
    let shifted = a - identity(d) * lambda;
    let smin = singular_values(&shifted).last().copied().unwrap_or(0.0);
    if smin > tol * scale {
        return Err(Error::Invariant {
            name: "lambda is an eigenvalue".into(),
            detail: format!("sigma_min(A - lambda) = {smin:.3e}"),
        });
    }
    let (m, mult) = rank_stagnation(a, lambda)?;
    if mult == 0 {
        return Err(Error::Invariant {
            name: "lambda is an eigenvalue".into(),
            detail: "numerical rank of A - lambda is full".into(),
        });
    }
    let eig = matrixkit::eigenvalues(a)?;
    let mut by_distance: Vec<(f64, C64)> = eig.iter().map(|&z| ((z - lambda).norm(), z)).collect();
    by_distance.sort_by(|x, y| x.0.total_cmp(&y.0));
    let radius = (1e-8 * scale).max(by_distance[mult - 1].0 * (1.0 + 1e-9));
    if let Some(&(dist, other)) = by_distance.get(mult) {
        if dist <= 2.0 * radius {
            return Err(Error::ClusterAmbiguity { lambda, other });
        }
    }
    let p = schur_projection(a, |z| (z - lambda).norm() <= radius)?;

    // A − λ restricted to ran P must be nilpotent of order m
    let mut nil = mul(&shifted, &p);
    for _ in 1..m {
        nil = mul(&shifted, &nil);
    }
    let nil_norm = norm2(&nil);
    let bound = 1e-6 * norm2(&shifted).max(1.0).powi(m as i32) * norm2(&p).max(1.0);
    if nil_norm > bound {
        return Err(Error::Invariant {
            name: "nilpotent on the generalized eigenspace".into(),
            detail: format!("|(A - lambda)^{m} P| = {nil_norm:.3e}"),
        });
    }
    Ok(WeakProjection {
        p,
        m,
        multiplicity: mult,
        cluster_radius: radius,
    })
}
