use super::probe::ResolventProbe;
use super::{nth_distance, rank_stagnation};
use crate::error::{Error, Result};
use crate::matrixkit::{eigenvalues, norm2, C64};
use crate::opfamily::{OperatorFamily, SpectralCurve};
use crate::util::{sig12, try_par_map};
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, Copy)]
pub struct GapOptions {
    /// Gaps at or below `threshold·max(1, ‖A(t)‖)` count as closed.
    pub threshold: f64,
    /// δ-values on which the ray distance `delta_min` is measured.
    pub deltas: [f64; 4],
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            threshold: 1e-6,
            deltas: [1e-3, 1e-2, 1e-1, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralRecord {
    pub t: f64,
    pub lambda: C64,
    pub eigenvalues: Vec<C64>,
    /// Distance from `λ(t)` to the eigenvalues outside its cluster.
    pub gap: f64,
    /// Nilpotent order of `A(t) − λ(t)` on its generalized eigenspace;
    /// `None` where the rank decision was ambiguous.
    pub m: Option<usize>,
    pub multiplicity: Option<usize>,
    /// Smallest `dist(λ + δe^{iθ}, σ(A))/δ` over the δ-values: the sine of
    /// the widest admissible sector half-angle.
    pub delta_min: f64,
    /// Largest `δ‖R̄_δ(t)‖` over the δ-grid, once a resolvent probe is attached.
    pub m0_local: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralAnalysis {
    pub records: Vec<SpectralRecord>,
    /// Cluster size of `λ(t)` at generic times (smallest over the grid).
    pub own_multiplicity: usize,
    pub min_gap: f64,
    pub uniform_gap: bool,
    /// Local minima of the gap that close to the threshold, refined.
    pub crossings: Vec<f64>,
    pub delta0: f64,
    /// Empirical `M₀` from an attached resolvent probe.
    pub m0: Option<f64>,
    /// Sector half-angle `θ₀ = asin(min delta_min)`.
    pub theta0: f64,
    pub sector_ok: bool,
}

fn gap_at(a: &OperatorFamily, curve: &SpectralCurve, t: f64, own: usize) -> Result<f64> {
    let eig = eigenvalues(&a.at(t))?;
    Ok(nth_distance(&eig, curve.lambda(t), own))
}

/// Per-time eigenstructure of `A(t)` relative to `λ(t)` on `grid`.
pub fn gap_diagnostics(a: &OperatorFamily, curve: &SpectralCurve, grid: &[f64], opts: &GapOptions) -> Result<SpectralAnalysis> {
    if grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParam {
            name: "grid".into(),
            reason: "must lie in [0, 1]".into(),
        });
    }
    let raw = try_par_map(grid, |&t| {
        let at = a.at(t);
        let lambda = curve.lambda(t);
        let eig = eigenvalues(&at)?;
        let order = rank_stagnation(&at, lambda).ok();
        let theta = curve.theta(t);
        let delta_min = opts
            .deltas
            .iter()
            .map(|&d| {
                let z = lambda + C64::from_polar(d, theta);
                eig.iter().map(|e| (z - e).norm()).fold(f64::INFINITY, f64::min) / d
            })
            .fold(f64::INFINITY, f64::min);
        Ok((t, lambda, eig, order, delta_min, norm2(&at).max(1.0)))
    })?;
    let own = raw
        .iter()
        .filter_map(|r| r.3.map(|(_, k)| k))
        .filter(|&k| k > 0)
        .min()
        .unwrap_or(1);
    let mut records = Vec::with_capacity(raw.len());
    let mut scale = 1.0f64;
    for (t, lambda, eig, order, delta_min, s) in raw {
        scale = scale.max(s);
        records.push(SpectralRecord {
            t,
            lambda,
            gap: nth_distance(&eig, lambda, own),
            eigenvalues: eig,
            m: order.map(|o| o.0),
            multiplicity: order.map(|o| o.1),
            delta_min,
            m0_local: f64::NAN,
        });
    }
    let threshold = opts.threshold * scale;
    let min_gap = records.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);

    let mut crossings = Vec::new();
    for i in 0..records.len() {
        let g = records[i].gap;
        let left = if i > 0 { records[i - 1].gap } else { f64::INFINITY };
        let right = records.get(i + 1).map_or(f64::INFINITY, |r| r.gap);
        if !(g <= left && g < right) {
            continue;
        }
        if g <= threshold {
            crossings.push(records[i].t);
            continue;
        }
        let lo = if i > 0 { records[i - 1].t } else { records[i].t };
        let hi = records.get(i + 1).map_or(records[i].t, |r| r.t);
        let (tmin, gmin) = golden_min(|t| gap_at(a, curve, t, own), lo, hi)?;
        if gmin <= threshold {
            crossings.push(tmin);
        }
    }
    let sector = records.iter().map(|r| r.delta_min).fold(f64::INFINITY, f64::min);
    Ok(SpectralAnalysis {
        own_multiplicity: own,
        min_gap,
        uniform_gap: min_gap > threshold && crossings.is_empty(),
        crossings,
        delta0: curve.delta0,
        m0: None,
        theta0: sector.clamp(0.0, 1.0).asin(),
        sector_ok: sector > 0.0,
        records,
    })
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > 1e-10 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

impl SpectralAnalysis {
    /// Copies per-time `M₀` values from a resolvent probe on the same grid.
    pub fn attach(&mut self, probe: &ResolventProbe) {
        for r in &mut self.records {
            r.m0_local = probe.local(r.t);
        }
        self.m0 = Some(probe.m0);
    }

    /// CSV with columns `t, Re λ, Im λ, gap, m, delta_min, M0_local`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["t", "re_lambda", "im_lambda", "gap", "m", "delta_min", "M0_local"])
            .map_err(io)?;
        for r in &self.records {
            w.write_record([
                sig12(r.t),
                sig12(r.lambda.re),
                sig12(r.lambda.im),
                sig12(r.gap),
                r.m.map_or(String::new(), |m| m.to_string()),
                sig12(r.delta_min),
                sig12(r.m0_local),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::{c, diag, ONE, ZERO};
    use crate::opfamily::probe_grid;

    #[test]
    fn constant_family_has_constant_gap() {
        let fam = OperatorFamily::constant("const", diag(&[ZERO, c(0.0, 2.0), c(-1.0, 0.0)]));
        let curve = SpectralCurve::constant(ZERO, std::f64::consts::PI, 0.5);
        let an = gap_diagnostics(&fam, &curve, &probe_grid(11), &GapOptions::default()).unwrap();
        assert!(an.uniform_gap);
        assert!(an.crossings.is_empty());
        assert!(an.records.iter().all(|r| (r.gap - 1.0).abs() < 1e-12));
        assert_eq!(an.records[0].m, Some(1));
    }

    #[test]
    fn csv_header_and_rows() {
        let fam = OperatorFamily::constant("const", diag(&[ZERO, ONE]));
        let curve = SpectralCurve::constant(ZERO, std::f64::consts::PI, 0.5);
        let an = gap_diagnostics(&fam, &curve, &[0.0, 1.0], &GapOptions::default()).unwrap();
        let mut buf = Vec::new();
        an.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,re_lambda,im_lambda,gap,m,delta_min,M0_local"));
        assert_eq!(lines.count(), 2);
    }
}
