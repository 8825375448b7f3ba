//! Evolution systems of `x' = G(t)x` for the generators the theorems compare:
//! `U_ε` for `(1/ε)A`, `V_ε` for `(1/ε)A + [P', P]` and `V_{0,ε}` for
//! `(1/ε)AP + [P', P]`.
//!
//! The default integrator is the fourth-order commutator-free exponential
//! method on Gauss nodes, with step doubling per output interval. Families
//! built as `e^{−Ct}A₀(t)e^{Ct}` are integrated in the rotating frame, where
//! `y' = (G₀(t) + C)y` and `U(t, s) = e^{−Ct} Y(t, s) e^{Cs}`; for a constant
//! core that equation is autonomous and solved by one exponential.

mod table;

pub use table::{deviation, range_factor, Deviation, Metric, PropagatorTable};

use crate::error::{Error, Result};
use crate::matrixkit::{commutator, expm, identity, mul, norm1, norm_fro, CMatrix, C64};
use crate::opfamily::{OperatorFamily, ProjectionFamily, Rotator};
use crate::util::try_par_map;
use serde::Serialize;
use std::sync::Arc;

/// Default local error tolerance per output interval.
pub const TOL_STEP: f64 = 1e-9;
/// Total substep budget per table.
pub const MAX_SUBSTEPS: usize = 2_000_000;
/// Substeps shorter than this are reported as stiffness.
pub const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Cf4,
    Rk4,
}

type GenFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

#[derive(Clone)]
struct FrameGen {
    /// `G₀(t) + C`.
    inner: GenFn,
    rot: Arc<Rotator>,
    constant: bool,
}

/// A time-dependent generator `G(t)`, optionally with an exact rotating frame.
#[derive(Clone)]
pub struct Generator {
    pub dim: usize,
    lab: GenFn,
    frame: Option<FrameGen>,
    constant: bool,
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Generator")
            .field("dim", &self.dim)
            .field("rotating_frame", &self.frame.is_some())
            .finish()
    }
}

fn same_generator(a: &CMatrix, b: &CMatrix) -> bool {
    a.shape() == b.shape() && norm_fro(&(a - b)) == 0.0
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Plain,
    Intertwined,
    Projected,
}

impl Generator {
    /// Arbitrary `G(t)`, integrated in the lab frame.
    pub fn from_fn(dim: usize, g: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        Self {
            dim,
            lab: Arc::new(g),
            frame: None,
            constant: false,
        }
    }

    pub fn constant(g: CMatrix) -> Self {
        let dim = g.nrows();
        let mut out = Self::from_fn(dim, move |_| g.clone());
        out.constant = true;
        out
    }

    /// `(1/ε) A(t)`.
    pub fn plain(a: &OperatorFamily, eps: f64) -> Result<Self> {
        Self::build(a, None, eps, Kind::Plain)
    }

    /// `(1/ε) A(t) + [P'(t), P(t)]`.
    pub fn intertwined(a: &OperatorFamily, p: &ProjectionFamily, eps: f64) -> Result<Self> {
        Self::build(a, Some(p), eps, Kind::Intertwined)
    }

    /// `(1/ε) A(t) P(t) + [P'(t), P(t)]`.
    pub fn projected(a: &OperatorFamily, p: &ProjectionFamily, eps: f64) -> Result<Self> {
        Self::build(a, Some(p), eps, Kind::Projected)
    }

    fn build(a: &OperatorFamily, p: Option<&ProjectionFamily>, eps: f64, kind: Kind) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParam {
                name: "epsilon".into(),
                reason: format!("{eps} is not positive"),
            });
        }
        if let Some(p) = p {
            if p.dim != a.dim {
                return Err(Error::Dimension(format!("family {} vs projection {}", a.dim, p.dim)));
            }
        }
        let inv = C64::new(1.0 / eps, 0.0);
        let lab: GenFn = {
            let (a, p) = (a.clone(), p.cloned());
            Arc::new(move |t| {
                let at = a.at(t);
                match (&p, kind) {
                    (None, _) | (_, Kind::Plain) => at * inv,
                    (Some(p), Kind::Intertwined) => at * inv + p.commutator_target(t),
                    (Some(p), Kind::Projected) => mul(&at, &p.at(t)) * inv + p.commutator_target(t),
                }
            })
        };
        let frame = Self::frame_for(a, p, inv, kind);
        let constant = a.constant && p.is_none_or(|p| p.constant);
        Ok(Self {
            dim: a.dim,
            lab,
            frame,
            constant,
        })
    }

    fn frame_for(a: &OperatorFamily, p: Option<&ProjectionFamily>, inv: C64, kind: Kind) -> Option<FrameGen> {
        let af = a.frame.as_ref()?;
        let c = af.c.clone();
        let core = af.core.clone();
        let pcore = match (p, kind) {
            (_, Kind::Plain) | (None, _) => None,
            (Some(p), _) => {
                let pf = p.frame.as_ref()?;
                if !same_generator(&pf.c, &c) {
                    return None;
                }
                Some(pf.core.clone())
            }
        };
        let constant = core.constant && pcore.as_ref().is_none_or(|p| p.constant);
        let rot = Rotator::new(&c);
        let inner: GenFn = Arc::new(move |t| {
            let a0 = core.at(t);
            let mut g = match &pcore {
                None => a0 * inv,
                Some(p0) => {
                    let pt = p0.at(t);
                    // [P', P] in the frame: [P₀' + [P₀, C], P₀]
                    let dp = p0.derivative(t) + commutator(&pt, &c);
                    let k = commutator(&dp, &pt);
                    let a_part = if kind == Kind::Projected { mul(&a0, &pt) } else { a0 };
                    a_part * inv + k
                }
            };
            g += &c;
            g
        });
        Some(FrameGen { inner, rot, constant })
    }

    /// `G(t)` in the lab frame.
    pub fn at(&self, t: f64) -> CMatrix {
        (self.lab)(t)
    }

    pub fn has_frame(&self) -> bool {
        self.frame.is_some()
    }
}

const SQRT3_6: f64 = 0.288_675_134_594_812_9; // √3/6

/// One CF4 step from `t` with step `h`.
fn cf4_step(g: &GenFn, t: f64, h: f64) -> Result<CMatrix> {
    let a1 = g(t + (0.5 - SQRT3_6) * h);
    let a2 = g(t + (0.5 + SQRT3_6) * h);
    let (small, big) = (0.25 - SQRT3_6, 0.25 + SQRT3_6);
    let first = expm(&((&a1 * C64::from(big) + &a2 * C64::from(small)) * C64::from(h)))?;
    let second = expm(&((&a1 * C64::from(small) + &a2 * C64::from(big)) * C64::from(h)))?;
    Ok(mul(&second, &first))
}

fn cf4_interval(g: &GenFn, t0: f64, t1: f64, n: usize) -> Result<CMatrix> {
    let h = (t1 - t0) / n as f64;
    let mut u = cf4_step(g, t0, h)?;
    for j in 1..n {
        u = mul(&cf4_step(g, t0 + j as f64 * h, h)?, &u);
    }
    Ok(u)
}

fn rk4_interval(g: &GenFn, t0: f64, t1: f64, n: usize) -> CMatrix {
    let h = (t1 - t0) / n as f64;
    let hc = C64::from(h);
    let mut y = identity(g(t0).nrows());
    for j in 0..n {
        let t = t0 + j as f64 * h;
        let gm = g(t + 0.5 * h);
        let k1 = mul(&g(t), &y);
        let k2 = mul(&gm, &(&y + &k1 * (hc * 0.5)));
        let k3 = mul(&gm, &(&y + &k2 * (hc * 0.5)));
        let k4 = mul(&g(t + h), &(&y + &k3 * hc));
        y += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * (hc / 6.0);
    }
    y
}

struct Interval {
    u: CMatrix,
    err: f64,
    substeps: usize,
}

/// CF4 with step doubling until the estimated local error
/// `‖U_{2n} − U_n‖_F / 15` is at most `tol·max(1, ‖U_{2n}‖_F)`.
fn adaptive_interval(g: &GenFn, t0: f64, t1: f64, tol: f64) -> Result<Interval> {
    let dt = t1 - t0;
    let mid = g(0.5 * (t0 + t1));
    let n0 = (norm1(&mid) * dt.abs() / 0.5).ceil().max(1.0);
    let stiff = |n: f64| dt.abs() / (2.0 * n) < MIN_STEP || 3.0 * n > MAX_SUBSTEPS as f64;
    if stiff(n0) {
        return Err(Error::Stiffness {
            t: t0,
            step: dt.abs() / (2.0 * n0),
        });
    }
    let mut n = n0 as usize;
    let mut coarse = cf4_interval(g, t0, t1, n)?;
    loop {
        if stiff(n as f64) {
            return Err(Error::Stiffness {
                t: t0,
                step: dt.abs() / (2 * n) as f64,
            });
        }
        let fine = cf4_interval(g, t0, t1, 2 * n)?;
        let err = norm_fro(&(&fine - &coarse)) / 15.0;
        if err <= tol * norm_fro(&fine).max(1.0) {
            return Ok(Interval {
                u: fine,
                err,
                substeps: 3 * n,
            });
        }
        n *= 2;
        coarse = fine;
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidParam {
            name: "grid".into(),
            reason: "needs at least two points".into(),
        });
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParam {
            name: "grid".into(),
            reason: "must be finite and strictly increasing".into(),
        });
    }
    Ok(())
}

/// Evolution system of `gen` on `grid` with the CF4 integrator.
pub fn propagate_generator(gen: &Generator, eps: f64, grid: &[f64], tol: f64) -> Result<PropagatorTable> {
    check_grid(grid)?;
    let spans: Vec<(f64, f64)> = grid.windows(2).map(|w| (w[0], w[1])).collect();
    let (g, exact) = match &gen.frame {
        Some(f) => (f.inner.clone(), f.constant),
        None => (gen.lab.clone(), gen.constant),
    };
    let intervals = if exact {
        // autonomous: U(t₁, t₀) = exp((t₁ − t₀)M), shared by equal spans
        let m = g(grid[0]);
        let mut cache: Vec<(u64, CMatrix)> = Vec::new();
        let mut out = Vec::with_capacity(spans.len());
        for &(t0, t1) in &spans {
            let key = (t1 - t0).to_bits();
            let u = match cache.iter().find(|(k, _)| *k == key) {
                Some((_, u)) => u.clone(),
                None => {
                    let u = expm(&(&m * C64::from(t1 - t0)))?;
                    cache.push((key, u.clone()));
                    u
                }
            };
            out.push(Interval { u, err: 0.0, substeps: 1 });
        }
        out
    } else {
        try_par_map(&spans, |&(t0, t1)| adaptive_interval(&g, t0, t1, tol))?
    };
    let total: usize = intervals.iter().map(|i| i.substeps).sum();
    if total > MAX_SUBSTEPS {
        return Err(Error::Stiffness {
            t: grid[0],
            step: (grid[grid.len() - 1] - grid[0]) / total as f64,
        });
    }
    let mut steps: Vec<CMatrix> = Vec::with_capacity(spans.len());
    let mut errors = Vec::with_capacity(spans.len());
    let mut substeps = Vec::with_capacity(spans.len());
    for (k, iv) in intervals.into_iter().enumerate() {
        let u = match &gen.frame {
            Some(f) => {
                let (r0, r1) = (f.rot.get(spans[k].0), f.rot.get(spans[k].1));
                mul(&mul(&r1.1, &iv.u), &r0.0)
            }
            None => iv.u,
        };
        steps.push(u);
        errors.push(iv.err);
        substeps.push(iv.substeps);
    }
    Ok(PropagatorTable::from_steps(grid.to_vec(), eps, Integrator::Cf4, steps, errors, substeps))
}

/// `U_ε` for `(1/ε) A(t)`.
pub fn propagate(a: &OperatorFamily, eps: f64, grid: &[f64], tol: f64) -> Result<PropagatorTable> {
    propagate_generator(&Generator::plain(a, eps)?, eps, grid, tol)
}

/// `V_ε` for `(1/ε) A(t) + [P'(t), P(t)]`.
pub fn propagate_intertwined(
    a: &OperatorFamily,
    p: &ProjectionFamily,
    eps: f64,
    grid: &[f64],
    tol: f64,
) -> Result<PropagatorTable> {
    propagate_generator(&Generator::intertwined(a, p, eps)?, eps, grid, tol)
}

/// `V_{0,ε}` for `(1/ε) A(t)P(t) + [P'(t), P(t)]`.
pub fn propagate_projected(
    a: &OperatorFamily,
    p: &ProjectionFamily,
    eps: f64,
    grid: &[f64],
    tol: f64,
) -> Result<PropagatorTable> {
    propagate_generator(&Generator::projected(a, p, eps)?, eps, grid, tol)
}

/// Classical RK4 in the lab frame with at most `h` per substep: the
/// reference oracle for the CF4 tables.
pub fn propagate_rk4(gen: &Generator, eps: f64, grid: &[f64], h: f64) -> Result<PropagatorTable> {
    check_grid(grid)?;
    let spans: Vec<(f64, f64)> = grid.windows(2).map(|w| (w[0], w[1])).collect();
    let total: f64 = spans.iter().map(|(a, b)| ((b - a) / h).ceil()).sum();
    if h < MIN_STEP || total > 1e8 {
        return Err(Error::Stiffness { t: grid[0], step: h });
    }
    let lab = gen.lab.clone();
    let steps = crate::util::par_map(&spans, |&(t0, t1)| {
        let n = ((t1 - t0) / h).ceil().max(1.0) as usize;
        (rk4_interval(&lab, t0, t1, n), n)
    });
    let substeps = steps.iter().map(|s| s.1).collect();
    let errors = vec![f64::NAN; spans.len()];
    let steps = steps.into_iter().map(|s| s.0).collect();
    Ok(PropagatorTable::from_steps(grid.to_vec(), eps, Integrator::Rk4, steps, errors, substeps))
}

/// Per grid point `‖P(t) V(t, t₀) − V(t, t₀) P(t₀)‖ / max(1, ‖V(t, t₀)‖)`:
/// how far the table is from being adiabatic with respect to `p`, relative
/// to its size (growing evolutions only keep relative accuracy).
pub fn adiabaticity_defect(table: &PropagatorTable, p: &ProjectionFamily) -> Vec<f64> {
    let p0 = p.at(table.grid[0]);
    crate::util::par_map(&(0..table.grid.len()).collect::<Vec<_>>(), |&k| {
        let v = &table.accumulated[k];
        let size = crate::matrixkit::norm2(v).max(1.0);
        crate::matrixkit::norm2(&(mul(&p.at(table.grid[k]), v) - mul(v, &p0))) / size
    })
}
