//! Time-dependent operator and projection families on `I = [0, 1]`, spectral
//! curves, and a registry of worked examples.
//!
//! A family built by [`similarity_family`] remembers its core `A₀` and the
//! generator `C` of `R(t) = e^{Ct}`. The evolution module uses this to
//! integrate in the rotating frame, where the equation is exact and far less
//! oscillatory.

mod registry;

pub use registry::{example, manifest, manifest_json, Example, ExampleSpec, Expectation, ParamSpec, Params, REGISTRY};

use crate::error::{Error, Result};
use crate::matrixkit::{self, commutator, expm, mul, numerical_rank, CMatrix, C64};
use std::sync::{Arc, Mutex};

pub type MatFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default central-difference step for families without an analytic derivative.
pub const FD_STEP: f64 = 1e-5;

/// Number of points in the uniform probe grid used by invariant checks.
pub const PROBE_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Smoothness {
    W11,
    W1Inf,
    C1,
    C2,
}

/// `λ(t) + α(t) N` structure of a Jordan-type building block, needed by the
/// `(M,0)`-stability criterion.
#[derive(Clone)]
pub struct JordanStructure {
    pub lambda: ScalarFn,
    pub alpha: RealFn,
    pub n: CMatrix,
}

/// `A(t) = e^{-Ct} A₀(t) e^{Ct}`.
#[derive(Clone)]
pub struct Frame {
    pub core: Arc<OperatorFamily>,
    pub c: CMatrix,
}

#[derive(Clone)]
pub struct OperatorFamily {
    pub name: String,
    pub dim: usize,
    sampler: MatFn,
    derivative: Option<MatFn>,
    pub fd_step: f64,
    pub smoothness: Smoothness,
    /// Describes what a truncation of an infinite-dimensional example gave up.
    pub truncation: Option<String>,
    pub structure: Option<JordanStructure>,
    pub frame: Option<Frame>,
    /// `A(t)` does not depend on `t`.
    pub constant: bool,
}

impl std::fmt::Debug for OperatorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorFamily")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_derivative", &self.derivative.is_some())
            .field("rotating_frame", &self.frame.is_some())
            .finish()
    }
}

impl OperatorFamily {
    pub fn new(name: impl Into<String>, dim: usize, sampler: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            dim,
            sampler: Arc::new(sampler),
            derivative: None,
            fd_step: FD_STEP,
            smoothness: Smoothness::C2,
            truncation: None,
            structure: None,
            frame: None,
            constant: false,
        }
    }

    pub fn constant(name: impl Into<String>, a: CMatrix) -> Self {
        let d = a.nrows();
        let zero = CMatrix::zeros(d, d);
        let mut fam = Self::new(name, d, move |_| a.clone()).with_derivative(move |_| zero.clone());
        fam.constant = true;
        fam
    }

    pub fn with_derivative(mut self, derivative: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    pub fn with_structure(mut self, s: JordanStructure) -> Self {
        self.structure = Some(s);
        self
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }

    pub fn with_truncation(mut self, note: impl Into<String>) -> Self {
        self.truncation = Some(note.into());
        self
    }

    pub fn at(&self, t: f64) -> CMatrix {
        (self.sampler)(t)
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// `A'(t)`: analytic when available, central difference otherwise.
    pub fn derivative(&self, t: f64) -> CMatrix {
        match &self.derivative {
            Some(d) => d(t),
            None => self.central_difference(t, self.fd_step),
        }
    }

    pub fn central_difference(&self, t: f64, h: f64) -> CMatrix {
        (self.at(t + h) - self.at(t - h)) / C64::new(2.0 * h, 0.0)
    }

    /// Scales the family, `t ↦ s·A(t)`.
    pub fn scaled(&self, s: f64) -> Self {
        let inner = self.clone();
        let inner_d = self.clone();
        let sc = C64::new(s, 0.0);
        let mut out = Self::new(format!("{}*{s}", self.name), self.dim, move |t| inner.at(t) * sc)
            .with_derivative(move |t| inner_d.derivative(t) * sc);
        out.constant = self.constant;
        out
    }

    /// Time-rescaled family `s ↦ A(t₀ + k·s)`.
    pub fn reparametrized(&self, t0: f64, k: f64) -> Self {
        let inner = self.clone();
        let inner_d = self.clone();
        let kc = C64::new(k, 0.0);
        let mut out = Self::new(format!("{}@rescaled", self.name), self.dim, move |s| inner.at(t0 + k * s))
            .with_derivative(move |s| inner_d.derivative(t0 + k * s) * kc);
        out.constant = self.constant;
        out
    }

    /// Largest ‖A(t)‖ over the probe grid.
    pub fn sup_norm(&self, points: usize) -> f64 {
        probe_grid(points)
            .into_iter()
            .map(|t| matrixkit::norm2(&self.at(t)))
            .fold(0.0, f64::max)
    }

    /// Max over `probe` of ‖(A(t+h)−A(t−h))/2h − A'(t)‖.
    pub fn derivative_consistency(&self, probe: &[f64], h: f64) -> f64 {
        probe
            .iter()
            .map(|&t| matrixkit::norm2(&(self.central_difference(t, h) - self.derivative(t))))
            .fold(0.0, f64::max)
    }

    /// Checks finiteness and squareness on the probe grid.
    pub fn check(&self, probe: &[f64]) -> Result<()> {
        for &t in probe {
            let a = self.at(t);
            if a.nrows() != self.dim || a.ncols() != self.dim {
                return Err(Error::Dimension(format!("{} at t={t}", self.name)));
            }
            matrixkit::check_finite(&a)?;
        }
        Ok(())
    }
}

/// `t ↦ (e^{Ct}, e^{−Ct})` with a small cache keyed by `t`, shared by an
/// operator family and its projection family so that `A(t)`, `P(t)`,
/// `P'(t)` sampled at the same `t` exponentiate once.
pub struct Rotator {
    pub c: CMatrix,
    skew: bool,
    cache: Mutex<Vec<(u64, Arc<(CMatrix, CMatrix)>)>>,
}

const ROTATOR_CACHE: usize = 16;

impl Rotator {
    pub fn new(c: &CMatrix) -> Arc<Self> {
        let skew = matrixkit::norm_fro(&(c + c.adjoint())) == 0.0;
        Arc::new(Self {
            c: c.clone(),
            skew,
            cache: Mutex::new(Vec::with_capacity(ROTATOR_CACHE)),
        })
    }

    pub fn get(&self, t: f64) -> Arc<(CMatrix, CMatrix)> {
        let key = t.to_bits();
        if let Ok(cache) = self.cache.lock() {
            if let Some((_, v)) = cache.iter().find(|(k, _)| *k == key) {
                return v.clone();
            }
        }
        let ct = &self.c * C64::new(t, 0.0);
        let r = expm(&ct).expect("rotation generator within expm range");
        let rinv = if self.skew {
            r.adjoint()
        } else {
            expm(&(-ct)).expect("rotation generator within expm range")
        };
        let v = Arc::new((r, rinv));
        if let Ok(mut cache) = self.cache.lock() {
            if cache.len() == ROTATOR_CACHE {
                cache.remove(0);
            }
            cache.push((key, v.clone()));
        }
        v
    }

    /// `e^{−Ct} X e^{Ct}`.
    pub fn conjugate(&self, t: f64, x: &CMatrix) -> CMatrix {
        let rot = self.get(t);
        mul(&mul(&rot.1, x), &rot.0)
    }
}

/// `t ↦ e^{−Ct}A₀(t)e^{Ct}` with derivative `e^{−Ct}(A₀'(t) + [A₀(t), C])e^{Ct}`.
pub fn similarity_family(a0: &OperatorFamily, c: &CMatrix) -> Result<OperatorFamily> {
    check_generator(a0.dim, c)?;
    similarity_family_with(a0, &Rotator::new(c))
}

fn check_generator(dim: usize, c: &CMatrix) -> Result<()> {
    if c.nrows() != dim || c.ncols() != dim {
        return Err(Error::Dimension(format!(
            "similarity: family has dimension {dim}, C is {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    matrixkit::check_finite(c)
}

/// As [`similarity_family`], reusing `rot` (share it with the matching
/// projection family).
pub fn similarity_family_with(a0: &OperatorFamily, rot: &Arc<Rotator>) -> Result<OperatorFamily> {
    check_generator(a0.dim, &rot.c)?;
    if rot.c.iter().all(|z| z.norm() == 0.0) {
        return Ok(a0.clone());
    }
    let (core, r1) = (a0.clone(), rot.clone());
    let (core_d, r2) = (a0.clone(), rot.clone());
    let mut fam = OperatorFamily::new(a0.name.clone(), a0.dim, move |t| r1.conjugate(t, &core.at(t)))
        .with_derivative(move |t| {
            let inner = core_d.derivative(t) + commutator(&core_d.at(t), &r2.c);
            r2.conjugate(t, &inner)
        });
    fam.smoothness = a0.smoothness;
    fam.truncation = a0.truncation.clone();
    fam.frame = if a0.frame.is_none() {
        Some(Frame {
            core: Arc::new(a0.clone()),
            c: rot.c.clone(),
        })
    } else {
        None
    };
    Ok(fam)
}

/// `e^{−Ct} X e^{Ct}`.
pub fn conjugate(c: &CMatrix, t: f64, x: &CMatrix) -> CMatrix {
    let (r, rinv) = rotation(c, t);
    mul(&mul(&rinv, x), &r)
}

/// `(e^{Ct}, e^{−Ct})`.
pub fn rotation(c: &CMatrix, t: f64) -> (CMatrix, CMatrix) {
    let ct = c * C64::new(t, 0.0);
    let r = expm(&ct).expect("rotation generator within expm range");
    let rinv = expm(&(-ct)).expect("rotation generator within expm range");
    (r, rinv)
}

/// How a projection family relates to its operator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Associatedness {
    Associated,
    WeaklyAssociated { order: usize },
    Unspecified,
}

#[derive(Clone)]
pub struct ProjFrame {
    pub core: Arc<ProjectionFamily>,
    pub c: CMatrix,
}

#[derive(Clone)]
pub struct ProjectionFamily {
    sampler: MatFn,
    derivative: Option<MatFn>,
    second: Option<MatFn>,
    pub rank: usize,
    pub dim: usize,
    pub kind: Associatedness,
    pub frame: Option<ProjFrame>,
    pub constant: bool,
    pub fd_step: f64,
}

impl std::fmt::Debug for ProjectionFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProjectionFamily")
            .field("dim", &self.dim)
            .field("rank", &self.rank)
            .field("kind", &self.kind)
            .finish()
    }
}

impl ProjectionFamily {
    pub fn new(dim: usize, rank: usize, sampler: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        Self {
            sampler: Arc::new(sampler),
            derivative: None,
            second: None,
            rank,
            dim,
            kind: Associatedness::Unspecified,
            frame: None,
            constant: false,
            fd_step: FD_STEP,
        }
    }

    /// Constant projection with vanishing derivatives; the rank is measured.
    pub fn constant(p: CMatrix) -> Self {
        let d = p.nrows();
        let rank = numerical_rank(&p, matrixkit::RANK_TOL);
        let z = CMatrix::zeros(d, d);
        let z2 = z.clone();
        let mut fam = Self::new(d, rank, move |_| p.clone())
            .with_derivative(move |_| z.clone())
            .with_second_derivative(move |_| z2.clone());
        fam.constant = true;
        fam
    }

    pub fn with_derivative(mut self, f: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(f));
        self
    }

    pub fn with_second_derivative(mut self, f: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        self.second = Some(Arc::new(f));
        self
    }

    pub fn with_kind(mut self, kind: Associatedness) -> Self {
        self.kind = kind;
        self
    }

    pub fn at(&self, t: f64) -> CMatrix {
        (self.sampler)(t)
    }

    pub fn complement(&self, t: f64) -> CMatrix {
        CMatrix::identity(self.dim, self.dim) - self.at(t)
    }

    pub fn derivative(&self, t: f64) -> CMatrix {
        match &self.derivative {
            Some(d) => d(t),
            None => {
                let h = self.fd_step;
                (self.at(t + h) - self.at(t - h)) / C64::new(2.0 * h, 0.0)
            }
        }
    }

    pub fn second_derivative(&self, t: f64) -> CMatrix {
        match &self.second {
            Some(d) => d(t),
            None => {
                let h = self.fd_step.max(1e-4);
                (self.derivative(t + h) - self.derivative(t - h)) / C64::new(2.0 * h, 0.0)
            }
        }
    }

    /// `[P'(t), P(t)]`.
    pub fn commutator_target(&self, t: f64) -> CMatrix {
        commutator(&self.derivative(t), &self.at(t))
    }

    /// Checks the projection invariants on `probe`: idempotence, constant
    /// rank and `P P' P = 0`.
    pub fn check(&self, probe: &[f64]) -> Result<()> {
        for &t in probe {
            let p = self.at(t);
            matrixkit::check_finite(&p)?;
            let idem = matrixkit::norm2_upto(&(mul(&p, &p) - &p), 1e-10);
            if idem > 1e-10 {
                return Err(Error::Invariant {
                    name: "P^2 = P".into(),
                    detail: format!("defect {idem:.3e} at t={t}"),
                });
            }
            let rank = numerical_rank(&p, matrixkit::RANK_TOL);
            if rank != self.rank {
                return Err(Error::Invariant {
                    name: "constant rank".into(),
                    detail: format!("rank {rank} at t={t}, expected {}", self.rank),
                });
            }
            let ppp = matrixkit::norm2_upto(&mul(&mul(&p, &self.derivative(t)), &p), 1e-10);
            if ppp > 1e-10 {
                return Err(Error::Invariant {
                    name: "P P' P = 0".into(),
                    detail: format!("defect {ppp:.3e} at t={t}"),
                });
            }
        }
        Ok(())
    }
}

/// `t ↦ e^{−Ct}P₀(t)e^{Ct}` with analytic first and second derivatives.
pub fn similarity_projection(p0: &ProjectionFamily, c: &CMatrix) -> Result<ProjectionFamily> {
    check_generator(p0.dim, c)?;
    similarity_projection_with(p0, &Rotator::new(c))
}

pub fn similarity_projection_with(p0: &ProjectionFamily, rot: &Arc<Rotator>) -> Result<ProjectionFamily> {
    check_generator(p0.dim, &rot.c)?;
    if rot.c.iter().all(|z| z.norm() == 0.0) {
        return Ok(p0.clone());
    }
    let (a, ra) = (p0.clone(), rot.clone());
    let (b, rb) = (p0.clone(), rot.clone());
    let (s, rs) = (p0.clone(), rot.clone());
    let mut fam = ProjectionFamily::new(p0.dim, p0.rank, move |t| ra.conjugate(t, &a.at(t)))
        .with_derivative(move |t| {
            let inner = b.derivative(t) + commutator(&b.at(t), &rb.c);
            rb.conjugate(t, &inner)
        })
        .with_second_derivative(move |t| {
            let c = &rs.c;
            let pc = commutator(&s.at(t), c);
            let inner = s.second_derivative(t) + commutator(&s.derivative(t), c) * C64::new(2.0, 0.0) + commutator(&pc, c);
            rs.conjugate(t, &inner)
        });
    fam.kind = p0.kind;
    fam.frame = if p0.frame.is_none() {
        Some(ProjFrame {
            core: Arc::new(p0.clone()),
            c: rot.c.clone(),
        })
    } else {
        None
    };
    Ok(fam)
}

/// `λ(t)` with ray direction `θ(t)` and ray length `δ₀`.
#[derive(Clone)]
pub struct SpectralCurve {
    pub lambda: ScalarFn,
    pub theta: RealFn,
    pub delta0: f64,
}

impl std::fmt::Debug for SpectralCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralCurve").field("delta0", &self.delta0).finish()
    }
}

impl SpectralCurve {
    pub fn new(
        lambda: impl Fn(f64) -> C64 + Send + Sync + 'static,
        theta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        delta0: f64,
    ) -> Self {
        Self {
            lambda: Arc::new(lambda),
            theta: Arc::new(theta),
            delta0,
        }
    }

    pub fn constant(lambda: C64, theta: f64, delta0: f64) -> Self {
        Self::new(move |_| lambda, move |_| theta, delta0)
    }

    pub fn lambda(&self, t: f64) -> C64 {
        (self.lambda)(t)
    }

    pub fn theta(&self, t: f64) -> f64 {
        (self.theta)(t)
    }

    /// `λ(t) + δ e^{iθ(t)}`.
    pub fn ray_point(&self, t: f64, delta: f64) -> C64 {
        self.lambda(t) + C64::from_polar(delta, self.theta(t))
    }

    /// Checks that `λ(t)` is an eigenvalue to `1e-8·‖A(t)‖` and that the
    /// ray stays in the resolvent set on a `(t, δ)` probe grid.
    pub fn check(&self, a: &OperatorFamily, probe: &[f64], deltas: &[f64]) -> Result<()> {
        for &t in probe {
            let at = a.at(t);
            let scale = matrixkit::norm2(&at).max(1.0);
            let id = CMatrix::identity(a.dim, a.dim);
            let shifted = &at - &id * self.lambda(t);
            let smin = matrixkit::sigma_min(&shifted);
            if smin > 1e-8 * scale {
                return Err(Error::Invariant {
                    name: "lambda(t) is an eigenvalue".into(),
                    detail: format!("sigma_min {smin:.3e} at t={t}"),
                });
            }
            for &delta in deltas {
                let z = self.ray_point(t, delta);
                let smin = matrixkit::sigma_min(&(&id * z - &at));
                if smin <= 0.0 || smin < 1e-14 * scale {
                    return Err(Error::RayHitsSpectrum { t, delta });
                }
            }
        }
        Ok(())
    }
}

/// `n`-point uniform grid on `[0, 1]`.
pub fn probe_grid(n: usize) -> Vec<f64> {
    uniform_grid(0.0, 1.0, n)
}

pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}
