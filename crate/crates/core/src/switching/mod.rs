//! Adiabatic switching `A(t) = A₀ + κ(t)V` on `(−∞, 0]` and the Gell-Mann–Low
//! limit.
//!
//! Everything is integrated in the lab frame on `[−T, 0]`, where the tail is
//! almost autonomous, and converted with `U^I(0, −T) = U_ε(0, −T) e^{−A₀T/ε}`.
//! The horizon `T` is chosen so the neglected tail `(1/ε)‖V‖∫_{−∞}^{−T}κ` stays
//! below `tail_tol`.

mod continuation;

pub use continuation::{continuation_grid, continue_curves, EigenCurve, KAPPA_MIN};

use crate::error::{Error, Result};
use crate::evolve::{propagate, propagate_generator, Generator};
use crate::matrixkit::{self, mul, norm2, CMatrix, C64};
use crate::openq::MatrixJson;
use crate::opfamily::{uniform_grid, OperatorFamily};
use crate::util::{sig12, try_par_map};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

pub type CVector = DVector<C64>;

/// Default samples of the uniform part of the eigen-continuation.
pub const CONTINUATION_SAMPLES: usize = 200;
/// Relative step of the central difference in the switching strength `μ`.
pub const MU_STEP: f64 = 1e-4;

/// Switching function `κ` with `κ(0) = 1` and `κ(−∞) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Switch {
    /// `κ(t) = eᵗ`.
    Exp,
    /// Quintic smoothstep on `[−width, 0]`, zero before.
    Smoothstep { width: f64 },
}

impl Switch {
    pub fn kappa(&self, t: f64) -> f64 {
        match *self {
            Switch::Exp => t.min(0.0).exp(),
            Switch::Smoothstep { width } => {
                let u = (1.0 + t / width).clamp(0.0, 1.0);
                u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
            }
        }
    }

    pub fn dkappa(&self, t: f64) -> f64 {
        match *self {
            Switch::Exp => t.min(0.0).exp(),
            Switch::Smoothstep { width } => {
                let u = (1.0 + t / width).clamp(0.0, 1.0);
                30.0 * u * u * (1.0 - u) * (1.0 - u) / width
            }
        }
    }

    /// Smallest `T` with `κ(−T)`, `∫_{−∞}^{−T}κ` and `(‖V‖/ε)∫_{−∞}^{−T}κ` all
    /// at most `tail_tol`.
    pub fn horizon(&self, tail_tol: f64, eps: f64, v_norm: f64) -> f64 {
        match *self {
            Switch::Exp => ((v_norm / eps).max(1.0) / tail_tol).ln().max(0.0),
            Switch::Smoothstep { width } => width,
        }
    }
}

/// Unperturbed `A₀`, perturbation `V` (both skew-Hermitian) and the switch.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSetup {
    pub a0: CMatrix,
    pub v: CMatrix,
    pub switch: Switch,
    pub tail_tol: f64,
}

#[derive(Serialize, Deserialize)]
struct SetupJson {
    a0: MatrixJson,
    v: MatrixJson,
    switch: Switch,
    #[serde(default = "default_tail")]
    tail_tol: f64,
}

fn default_tail() -> f64 {
    1e-8
}

impl SwitchingSetup {
    pub fn new(a0: CMatrix, v: CMatrix, switch: Switch) -> Result<Self> {
        let s = Self {
            a0,
            v,
            switch,
            tail_tol: default_tail(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = matrixkit::check_square(&self.a0)?;
        if self.v.shape() != (d, d) {
            return Err(Error::Dimension(format!("V is {:?}, A0 is {d}x{d}", self.v.shape())));
        }
        for m in [&self.a0, &self.v] {
            matrixkit::check_finite(m)?;
            let defect = matrixkit::skew_hermitian_defect(m);
            if defect > 1e-12 * norm2(m).max(1.0) {
                return Err(Error::NotSkewHermitian(defect));
            }
        }
        if let Switch::Smoothstep { width } = self.switch {
            if !(width > 0.0 && width.is_finite()) {
                return Err(Error::InvalidParam {
                    name: "width".into(),
                    reason: format!("{width} is not positive"),
                });
            }
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return Err(Error::InvalidParam {
                name: "tail_tol".into(),
                reason: "must lie in (0, 1)".into(),
            });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SetupJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let s = Self {
            a0: raw.a0.to_matrix()?,
            v: raw.v.to_matrix()?,
            switch: raw.switch,
            tail_tol: raw.tail_tol,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let raw = SetupJson {
            a0: MatrixJson::from_matrix(&self.a0),
            v: MatrixJson::from_matrix(&self.v),
            switch: self.switch,
            tail_tol: self.tail_tol,
        };
        serde_json::to_string_pretty(&raw).expect("setup serializes")
    }

    /// `A₀ + κV`.
    pub fn at_kappa(&self, kappa: f64) -> CMatrix {
        &self.a0 + &self.v * C64::from(kappa)
    }

    pub fn horizon(&self, eps: f64) -> f64 {
        self.switch.horizon(self.tail_tol, eps, norm2(&self.v))
    }

    /// `A₀ + μκ(t)V` with its analytic derivative.
    pub fn family(&self, mu: f64) -> OperatorFamily {
        let (a0, v, sw) = (self.a0.clone(), self.v.clone(), self.switch);
        let v2 = v.clone();
        OperatorFamily::new("switching", self.dim(), move |t| &a0 + &v * C64::from(mu * sw.kappa(t)))
            .with_derivative(move |t| &v2 * C64::from(mu * sw.dkappa(t)))
    }
}

/// Ascending eigenvalues and matching eigenvector columns of a Hermitian `h`.
pub(crate) fn sorted_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mu = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let cols: Vec<CVector> = order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    (mu, CMatrix::from_columns(&cols))
}

/// Spectral data of a skew-Hermitian `a` through `i·a`: `λ_k = −iμ_k`.
pub(crate) fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let mut h = a * C64::i();
    // symmetrise away rounding
    h = (&h + h.adjoint()) * C64::from(0.5);
    sorted_eigen(&h)
}

/// `exp(sA)` for skew-Hermitian `a`, through its eigendecomposition (exact
/// unitarity at large `|s|`).
pub fn skew_exp(a: &CMatrix, s: f64) -> CMatrix {
    let (mu, v) = hermitian_eigen(a);
    let phases: Vec<C64> = mu.iter().map(|&m| C64::from_polar(1.0, -s * m)).collect();
    let scaled = CMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * phases[j]);
    mul(&scaled, &v.adjoint())
}

/// Output grid on `[−T, 0]` with spacing at most `1/2`.
pub fn switching_grid(horizon: f64) -> Vec<f64> {
    let n = (2.0 * horizon).ceil().max(1.0) as usize + 1;
    uniform_grid(-horizon, 0.0, n)
}

#[derive(Debug, Clone)]
pub struct Interaction {
    pub horizon: f64,
    /// `U^I(0, −T)`.
    pub u: CMatrix,
    pub unitarity_defect: f64,
    pub total_error: f64,
}

fn interaction_with(setup: &SwitchingSetup, eps: f64, mu: f64, horizon: f64, tol: f64) -> Result<Interaction> {
    check_eps(eps)?;
    let table = propagate(&setup.family(mu), eps, &switching_grid(horizon), tol)?;
    Ok(Interaction {
        horizon,
        u: mul(table.last(), &skew_exp(&setup.a0, -horizon / eps)),
        unitarity_defect: table.unitarity_defect(),
        total_error: table.total_error(),
    })
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            name: "epsilon".into(),
            reason: format!("{eps} is not positive"),
        })
    }
}

/// `U_ε^I(0, −T)` at the automatic horizon.
pub fn interaction_propagator(setup: &SwitchingSetup, eps: f64, tol: f64) -> Result<Interaction> {
    interaction_with(setup, eps, 1.0, setup.horizon(eps), tol)
}

/// `‖U^I(0, −T) − U^I(0, −2T)‖`, expected below `10·tail_tol`.
pub fn horizon_defect(setup: &SwitchingSetup, eps: f64, tol: f64) -> Result<f64> {
    let t = setup.horizon(eps);
    let pair = try_par_map(&[t, 2.0 * t], |&h| interaction_with(setup, eps, 1.0, h, tol))?;
    Ok(norm2(&(&pair[0].u - &pair[1].u)))
}

/// `K̲(κ) = [P̲'(κ), P̲(κ)] = R̄VP − PVR̄` for the tracked curve, with `R̄` the
/// reduced resolvent of `A₀ + κV` at `λ(κ)`. Below [`KAPPA_MIN`] the value at
/// `KAPPA_MIN` is used.
pub fn transport_generator(setup: &SwitchingSetup, curve: &EigenCurve, kappa: f64) -> CMatrix {
    let k = kappa.clamp(KAPPA_MIN, 1.0);
    let (mu, vecs) = hermitian_eigen(&setup.at_kappa(k));
    let members = curve.members(k, &mu);
    let d = setup.dim();
    let lam = members.iter().map(|&i| mu[i]).sum::<f64>() / members.len() as f64;
    let mut p = CMatrix::zeros(d, d);
    let mut rbar = CMatrix::zeros(d, d);
    for i in 0..d {
        let col = vecs.column(i).into_owned();
        let outer = &col * col.adjoint();
        if members.contains(&i) {
            p += outer;
        } else {
            // λ − λ_i = −i(μ − μ_i)
            rbar += outer / C64::new(0.0, -(lam - mu[i]));
        }
    }
    let vp = mul(&setup.v, &p);
    let pv = mul(&p, &setup.v);
    mul(&rbar, &vp) - mul(&pv, &rbar)
}

/// Unitary polar factor of `m`.
fn polar(m: &CMatrix) -> CMatrix {
    let svd = m.clone().svd(true, true);
    mul(&svd.u.expect("requested"), &svd.v_t.expect("requested"))
}

/// `W(0, −∞)`: the evolution of `K̲` in `κ` from `0` to `1` for the
/// decomposition `{P_j, 1 − P_j}`. The stretch `[0, KAPPA_MIN]` is one
/// symmetric transport step `polar(P₁P₀ + Q₁Q₀)`.
pub fn transport(setup: &SwitchingSetup, curve: &EigenCurve, tol: f64) -> Result<CMatrix> {
    let d = setup.dim();
    let one = matrixkit::identity(d);
    let p0 = curve.initial_projection();
    let p1 = &curve.proj[1];
    let first = polar(&(mul(p1, p0) + mul(&(&one - p1), &(&one - p0))));
    let (s, c) = (Arc::new(setup.clone()), Arc::new(curve.clone()));
    let gen = Generator::from_fn(d, move |k| transport_generator(&s, &c, k));
    let mut grid = vec![KAPPA_MIN];
    grid.extend((1..=16).map(|k| k as f64 / 16.0));
    let table = propagate_generator(&gen, 1.0, &grid, tol)?;
    Ok(mul(table.last(), &first))
}

/// `V_ε^I(0, −T)` for `(1/ε)A(t) + κ'(t)K̲(κ(t))`.
pub fn adiabatic_interaction(setup: &SwitchingSetup, curve: &EigenCurve, eps: f64, tol: f64) -> Result<CMatrix> {
    check_eps(eps)?;
    let horizon = setup.horizon(eps);
    let (s, c) = (Arc::new(setup.clone()), Arc::new(curve.clone()));
    let inv = C64::from(1.0 / eps);
    let gen = Generator::from_fn(setup.dim(), move |t| {
        let kap = s.switch.kappa(t);
        let a = s.at_kappa(kap) * inv;
        let dk = s.switch.dkappa(t);
        if dk == 0.0 {
            a
        } else {
            a + transport_generator(&s, &c, kap) * C64::from(dk)
        }
    });
    let table = propagate_generator(&gen, eps, &switching_grid(horizon), tol)?;
    Ok(mul(table.last(), &skew_exp(&setup.a0, -horizon / eps)))
}

/// `sqrt(1 − |⟨u, w⟩|²/(‖u‖²‖w‖²))`.
pub fn projective_distance(u: &CVector, w: &CVector) -> f64 {
    let (nu, nw) = (u.norm(), w.norm());
    if nu == 0.0 || nw == 0.0 {
        return 1.0;
    }
    let c = u.dotc(w).norm() / (nu * nw);
    (1.0 - (c * c).min(1.0)).sqrt()
}

/// Selects a curve and checks `x` against its initial projection.
fn prepare<'a>(setup: &SwitchingSetup, curves: &'a [EigenCurve], j: usize, x: &CVector, xp: &CVector) -> Result<&'a EigenCurve> {
    let d = setup.dim();
    if x.len() != d || xp.len() != d {
        return Err(Error::Dimension(format!("vectors must have length {d}")));
    }
    let curve = curves.get(j).ok_or_else(|| Error::InvalidParam {
        name: "curve".into(),
        reason: format!("index {j} out of {}", curves.len()),
    })?;
    let jump = norm2(&(curve.final_projection() - curve.initial_projection()));
    if jump >= 1.0 - 1e-12 {
        return Err(Error::ProjectionJump(jump));
    }
    let p = curve.initial_projection();
    for v in [x, xp] {
        let off = (v - p * v).norm();
        if off > 1e-8 * v.norm().max(1e-300) {
            return Err(Error::OutsideRange(off / v.norm().max(1e-300)));
        }
    }
    Ok(curve)
}

/// `⟨x', y⟩`, rejected when small against `‖x'‖‖y‖`.
fn denominator(xp: &CVector, y: &CVector) -> Result<C64> {
    let den = xp.dotc(y);
    if den.norm() <= 1e-10 * xp.norm() * y.norm() || !den.is_finite() {
        return Err(Error::Denominator(den));
    }
    Ok(den)
}

#[derive(Debug, Clone)]
pub struct GmlRatio {
    /// `U^I(0,−∞)x / ⟨x', U^I(0,−∞)x⟩`.
    pub ratio: CVector,
    /// `W(0,−∞)x / ⟨x', W(0,−∞)x⟩`.
    pub target: CVector,
    /// `‖ratio − target‖`.
    pub difference: f64,
    pub projective_distance: f64,
    /// `‖(A(0) − λ(0))·target‖ / ‖target‖`.
    pub eigen_residual: f64,
    pub horizon: f64,
}

/// The Gell-Mann–Low ratio for curve `j` of `curves` (see [`continue_curves`]).
/// `x` and `x'` must lie in the range of `P_j(−∞)`.
pub fn gml_ratio(setup: &SwitchingSetup, curves: &[EigenCurve], j: usize, eps: f64, x: &CVector, xp: &CVector, tol: f64) -> Result<GmlRatio> {
    let curve = prepare(setup, curves, j, x, xp)?;
    let w = transport(setup, curve, tol.min(1e-11))?;
    let wx = &w * x;
    let target = &wx / denominator(xp, &wx)?;
    let lam = curve.lambda[curve.lambda.len() - 1];
    let a1 = setup.at_kappa(1.0);
    let eigen_residual = (&a1 * &target - &target * lam).norm() / target.norm();
    if eigen_residual > 1e-7 * norm2(&a1).max(1.0) {
        return Err(Error::Invariant {
            name: "gml target".into(),
            detail: format!("W x is {eigen_residual:.3e} away from the eigenspace"),
        });
    }
    let ui = interaction_propagator(setup, eps, tol)?;
    let ux = &ui.u * x;
    let ratio = &ux / denominator(xp, &ux)?;
    Ok(GmlRatio {
        difference: (&ratio - &target).norm(),
        projective_distance: projective_distance(&ratio, &target),
        ratio,
        target,
        eigen_residual,
        horizon: ui.horizon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyShift {
    /// `−⟨Vx', U^I x⟩ / ⟨x', U^I x⟩`.
    pub log_derivative: C64,
    /// `ε d/dμ log⟨x', (U^μ)^I x⟩` at `μ = 1`; only for `κ = eᵗ`.
    pub exp_switch: Option<C64>,
    /// `λ_j(0) − λ_j(−∞)`.
    pub exact: C64,
}

/// Principal logarithm, refusing points near zero or the negative real axis.
fn principal_log(z: C64) -> Result<C64> {
    if z.norm() < 1e-12 || (z.re < 0.0 && z.im.abs() <= 1e-12 * z.norm()) {
        return Err(Error::Denominator(z));
    }
    Ok(z.ln())
}

/// Energy shift of curve `j` by both formulas.
pub fn energy_shift(setup: &SwitchingSetup, curves: &[EigenCurve], j: usize, eps: f64, x: &CVector, xp: &CVector, tol: f64) -> Result<EnergyShift> {
    let curve = prepare(setup, curves, j, x, xp)?;
    let exact = curve.shift();
    if norm2(&setup.v) == 0.0 {
        let zero = C64::from(0.0);
        return Ok(EnergyShift {
            log_derivative: zero,
            exp_switch: (setup.switch == Switch::Exp).then_some(zero),
            exact,
        });
    }
    let horizon = setup.horizon(eps * (1.0 - MU_STEP));
    let mus: Vec<f64> = match setup.switch {
        Switch::Exp => vec![1.0, 1.0 - MU_STEP, 1.0 + MU_STEP],
        Switch::Smoothstep { .. } => vec![1.0],
    };
    let runs = try_par_map(&mus, |&mu| interaction_with(setup, eps, mu, horizon, tol))?;
    let ux = &runs[0].u * x;
    let f = denominator(xp, &ux)?;
    let vxp = &setup.v * xp;
    let log_derivative = -vxp.dotc(&ux) / f;
    let exp_switch = if runs.len() == 3 {
        let lo = principal_log(xp.dotc(&(&runs[1].u * x)))?;
        let hi = principal_log(xp.dotc(&(&runs[2].u * x)))?;
        let mut diff = hi - lo;
        if diff.im.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::Denominator(diff));
        }
        // a difference buried in integration error carries no information
        let noise = runs.iter().map(|r| r.total_error).sum::<f64>() / f.norm();
        if diff.norm() < 10.0 * noise {
            return Err(Error::Invariant {
                name: "mu difference".into(),
                detail: format!("log difference {:.3e} below integration noise {noise:.3e}", diff.norm()),
            });
        }
        diff *= eps / (2.0 * MU_STEP);
        Some(diff)
    } else {
        None
    };
    Ok(EnergyShift {
        log_derivative,
        exp_switch,
        exact,
    })
}

/// One line of a switching sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub ratio_error: f64,
    pub shift: EnergyShift,
}

/// Ratio error (projective distance) and shifts at each `ε`.
pub fn sweep(setup: &SwitchingSetup, j: usize, x: &CVector, xp: &CVector, eps: &[f64], tol: f64) -> Result<Vec<SweepRow>> {
    let curves = continue_curves(setup, CONTINUATION_SAMPLES)?;
    eps.iter()
        .map(|&e| {
            let r = gml_ratio(setup, &curves, j, e, x, xp, tol)?;
            let shift = energy_shift(setup, &curves, j, e, x, xp, tol)?;
            Ok(SweepRow {
                eps: e,
                ratio_error: r.projective_distance,
                shift,
            })
        })
        .collect()
}

/// CSV `epsilon,ratio_error,shift_logderiv,shift_expswitch,shift_exact`.
/// Shifts of skew-Hermitian families are imaginary; their imaginary parts
/// are written. A missing exp-switch value is left empty.
pub fn write_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["epsilon", "ratio_error", "shift_logderiv", "shift_expswitch", "shift_exact"]).map_err(io)?;
    for r in rows {
        w.write_record([
            sig12(r.eps),
            sig12(r.ratio_error),
            sig12(r.shift.log_derivative.im),
            r.shift.exp_switch.map_or(String::new(), |z| sig12(z.im)),
            sig12(r.shift.exact.im),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

/// `A₀ = i·diag(0, 0, 1, 2)` with a small Hermitian coupling `V = i·H_V`; the
/// degenerate eigenvalue `0` splits into two curves.
pub fn degenerate_example(switch: Switch) -> SwitchingSetup {
    let a0 = matrixkit::diag(&[C64::from(0.0), C64::from(0.0), C64::i(), C64::new(0.0, 2.0)]);
    let hv = matrixkit::from_real_rows(&[
        &[0.10, 0.05, 0.04, 0.02],
        &[0.05, -0.08, 0.03, 0.05],
        &[0.04, 0.03, 0.06, 0.04],
        &[0.02, 0.05, 0.04, -0.05],
    ]);
    SwitchingSetup::new(a0, hv * C64::i(), switch).expect("example is skew-Hermitian")
}
