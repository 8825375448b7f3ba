//! Ready-made `(A, λ, P)` triples.
//!
//! Infinite-dimensional examples are truncated. Each entry reports a
//! `floor_epsilon`: below it the truncation's artificial gap dominates and
//! the finite matrix no longer mimics the gapless original.

use super::{
    similarity_family_with, similarity_projection_with, Associatedness, Rotator, JordanStructure, OperatorFamily, ProjectionFamily,
    Smoothness, SpectralCurve,
};
use crate::error::{Error, Result};
use crate::matrixkit::{self, c, diag, shift_matrix, CMatrix, C64, ONE, ZERO};
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

pub type Params = BTreeMap<String, f64>;

/// Behaviour the theory predicts for the deviation as ε ↓ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "rate", rename_all = "snake_case")]
pub enum Expectation {
    /// `O(ε)`.
    Linear,
    /// `o(1)` without a rate.
    Vanishing,
    /// `O(ε^r)`.
    Rate(f64),
    /// Identically zero deviation.
    Trivial,
    /// Deviation does not decay.
    NonAdiabatic,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub min: f64,
    pub max: f64,
    pub integer: bool,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleSpec {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: &'static [ParamSpec],
    /// Which deviation the example is meant to be measured with.
    pub metric: &'static str,
    pub truncation: &'static str,
    pub floor_epsilon: &'static str,
}

const fn p(name: &'static str, default: f64, min: f64, max: f64, integer: bool, doc: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        default,
        min,
        max,
        integer,
        doc,
    }
}

pub static REGISTRY: &[ExampleSpec] = &[
    ExampleSpec {
        name: "gap_uniform",
        summary: "block diag(λ(t)+αN, λ(t)+i·gap·j) rotated by e^{Ct}; uniform gap equal to `gap`",
        params: &[
            p("d", 6.0, 3.0, 256.0, true, "dimension"),
            p("gap", 1.0, 0.05, 10.0, false, "separation between λ(t) and the rest of the spectrum"),
            p("rotate", 1.0, 0.0, 10.0, false, "strength of the skew coupling C; 0 gives P' = 0"),
            p("m0", 1.0, 1.0, 2.0, true, "nilpotent order of the tracked block (2 adds a Jordan block, α = 0.5)"),
            p("damping", 0.0, 0.0, 10.0, false, "γ: shifts the whole spectrum by -γ"),
            p("omega", 0.3, 0.0, 10.0, false, "λ(t) = -γ + i·omega·t (minus 0.3 when m0 = 2)"),
        ],
        metric: "sup_norm",
        truncation: "none",
        floor_epsilon: "1e-5 (gapped)",
    },
    ExampleSpec {
        name: "gap_crossing",
        summary: "diag(i·speed·(t-1/2), -i·speed·(t-1/2)) rotated by e^{Ct}; one crossing at t = 1/2",
        params: &[
            p("speed", 2.0, 0.1, 20.0, false, "crossing speed"),
            p("rotate", 1.0, 0.0, 10.0, false, "strength of the skew coupling C"),
        ],
        metric: "sup_norm",
        truncation: "none",
        floor_epsilon: "1e-5 (gapped except at the crossing)",
    },
    ExampleSpec {
        name: "nogap_dense_rationals",
        summary: "first block -t + (t²/2)N, second block diag of the first D rationals in [-1,0] (Calkin–Wilf order), rotated by the right shift",
        params: &[
            p("d", 2.0, 1.0, 8.0, true, "size of the Jordan block, also m0"),
            p("D", 64.0, 4.0, 248.0, true, "number of rationals kept"),
        ],
        metric: "projected",
        truncation: "rationals beyond the first D dropped; spacing ~1/D becomes an artificial gap",
        floor_epsilon: "1/D",
    },
    ExampleSpec {
        name: "nogap_shift",
        summary: "first block λ(t)+0.5N with λ(t) = -1+e^{iϑ(t)}, second block S₊-1 (D×D), rotated by the d/(d+1) coupling",
        params: &[
            p("d", 2.0, 1.0, 8.0, true, "size of the Jordan block, also m0"),
            p("D", 64.0, 4.0, 248.0, true, "size of the truncated shift"),
        ],
        metric: "projected",
        truncation: "σ(S₊-1) collapses from the closed unit disc around -1 to the point -1; only the resolvent estimate survives",
        floor_epsilon: "1/D",
    },
    ExampleSpec {
        name: "rotation_counterexample",
        summary: "diag(λ(t), 0) rotated by e^{2πJt}, λ(t) = slope·t; not (M,0)-stable, adiabaticity fails",
        params: &[p("slope", 1.0, 0.1, 5.0, false, "λ(t) = slope·t")],
        metric: "sup_norm",
        truncation: "none",
        floor_epsilon: "1e-2 (deviation grows like e^{slope/(2ε)}; smaller ε overflows)",
    },
    ExampleSpec {
        name: "multiplication_diag",
        summary: "diag(i·f₀(x_k+t)) on a D-point grid of [-1,1), P(t) the indicator of {f_t = 0}; P is not differentiable",
        params: &[
            p("D", 64.0, 8.0, 256.0, true, "grid size, a multiple of 4"),
            p("amplitude", 1.0, 0.01, 10.0, false, "max |f₀|"),
        ],
        metric: "projected",
        truncation: "L^p(R) replaced by point evaluations on a grid",
        floor_epsilon: "1e-5",
    },
    ExampleSpec {
        name: "hölder_density",
        summary: "diag(0, i·sign(k)(|k|/D)^{1/α}) for k = ±1..±D, rotated so the spectral measure of P'P near 0 is α-Hölder",
        params: &[
            p("alpha", 1.0, 0.1, 4.0, false, "Hölder exponent α"),
            p("D", 64.0, 4.0, 127.0, true, "eigenvalues per half axis; dimension 2D+1"),
            p("rotate", 1.0, 0.0, 10.0, false, "‖C e₀‖"),
        ],
        metric: "projected",
        truncation: "continuous spectrum near 0 replaced by points (1/D)^{1/α} apart",
        floor_epsilon: "(1/D)^{1/α}",
    },
];

/// A registry triple plus the metadata a sweep needs.
#[derive(Clone, Debug)]
pub struct Example {
    pub name: String,
    pub params: Params,
    pub family: OperatorFamily,
    pub curve: SpectralCurve,
    pub projection: ProjectionFamily,
    /// Upper bound for the nilpotent order of `A(t) - λ(t)` on `ran P(t)`.
    pub m0: usize,
    /// Constructed uniform separation of `λ(t)` from the rest, if any.
    pub gap: Option<f64>,
    pub floor_epsilon: f64,
    pub expectation: Expectation,
    /// `true` when the example is measured with `‖(U−V₀)P(0)‖`.
    pub projected: bool,
    /// Spectral shift `γ` such that `‖U_ε(t,s)‖ ≤ M e^{-γ(t-s)/ε}`.
    pub damping: f64,
    /// `c` in `‖(A(t+h)−A(t−h))/2h − A'(t)‖ ≤ c·h²`.
    pub derivative_constant: f64,
}

pub fn manifest() -> &'static [ExampleSpec] {
    REGISTRY
}

pub fn manifest_json() -> String {
    serde_json::to_string_pretty(REGISTRY).expect("manifest serializes") + "\n"
}

fn resolve(spec: &ExampleSpec, given: &Params) -> Result<Params> {
    for key in given.keys() {
        if !spec.params.iter().any(|p| p.name == key) {
            return Err(Error::InvalidParam {
                name: key.clone(),
                reason: format!("not a parameter of {}", spec.name),
            });
        }
    }
    let mut out = Params::new();
    for ps in spec.params {
        let v = given.get(ps.name).copied().unwrap_or(ps.default);
        if !v.is_finite() || v < ps.min || v > ps.max {
            return Err(Error::InvalidParam {
                name: ps.name.into(),
                reason: format!("{v} outside [{}, {}]", ps.min, ps.max),
            });
        }
        if ps.integer && v.fract() != 0.0 {
            return Err(Error::InvalidParam {
                name: ps.name.into(),
                reason: format!("{v} is not an integer"),
            });
        }
        out.insert(ps.name.into(), v);
    }
    Ok(out)
}

/// Builds the named example. Unknown names and out-of-range or unknown
/// parameters are errors.
pub fn example(name: &str, params: &Params) -> Result<Example> {
    let spec = REGISTRY
        .iter()
        .find(|s| s.name == name || (name == "holder_density" && s.name == "hölder_density"))
        .ok_or_else(|| Error::UnknownExample(name.into()))?;
    let prm = resolve(spec, params)?;
    let get = |k: &str| prm[k];
    let mut ex = match spec.name {
        "gap_uniform" => gap_uniform(
            get("d") as usize,
            get("gap"),
            get("rotate"),
            get("m0") as usize,
            get("damping"),
            get("omega"),
        )?,
        "gap_crossing" => gap_crossing(get("speed"), get("rotate"))?,
        "nogap_dense_rationals" => nogap_dense_rationals(get("d") as usize, get("D") as usize)?,
        "nogap_shift" => nogap_shift(get("d") as usize, get("D") as usize)?,
        "rotation_counterexample" => rotation_counterexample(get("slope"))?,
        "multiplication_diag" => multiplication_diag(get("D") as usize, get("amplitude"))?,
        "hölder_density" => holder_density(get("alpha"), get("D") as usize, get("rotate"))?,
        _ => unreachable!("registry entry without constructor"),
    };
    ex.name = spec.name.into();
    ex.params = prm;
    ex.family.name = spec.name.into();
    Ok(ex)
}

fn block_diag(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = CMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

/// Indicator of the first `k` coordinates in dimension `d`.
fn leading_indicator(d: usize, k: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| if i == j && i < k { ONE } else { ZERO })
}

/// Real skew coupling of neighbouring coordinates, `s·(S − Sᵀ)`.
fn skew_chain(d: usize, s: f64) -> CMatrix {
    let sh = shift_matrix(d);
    (&sh - sh.transpose()) * c(s, 0.0)
}

fn finish(
    a0: OperatorFamily,
    p0: CMatrix,
    gen: &CMatrix,
    curve: SpectralCurve,
    kind: Associatedness,
) -> Result<(OperatorFamily, SpectralCurve, ProjectionFamily)> {
    let rot = Rotator::new(gen);
    let a = similarity_family_with(&a0, &rot)?;
    let p = similarity_projection_with(&ProjectionFamily::constant(p0).with_kind(kind), &rot)?.with_kind(kind);
    Ok((a, curve, p))
}

fn base(
    (family, curve, projection): (OperatorFamily, SpectralCurve, ProjectionFamily),
    m0: usize,
    gap: Option<f64>,
    floor_epsilon: f64,
    expectation: Expectation,
    projected: bool,
) -> Example {
    Example {
        name: String::new(),
        params: Params::new(),
        family,
        curve,
        projection,
        m0,
        gap,
        floor_epsilon,
        expectation,
        projected,
        damping: 0.0,
        derivative_constant: 100.0,
    }
}

fn gap_uniform(d: usize, gap: f64, rotate: f64, m0: usize, damping: f64, omega: f64) -> Result<Example> {
    if d <= m0 {
        return Err(Error::InvalidParam {
            name: "d".into(),
            reason: "must exceed m0".into(),
        });
    }
    let re = -damping - if m0 == 2 { 0.3 } else { 0.0 };
    let alpha = if m0 == 2 { 0.5 } else { 0.0 };
    let lambda = move |t: f64| c(re, omega * t);
    let n_block = shift_matrix(m0);
    let nb = n_block.clone();
    let a0 = OperatorFamily::new("gap_uniform", d, move |t| {
        let l = lambda(t);
        let first = CMatrix::identity(m0, m0) * l + &nb * c(alpha, 0.0);
        let rest: Vec<C64> = (1..=d - m0).map(|j| l + c(0.0, gap * j as f64)).collect();
        block_diag(&first, &diag(&rest))
    })
    .with_derivative(move |_| CMatrix::identity(d, d) * c(0.0, omega));
    let curve = SpectralCurve::new(lambda, |_| PI, gap / 2.0);
    let gen = skew_chain(d, rotate);
    let kind = Associatedness::WeaklyAssociated { order: m0 };
    let mut triple = finish(a0, leading_indicator(d, m0), &gen, curve, kind)?;
    triple.0.structure = Some(JordanStructure {
        lambda: Arc::new(lambda),
        alpha: Arc::new(move |_| alpha),
        n: n_block,
    });
    let expectation = if rotate == 0.0 {
        Expectation::Trivial
    } else {
        Expectation::Linear
    };
    let mut ex = base(triple, m0, Some(gap), 1e-5, expectation, false);
    ex.damping = damping;
    Ok(ex)
}

fn gap_crossing(speed: f64, rotate: f64) -> Result<Example> {
    let lambda = move |t: f64| c(0.0, speed * (t - 0.5));
    let a0 = OperatorFamily::new("gap_crossing", 2, move |t| diag(&[lambda(t), -lambda(t)]))
        .with_derivative(move |_| diag(&[c(0.0, speed), c(0.0, -speed)]));
    let curve = SpectralCurve::new(lambda, |_| PI, 0.5);
    let gen = skew_chain(2, rotate);
    let triple = finish(a0, leading_indicator(2, 1), &gen, curve, Associatedness::Associated)?;
    Ok(base(triple, 1, None, 1e-5, Expectation::Vanishing, false))
}

/// First `count` terms of the Calkin–Wilf sequence as `(num, den)`.
pub(crate) fn calkin_wilf(count: usize) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(count);
    let (mut a, mut b) = (1u64, 1u64);
    for _ in 0..count {
        out.push((a, b));
        // q' = 1 / (2⌊q⌋ − q + 1) with q = a/b
        let fl = a / b;
        let (na, nb) = (b, 2 * fl * b + b - a);
        a = na;
        b = nb;
    }
    out
}

/// The first `d` rationals in `[-1, 0]`: 0, −1, then `−q/(1+q)` for `q` in
/// Calkin–Wilf order.
pub fn rational_enumeration(d: usize) -> Vec<f64> {
    let mut out = vec![0.0, -1.0];
    out.extend(calkin_wilf(d.saturating_sub(2)).into_iter().map(|(a, b)| -(a as f64) / ((a + b) as f64)));
    out.truncate(d);
    out
}

fn right_shift(d: usize) -> CMatrix {
    shift_matrix(d).transpose()
}

fn nogap_dense_rationals(d: usize, big_d: usize) -> Result<Example> {
    let dim = d + big_d;
    if dim > 256 {
        return Err(Error::InvalidParam {
            name: "D".into(),
            reason: "d + D must not exceed 256".into(),
        });
    }
    let rats: Vec<C64> = rational_enumeration(big_d).into_iter().map(|x| c(x, 0.0)).collect();
    let n = shift_matrix(d);
    let (n1, n2) = (n.clone(), n.clone());
    let second = diag(&rats);
    let zeros = CMatrix::zeros(big_d, big_d);
    let a0 = OperatorFamily::new("nogap_dense_rationals", dim, move |t| {
        let first = CMatrix::identity(d, d) * c(-t, 0.0) + &n1 * c(t * t / 2.0, 0.0);
        block_diag(&first, &second)
    })
    .with_derivative(move |t| {
        let first = -CMatrix::identity(d, d) + &n2 * c(t, 0.0);
        block_diag(&first, &zeros)
    })
    .with_smoothness(Smoothness::W1Inf)
    .with_truncation(format!("first {big_d} rationals of [-1,0] kept"));
    let curve = SpectralCurve::new(|t| c(-t, 0.0), |_| PI / 2.0, 1.0);
    let gen = right_shift(dim);
    let kind = Associatedness::WeaklyAssociated { order: d };
    let mut triple = finish(a0, leading_indicator(dim, d), &gen, curve, kind)?;
    triple.0.structure = Some(JordanStructure {
        lambda: Arc::new(|t| c(-t, 0.0)),
        alpha: Arc::new(|t| t * t / 2.0),
        n,
    });
    triple.0.truncation = Some(format!("first {big_d} rationals of [-1,0] kept"));
    Ok(base(triple, d, None, 1.0 / big_d as f64, Expectation::Vanishing, true))
}

fn nogap_shift(d: usize, big_d: usize) -> Result<Example> {
    let dim = d + big_d;
    if dim > 256 {
        return Err(Error::InvalidParam {
            name: "D".into(),
            reason: "d + D must not exceed 256".into(),
        });
    }
    let vartheta = |t: f64| PI / 2.0 + PI / 4.0 * t;
    let lambda = move |t: f64| c(-1.0, 0.0) + C64::from_polar(1.0, vartheta(t));
    let alpha = 0.5;
    let n = shift_matrix(d);
    let n1 = n.clone();
    let second = right_shift(big_d) - CMatrix::identity(big_d, big_d);
    let zeros = CMatrix::zeros(big_d, big_d);
    let a0 = OperatorFamily::new("nogap_shift", dim, move |t| {
        let first = CMatrix::identity(d, d) * lambda(t) + &n1 * c(alpha, 0.0);
        block_diag(&first, &second)
    })
    .with_derivative(move |t| {
        let dl = C64::from_polar(PI / 4.0, vartheta(t) + PI / 2.0);
        block_diag(&(CMatrix::identity(d, d) * dl), &zeros)
    })
    .with_truncation(format!("shift truncated to {big_d}x{big_d}"));
    let curve = SpectralCurve::new(lambda, vartheta, 1.0);
    let mut gen = CMatrix::zeros(dim, dim);
    gen[(d - 1, d)] = ONE;
    gen[(d, d - 1)] = -ONE;
    let kind = Associatedness::WeaklyAssociated { order: d };
    let mut triple = finish(a0, leading_indicator(dim, d), &gen, curve, kind)?;
    triple.0.structure = Some(JordanStructure {
        lambda: Arc::new(lambda),
        alpha: Arc::new(move |_| alpha),
        n,
    });
    triple.0.truncation = Some(format!("shift truncated to {big_d}x{big_d}"));
    Ok(base(triple, d, None, 1.0 / big_d as f64, Expectation::Vanishing, true))
}

fn rotation_counterexample(slope: f64) -> Result<Example> {
    let a0 = OperatorFamily::new("rotation_counterexample", 2, move |t| diag(&[c(slope * t, 0.0), ZERO]))
        .with_derivative(move |_| diag(&[c(slope, 0.0), ZERO]));
    let curve = SpectralCurve::new(move |t| c(slope * t, 0.0), |_| 0.0, 1.0);
    let gen = matrixkit::from_real_rows(&[&[0.0, 2.0 * PI], &[-2.0 * PI, 0.0]]);
    let triple = finish(a0, leading_indicator(2, 1), &gen, curve, Associatedness::Associated)?;
    let mut ex = base(triple, 1, None, 1e-2, Expectation::NonAdiabatic, false);
    // third derivative carries (4π)³
    ex.derivative_constant = 400.0 * slope;
    Ok(ex)
}

/// Grid point `x_k = −1 + (k + ½)·2/D`.
fn grid_point(k: usize, big_d: usize) -> f64 {
    -1.0 + (k as f64 + 0.5) * 2.0 / big_d as f64
}

/// `f₀(x) = amplitude·(16 x (1/2 − x))²` on `(0, 1/2)`, zero elsewhere.
fn bump(x: f64, amplitude: f64) -> (f64, f64) {
    if x <= 0.0 || x >= 0.5 {
        return (0.0, 0.0);
    }
    let g = 16.0 * x * (0.5 - x);
    let dg = 16.0 * (0.5 - 2.0 * x);
    (amplitude * g * g, amplitude * 2.0 * g * dg)
}

fn multiplication_diag(big_d: usize, amplitude: f64) -> Result<Example> {
    if big_d % 4 != 0 {
        return Err(Error::InvalidParam {
            name: "D".into(),
            reason: "must be a multiple of 4 so that rank P(t) is constant".into(),
        });
    }
    let a = OperatorFamily::new("multiplication_diag", big_d, move |t| {
        let e: Vec<C64> = (0..big_d).map(|k| c(0.0, bump(grid_point(k, big_d) + t, amplitude).0)).collect();
        diag(&e)
    })
    .with_derivative(move |t| {
        let e: Vec<C64> = (0..big_d).map(|k| c(0.0, bump(grid_point(k, big_d) + t, amplitude).1)).collect();
        diag(&e)
    })
    .with_smoothness(Smoothness::C1)
    .with_truncation(format!("L^p(R) sampled on {big_d} grid points"));
    let zero = CMatrix::zeros(big_d, big_d);
    let z2 = zero.clone();
    let p = ProjectionFamily::new(big_d, big_d - big_d / 4, move |t| {
        let e: Vec<C64> = (0..big_d)
            .map(|k| if bump(grid_point(k, big_d) + t, 1.0).0 == 0.0 { ONE } else { ZERO })
            .collect();
        diag(&e)
    })
    // P is piecewise constant: its derivative vanishes off the jump set
    .with_derivative(move |_| zero.clone())
    .with_second_derivative(move |_| z2.clone())
    .with_kind(Associatedness::WeaklyAssociated { order: 1 });
    let curve = SpectralCurve::constant(ZERO, PI, 1.0);
    let mut ex = base((a, curve, p), 1, None, 1e-5, Expectation::NonAdiabatic, true);
    // |f₀'''| ≤ 1536·amplitude
    ex.derivative_constant = 400.0 * amplitude;
    Ok(ex)
}

fn holder_density(alpha: f64, big_d: usize, rotate: f64) -> Result<Example> {
    let dim = 2 * big_d + 1;
    let mut eig = vec![ZERO; dim];
    let mut weights = vec![0.0; dim];
    for k in 1..=big_d {
        let mag = (k as f64 / big_d as f64).powf(1.0 / alpha);
        let w = (k as f64 / big_d as f64).sqrt();
        eig[2 * k - 1] = c(0.0, mag);
        eig[2 * k] = c(0.0, -mag);
        weights[2 * k - 1] = w;
        weights[2 * k] = w;
    }
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut gen = CMatrix::zeros(dim, dim);
    for k in 1..dim {
        let w = rotate * weights[k] / norm;
        gen[(k, 0)] = c(w, 0.0);
        gen[(0, k)] = c(-w, 0.0);
    }
    let a0 = OperatorFamily::constant("hölder_density", diag(&eig))
        .with_truncation(format!("{big_d} eigenvalues per half axis"));
    let curve = SpectralCurve::constant(ZERO, PI, 1.0);
    let triple = finish(a0, leading_indicator(dim, 1), &gen, curve, Associatedness::Associated)?;
    let spacing = (1.0 / big_d as f64).powf(1.0 / alpha);
    Ok(base(triple, 1, None, spacing, Expectation::Rate(alpha / (2.0 * (1.0 + alpha))), true))
}
