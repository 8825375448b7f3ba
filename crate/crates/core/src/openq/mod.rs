//! Lindblad generators on `d_h × d_h` density matrices, vectorised by column
//! stacking: `X ρ Y` becomes `(Yᵀ ⊗ X) vec(ρ)`.
//!
//! In finite dimension every Lindblad form generates a quantum dynamical
//! semigroup, so the infinite-dimensional non-existence phenomena on trace
//! class have no counterpart here and are not modelled.

mod spec;

pub use spec::{LindbladSpec, MatrixJson};

use crate::error::{Error, Result};
use crate::matrixkit::{self, adjoint, commutator, expm, identity, kron, mul, norm2, numerical_rank, trace, CMatrix, C64, I, ONE, RANK_TOL};
use crate::opfamily::{similarity_family, similarity_projection, OperatorFamily, ProjectionFamily};
use crate::util::try_par_map;
use nalgebra::DVector;

/// Maximum number of jump operators.
pub const MAX_JUMPS: usize = 64;

/// Column-stacking `vec(ρ)`.
pub fn vectorize(rho: &CMatrix) -> DVector<C64> {
    DVector::from_column_slice(rho.as_slice())
}

pub fn unvectorize(v: &DVector<C64>, d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, v.as_slice())
}

/// `X ρ Y ↦ (Yᵀ ⊗ X)`.
pub fn sandwich(x: &CMatrix, y: &CMatrix) -> CMatrix {
    kron(&y.transpose(), x)
}

/// `ρ ↦ −i[H, ρ]`.
pub fn commutator_superop(h: &CMatrix) -> CMatrix {
    let id = identity(h.nrows());
    (sandwich(h, &id) - sandwich(&id, h)) * -I
}

/// `A(ρ) = −i[H,ρ] + Σ B ρ B* − ½{B*B, ρ}` applied directly, without vectorising.
pub fn apply_lindblad(spec: &LindbladSpec, rho: &CMatrix) -> CMatrix {
    let mut out = commutator(&spec.h, rho) * -I;
    for b in &spec.jumps {
        let bb = mul(&adjoint(b), b);
        out += mul(&mul(b, rho), &adjoint(b)) - (mul(&bb, rho) + mul(rho, &bb)) * C64::from(0.5);
    }
    out
}

/// The generator matrix of `spec` with no invariant checks.
pub fn lindblad_matrix(spec: &LindbladSpec) -> CMatrix {
    let d = spec.dim;
    let id = identity(d);
    let mut a = commutator_superop(&spec.h);
    for b in &spec.jumps {
        let bb = mul(&adjoint(b), b);
        a += sandwich(b, &adjoint(b)) - (sandwich(&bb, &id) + sandwich(&id, &bb)) * C64::from(0.5);
    }
    a
}

/// A vectorised generator together with the spec it came from.
#[derive(Debug, Clone)]
pub struct Superoperator {
    pub matrix: CMatrix,
    pub source: LindbladSpec,
    pub checks: SuperopChecks,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SuperopChecks {
    /// `‖vec(1)* A‖`: the trace functional on `ran A`.
    pub trace_defect: f64,
    /// Smallest Choi eigenvalue of `e^{As}` at `s = 0.1` and `s = 1`.
    pub choi_min: [f64; 2],
    /// Largest real part in the spectrum of `A`.
    pub max_re_eigenvalue: f64,
}

/// Choi matrix `Σ E_ij ⊗ Φ(E_ij)` of a vectorised map `Φ`.
pub fn choi_matrix(phi: &CMatrix, d: usize) -> CMatrix {
    CMatrix::from_fn(d * d, d * d, |r, c| {
        let (i, a) = (r / d, r % d);
        let (j, b) = (c / d, c % d);
        phi[(a + b * d, i + j * d)]
    })
}

pub fn min_hermitian_eigenvalue(m: &CMatrix) -> f64 {
    let herm = (m + m.adjoint()) * C64::from(0.5);
    herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Builds and verifies the generator: trace preservation to `1e-10`, Choi
/// matrices of `e^{As}` PSD to `−1e-9`, spectrum in `Re z ≤ 1e-9`.
pub fn build_lindblad(spec: &LindbladSpec) -> Result<Superoperator> {
    spec.validate()?;
    let d = spec.dim;
    let a = lindblad_matrix(spec);
    let tr = vectorize(&identity(d));
    let trace_defect = (tr.adjoint() * &a).norm();
    let mut choi_min = [0.0; 2];
    for (k, s) in [0.1, 1.0].into_iter().enumerate() {
        let phi = expm(&(&a * C64::from(s)))?;
        choi_min[k] = min_hermitian_eigenvalue(&choi_matrix(&phi, d));
    }
    let max_re_eigenvalue = matrixkit::eigenvalues(&a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let checks = SuperopChecks {
        trace_defect,
        choi_min,
        max_re_eigenvalue,
    };
    let scale = norm2(&a).max(1.0);
    if trace_defect > 1e-10 * scale {
        return Err(invariant("trace preservation", format!("|tr o A| = {trace_defect:.3e}")));
    }
    if choi_min.iter().any(|&m| m < -1e-9) {
        return Err(invariant("complete positivity", format!("Choi eigenvalues {choi_min:?}")));
    }
    if max_re_eigenvalue > 1e-9 * scale {
        return Err(invariant("contraction spectrum", format!("max Re = {max_re_eigenvalue:.3e}")));
    }
    Ok(Superoperator {
        matrix: a,
        source: spec.clone(),
        checks,
    })
}

fn invariant(name: &str, detail: String) -> Error {
    Error::Invariant {
        name: name.into(),
        detail,
    }
}

/// Eigenprojections of a Hermitian matrix, one per eigenvalue cluster, in
/// increasing order of the eigenvalue.
///
/// Eigenvalues closer than `1e-8·max(1, ‖H‖)` are merged; a separation
/// between that and `1e-6·max(1, ‖H‖)` is reported as ambiguous.
pub fn eigenprojections(h: &CMatrix) -> Result<Vec<(f64, CMatrix)>> {
    matrixkit::check_square(h)?;
    let herm = matrixkit::hermitian_defect(h);
    if herm > 1e-12 * norm2(h).max(1.0) {
        return Err(Error::NotHermitian(herm));
    }
    let d = h.nrows();
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = norm2(h).max(1.0);
    let mut out: Vec<(f64, CMatrix)> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    let flush = |members: &mut Vec<usize>, out: &mut Vec<(f64, CMatrix)>| {
        if members.is_empty() {
            return;
        }
        let cols: Vec<_> = members.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
        let v = CMatrix::from_columns(&cols);
        let mu = members.iter().map(|&k| eig.eigenvalues[k]).sum::<f64>() / members.len() as f64;
        out.push((mu, mul(&v, &v.adjoint())));
        members.clear();
    };
    for (pos, &k) in order.iter().enumerate() {
        if pos > 0 {
            let prev = eig.eigenvalues[order[pos - 1]];
            let gap = eig.eigenvalues[k] - prev;
            if gap > 1e-8 * scale {
                if gap <= 1e-6 * scale {
                    return Err(Error::ClusterAmbiguity {
                        lambda: C64::from(prev),
                        other: C64::from(eig.eigenvalues[k]),
                    });
                }
                flush(&mut members, &mut out);
            }
        }
        members.push(k);
    }
    flush(&mut members, &mut out);
    Ok(out)
}

/// `ρ ↦ Σ_μ Q_μ ρ Q_μ` as a superoperator matrix.
pub fn rage_projection(h: &CMatrix) -> Result<CMatrix> {
    let d = h.nrows();
    let mut p = CMatrix::zeros(d * d, d * d);
    for (_, q) in eigenprojections(h)? {
        p += sandwich(&q, &q);
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct KernelReport {
    pub dim_ker_a: usize,
    pub dim_ker_z0: usize,
    /// Every null vector `ρ` of `A` satisfies `‖[H,ρ]‖, ‖[ρ,B_j*]‖ ≤ 1e-8`.
    pub inclusion: bool,
    pub max_commutator_defect: f64,
    pub kernels_equal: bool,
    /// `‖[H,B_j]‖` maximised over `j`.
    pub max_hb_commutator: f64,
    /// Every `B_j` is a function of `H` (lies in the double commutant).
    pub dephasing: bool,
    /// Finite-dimensional form of the kernel criterion: dephasing exactly
    /// when `ker A = ker Z₀`.
    pub consistent_with_criterion: bool,
}

fn kernel_dim(a: &CMatrix) -> Result<usize> {
    let s = matrixkit::singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = RANK_TOL * smax;
    for &v in &s {
        if v > threshold / 10.0 && v <= threshold * 10.0 && v > 0.0 {
            return Err(Error::RankAmbiguity { value: v, threshold });
        }
    }
    Ok(a.ncols() - numerical_rank(a, RANK_TOL))
}

/// `‖B − Σ_μ (tr(Q_μ B)/rk Q_μ) Q_μ‖`: distance of `B` from the functions of `H`.
fn double_commutant_defect(b: &CMatrix, projections: &[(f64, CMatrix)]) -> f64 {
    let mut f = CMatrix::zeros(b.nrows(), b.ncols());
    for (_, q) in projections {
        let rank = trace(q).re.round().max(1.0);
        f += q * (trace(&mul(q, b)) / rank);
    }
    norm2(&(b - f))
}

pub fn kernel_diagnostics(s: &Superoperator) -> Result<KernelReport> {
    let spec = &s.source;
    let d = spec.dim;
    let z0 = commutator_superop(&spec.h);
    let dim_ker_a = kernel_dim(&s.matrix)?;
    let dim_ker_z0 = kernel_dim(&z0)?;
    let basis = matrixkit::kernel_basis(&s.matrix, RANK_TOL);
    let scale = norm2(&spec.h).max(1.0) + spec.jumps.iter().map(norm2).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for k in 0..basis.ncols() {
        let rho = unvectorize(&basis.column(k).into_owned(), d);
        worst = worst.max(norm2(&commutator(&spec.h, &rho)));
        for b in &spec.jumps {
            worst = worst.max(norm2(&commutator(&rho, &adjoint(b))));
        }
    }
    let inclusion = worst <= 1e-8 * scale;
    let projections = eigenprojections(&spec.h)?;
    let max_hb_commutator = spec.jumps.iter().map(|b| norm2(&commutator(&spec.h, b))).fold(0.0, f64::max);
    let dephasing = spec
        .jumps
        .iter()
        .all(|b| double_commutant_defect(b, &projections) <= 1e-8 * scale);
    let kernels_equal = inclusion && dim_ker_a == dim_ker_z0;
    Ok(KernelReport {
        dim_ker_a,
        dim_ker_z0,
        inclusion,
        max_commutator_defect: worst,
        kernels_equal,
        max_hb_commutator,
        dephasing,
        consistent_with_criterion: dephasing == kernels_equal,
    })
}

/// Schatten `p`-norm of `ρ` (`p = ∞` gives the operator norm).
pub fn schatten_norm(rho: &CMatrix, p: f64) -> f64 {
    let s = matrixkit::singular_values(rho);
    if p.is_infinite() {
        return s.first().copied().unwrap_or(0.0);
    }
    s.iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Generator family `t ↦ A(t)` from per-`t` specs. Specs are validated (and
/// the generator verified) on `probe`; the family itself samples without
/// the checks and uses central differences for `A'`.
pub fn lindblad_family(
    name: &str,
    dim: usize,
    specs: impl Fn(f64) -> LindbladSpec + Send + Sync + 'static,
    probe: &[f64],
) -> Result<OperatorFamily> {
    try_par_map(probe, |&t| {
        let s = specs(t);
        if s.dim != dim {
            return Err(Error::Dimension(format!("spec at t={t} has dimension {}, expected {dim}", s.dim)));
        }
        build_lindblad(&s).map(|_| ())
    })?;
    Ok(OperatorFamily::new(name, dim * dim, move |t| lindblad_matrix(&specs(t))))
}

/// `H(t) = R(t)⁻¹ H R(t)`, `B_j(t) = R(t)⁻¹ B_j R(t)` with `R(t) = e^{iCt}`.
///
/// On the vectorised space this is `A(t) = e^{−𝒢t} A e^{𝒢t}` with
/// `𝒢ρ = i[C, ρ]`, so the family and the RAGE projection family come with
/// analytic derivatives.
pub fn rotated_lindblad(spec: &LindbladSpec, c: &CMatrix) -> Result<(OperatorFamily, ProjectionFamily)> {
    let herm = matrixkit::hermitian_defect(c);
    if herm > 1e-12 * norm2(c).max(1.0) {
        return Err(Error::NotHermitian(herm));
    }
    let s = build_lindblad(spec)?;
    let gen = commutator_superop(&(-c));
    let a0 = OperatorFamily::constant("lindblad_rotated", s.matrix);
    let p0 = rage_projection(&spec.h)?;
    let family = similarity_family(&a0, &gen)?;
    let proj = similarity_projection(&ProjectionFamily::constant(p0), &gen)?;
    Ok((family, proj))
}

/// The two-level dephasing generator: `H = diag(0, 1)`, `B = √γ diag(1, −1)`.
pub fn two_level_dephasing(gamma: f64) -> LindbladSpec {
    let s = gamma.sqrt();
    LindbladSpec::new(
        matrixkit::diag(&[C64::from(0.0), ONE]),
        vec![matrixkit::diag(&[C64::from(s), C64::from(-s)])],
    )
}

/// Finite version of the weakly dephasing but non-dephasing construction:
/// `H = diag(points) ⊕ diag(band)`, `φ` the normalised all-ones vector of
/// the band block, `ψ = Hφ/‖Hφ‖` and `B = Σ β_μ Q_μ + β ψψ*`.
///
/// `B` is normal, so the spec is weakly dephasing, while `[H, B] ≠ 0`. With
/// pure point spectrum `ker A` is then strictly smaller than `ker Z₀`.
pub fn nondephasing_example(points: &[f64], band: &[f64], beta_mu: &[C64], beta: C64) -> Result<LindbladSpec> {
    if points.len() != beta_mu.len() || band.len() < 2 {
        return Err(Error::InvalidParam {
            name: "band".into(),
            reason: "need one beta per point eigenvalue and at least two band levels".into(),
        });
    }
    let k = points.len();
    let d = k + band.len();
    let diag: Vec<C64> = points.iter().chain(band).map(|&x| C64::from(x)).collect();
    let h = matrixkit::diag(&diag);
    let phi = DVector::from_fn(d, |i, _| if i < k { C64::from(0.0) } else { C64::from(1.0 / (band.len() as f64).sqrt()) });
    let hphi = &h * &phi;
    let norm = hphi.norm();
    if norm == 0.0 {
        return Err(Error::InvalidParam {
            name: "band".into(),
            reason: "H vanishes on the band vector".into(),
        });
    }
    let psi = hphi / C64::from(norm);
    let mut b = &psi * psi.adjoint() * beta;
    for (i, &bm) in beta_mu.iter().enumerate() {
        b[(i, i)] += bm;
    }
    Ok(LindbladSpec::new(h, vec![b]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::{c, diag};

    #[test]
    fn vec_round_trip_matches_direct_formula() {
        let spec = nondephasing_example(&[0.0, 1.0], &[2.0, 2.5, 3.0], &[c(0.3, 0.0), c(0.0, 0.5)], c(0.7, 0.1)).unwrap();
        let a = lindblad_matrix(&spec);
        let rho = CMatrix::from_fn(5, 5, |i, j| c((i * 3 + j) as f64 * 0.1 - 0.7, (i as f64 - j as f64) * 0.2));
        let via_vec = unvectorize(&(&a * vectorize(&rho)), 5);
        assert!(norm2(&(via_vec - apply_lindblad(&spec, &rho))) < 1e-12);
    }

    #[test]
    fn closed_system_spectrum() {
        let spec = LindbladSpec::new(diag(&[c(0.0, 0.0), c(1.0, 0.0), c(3.0, 0.0)]), vec![]);
        let s = build_lindblad(&spec).unwrap();
        let mut eig: Vec<f64> = matrixkit::eigenvalues(&s.matrix).unwrap().iter().map(|z| z.im).collect();
        eig.sort_by(f64::total_cmp);
        let mut expected: Vec<f64> = Vec::new();
        for a in [0.0, 1.0, 3.0] {
            for b in [0.0, 1.0, 3.0] {
                expected.push(-(a - b));
            }
        }
        expected.sort_by(f64::total_cmp);
        for (x, y) in eig.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }
        let r = kernel_diagnostics(&s).unwrap();
        assert!(r.kernels_equal && r.dephasing);
    }

    #[test]
    fn two_level_dephasing_decay() {
        let gamma = 0.4;
        let s = build_lindblad(&two_level_dephasing(gamma)).unwrap();
        let rho = CMatrix::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(0.4, 0.0)]);
        let t = 1.3;
        let out = unvectorize(&(expm(&(&s.matrix * C64::from(t))).unwrap() * vectorize(&rho)), 2);
        // ρ₀₁(t) = ρ₀₁ e^{(i − 2γ) t}
        let expected = rho[(0, 1)] * (C64::new(-2.0 * gamma, 1.0) * t).exp();
        assert!((out[(0, 1)] - expected).norm() < 1e-12);
        assert!((out[(0, 0)] - rho[(0, 0)]).norm() < 1e-12);
        assert!((out[(1, 1)] - rho[(1, 1)]).norm() < 1e-12);
    }

    #[test]
    fn rage_trivial_cases() {
        let p = rage_projection(&diag(&[c(1.0, 0.0), c(2.0, 0.0)])).unwrap();
        let rho = CMatrix::from_fn(2, 2, |i, j| c(1.0 + i as f64, j as f64));
        let out = unvectorize(&(&p * vectorize(&rho)), 2);
        assert_eq!(out[(0, 1)], c(0.0, 0.0));
        assert_eq!(out[(1, 1)], rho[(1, 1)]);
        let p = rage_projection(&identity(3)).unwrap();
        assert!(norm2(&(p - identity(9))) < 1e-12);
    }

    #[test]
    fn near_degenerate_cluster_is_ambiguous() {
        let h = diag(&[c(0.0, 0.0), c(1e-7, 0.0), c(1.0, 0.0)]);
        assert!(matches!(rage_projection(&h), Err(Error::ClusterAmbiguity { .. })));
    }

    #[test]
    fn schatten_norms() {
        let rho = diag(&[c(3.0, 0.0), c(-4.0, 0.0)]);
        assert!((schatten_norm(&rho, 2.0) - 5.0).abs() < 1e-12);
        assert!((schatten_norm(&rho, 1.0) - 7.0).abs() < 1e-12);
        assert!((schatten_norm(&rho, f64::INFINITY) - 4.0).abs() < 1e-12);
    }
}
