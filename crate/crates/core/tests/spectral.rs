use adiabatica::matrixkit::{c, diag, identity, lu, mul, norm2, trace, CMatrix, C64, ONE, ZERO};
use adiabatica::opfamily::{example, Params};
use adiabatica::opfamily::{probe_grid, OperatorFamily, ProjectionFamily, SpectralCurve};
use adiabatica::spectral::*;
use adiabatica::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(kv: &[(&str, f64)]) -> Params {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// `S diag(blocks) S⁻¹` with a well-conditioned random `S`.
fn similar(rng: &mut ChaCha8Rng, core: &CMatrix) -> (CMatrix, CMatrix, CMatrix) {
    let d = core.nrows();
    let s = identity(d) * c(2.0, 0.0) + random_matrix(rng, d) * c(0.3, 0.0);
    let s_inv = lu(&s).unwrap().inverse().unwrap();
    (mul(&mul(&s, core), &s_inv), s, s_inv)
}

#[test]
fn riesz_matches_schur_oracle_on_clustered_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let eig = [c(0.1, 0.0), c(-0.05, 0.08), c(2.0, 1.0), c(-2.0, 0.5), c(1.5, -2.0), c(0.0, 3.0)];
        let (a, _, _) = similar(&mut rng, &diag(&eig));
        let center = ZERO;
        let r = riesz_projection(&a, &Contour::new(center, 0.5)).unwrap();
        let oracle = schur_projection(&a, |z| z.norm() < 0.5).unwrap();
        assert!(norm2(&(&r.p - &oracle)) < 1e-9, "{}", norm2(&(&r.p - &oracle)));
        assert!(norm2(&(mul(&r.p, &r.p) - &r.p)) < 1e-10);
        assert!(norm2(&(mul(&r.p, &a) - mul(&a, &r.p))) < 1e-10);
        assert!((trace(&r.p) - c(2.0, 0.0)).norm() < 1e-6);
    }
}

#[test]
fn jordan_block_of_size_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lam = c(0.5, -0.25);
    let mut core = CMatrix::zeros(8, 8);
    for i in 0..3 {
        core[(i, i)] = lam;
    }
    core[(0, 1)] = ONE;
    core[(1, 2)] = ONE;
    let rest = [c(2.0, 0.0), c(-1.0, 1.0), c(0.0, -2.0), c(3.0, 3.0), c(-2.5, 0.0)];
    for (k, z) in rest.iter().enumerate() {
        core[(3 + k, 3 + k)] = *z;
    }
    let (a, s, s_inv) = similar(&mut rng, &core);
    let indicator = diag(&[ONE, ONE, ONE, ZERO, ZERO, ZERO, ZERO, ZERO]);
    let oracle = mul(&mul(&s, &indicator), &s_inv);
    let w = weakly_associated_projection(&a, lam, 1e-8).unwrap();
    assert_eq!(w.m, 3);
    assert_eq!(w.multiplicity, 3);
    assert!(norm2(&(&w.p - &oracle)) < 1e-9, "{}", norm2(&(&w.p - &oracle)));
}

#[test]
fn dense_rationals_projection_is_first_block() {
    let ex = example("nogap_dense_rationals", &params(&[("D", 16.0)])).unwrap();
    // λ(t) = −t misses every enumerated rational at t = 0.3
    let t = 0.3;
    let w = weakly_associated_projection(&ex.family.at(t), ex.curve.lambda(t), 1e-8).unwrap();
    assert_eq!(w.m, 2);
    assert!(norm2(&(&w.p - ex.projection.at(t))) < 1e-9);
}

#[test]
fn riesz_and_weak_agree_with_distinct_eigenvalue_orthogonality() {
    for m0 in [1.0, 2.0] {
        let ex = example("gap_uniform", &params(&[("m0", m0)])).unwrap();
        for t in [0.0, 0.37, 1.0] {
            let a = ex.family.at(t);
            let lam = ex.curve.lambda(t);
            let w = weakly_associated_projection(&a, lam, 1e-8).unwrap();
            assert_eq!(w.m, m0 as usize);
            let r = riesz_projection(&a, &Contour::around(&a, lam).unwrap()).unwrap();
            assert!(norm2(&(&w.p - &r.p)) < 1e-9);
            assert!(norm2(&(&w.p - ex.projection.at(t))) < 1e-9);
            // the next eigenvalue up the chain
            let other = lam + c(0.0, 1.0);
            let q = weakly_associated_projection(&a, other, 1e-8).unwrap();
            assert!(norm2(&mul(&w.p, &q.p)) < 1e-9);
            assert!(norm2(&mul(&q.p, &w.p)) < 1e-9);
        }
    }
}

#[test]
fn trace_equals_algebraic_multiplicity_on_registry() {
    let names = [
        "gap_uniform",
        "gap_crossing",
        "nogap_dense_rationals",
        "nogap_shift",
        "rotation_counterexample",
        "multiplication_diag",
        "hölder_density",
    ];
    for name in names {
        let prm = match name {
            "nogap_dense_rationals" | "nogap_shift" | "multiplication_diag" | "hölder_density" => params(&[("D", 16.0)]),
            _ => Params::new(),
        };
        let ex = example(name, &prm).unwrap();
        let mut checked = 0;
        for t in probe_grid(11) {
            let a = ex.family.at(t);
            // points where λ(t) meets other spectrum are skipped
            match weakly_associated_projection(&a, ex.curve.lambda(t), 1e-8) {
                Ok(w) => {
                    let tr = trace(&w.p);
                    assert!((tr - c(w.multiplicity as f64, 0.0)).norm() < 1e-6, "{name} t={t}: {tr}");
                    checked += 1;
                }
                Err(Error::RankAmbiguity { .. } | Error::ClusterAmbiguity { .. }) => {}
                Err(e) => panic!("{name} t={t}: {e}"),
            }
        }
        assert!(checked >= 5, "{name}: only {checked} probe points usable");
    }
}

#[test]
fn shift_example_resolvent_constant_is_one() {
    let ex = example("nogap_shift", &params(&[("D", 32.0)])).unwrap();
    let deltas = [1e-3, 1e-2, 1e-1, 0.5, 1.0];
    let probe = probe_resolvent_estimate(&ex.family, &ex.curve, &ex.projection, &deltas, &probe_grid(5)).unwrap();
    assert!(probe.m0 <= 1.0 + 1e-9, "M0 = {}", probe.m0);
    assert!(probe.violations.is_empty());
}

#[test]
fn normal_resolvent_bound() {
    // skew-Hermitian A; the ray leaves the imaginary axis perpendicularly
    let h = CMatrix::from_fn(5, 5, |i, j| c((i + j) as f64 * 0.1, 0.0) + c(0.0, (i as f64 - j as f64) * 0.2));
    let h = (&h + h.adjoint()) * c(0.5, 0.0);
    let a = h * c(0.0, 1.0);
    let eig = adiabatica::matrixkit::eigenvalues(&a).unwrap();
    let lam = C64::new(0.0, eig[0].im);
    let p = schur_projection(&a, |z| (z - lam).norm() < 1e-8).unwrap();
    let fam = OperatorFamily::constant("skew", a);
    let curve = SpectralCurve::constant(lam, 0.0, 1.0);
    let proj = ProjectionFamily::constant(p);
    let probe = probe_resolvent_estimate(&fam, &curve, &proj, &[1e-4, 1e-2, 1.0], &[0.0]).unwrap();
    assert!(probe.m0 <= 1.0 + 1e-12);
}

#[test]
fn eta_vanishes_without_moving_projection() {
    let ex = example("gap_uniform", &params(&[("rotate", 0.0)])).unwrap();
    assert_eq!(compute_eta(&ex.family, &ex.curve, &ex.projection, 0.1).unwrap(), (0.0, 0.0));
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0.ln(), acc.1 + p.1.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for p in points {
        num += (p.0.ln() - mx) * (p.1.ln() - my);
        den += (p.0.ln() - mx).powi(2);
    }
    num / den
}

#[test]
fn eta_is_linear_with_a_gap() {
    let ex = example("gap_uniform", &Params::new()).unwrap();
    let pts: Vec<(f64, f64)> = [1e-3, 1e-2, 0.1, 0.3]
        .iter()
        .map(|&d| {
            let (p, m) = compute_eta(&ex.family, &ex.curve, &ex.projection, d).unwrap();
            (d, p.max(m))
        })
        .collect();
    for w in pts.windows(2) {
        assert!(w[1].1 / w[1].0 <= 1.5 * w[0].1 / w[0].0);
    }
    assert!((slope(&pts) - 1.0).abs() < 0.1);
}

#[test]
fn eta_holder_exponent() {
    for alpha in [1.0, 0.5] {
        let ex = example("hölder_density", &params(&[("alpha", alpha), ("D", 48.0)])).unwrap();
        let lo = 4.0 * ex.floor_epsilon;
        let pts: Vec<(f64, f64)> = [lo, 2.0 * lo, 4.0 * lo, 8.0 * lo]
            .iter()
            .filter(|&&d| d <= 0.5)
            .map(|&d| {
                let (p, m) = compute_eta(&ex.family, &ex.curve, &ex.projection, d).unwrap();
                (d, p.max(m))
            })
            .collect();
        let s = slope(&pts);
        assert!(s >= alpha / (1.0 + alpha) - 0.05, "alpha {alpha}: slope {s}");
    }
}

#[test]
fn reduced_resolvent_monotone_in_delta_with_gap() {
    let ex = example("gap_uniform", &Params::new()).unwrap();
    let t = 0.4;
    let (a, p, dp) = (ex.family.at(t), ex.projection.at(t), ex.projection.derivative(t));
    let target = mul(&dp, &p);
    let mut prev = 0.0;
    for d in [1e-4, 1e-3, 1e-2, 0.1, 0.4] {
        let z = ex.curve.ray_point(t, d);
        let r = lu(&(identity(a.nrows()) * z - &a)).unwrap().solve(&target).unwrap();
        let v = d * norm2(&r);
        assert!(v + 1e-8 >= prev);
        prev = v;
    }
}

#[test]
fn gap_uniform_diagnostics() {
    let ex = example("gap_uniform", &params(&[("gap", 0.7)])).unwrap();
    let an = gap_diagnostics(&ex.family, &ex.curve, &probe_grid(21), &GapOptions::default()).unwrap();
    assert!(an.uniform_gap);
    assert!((an.min_gap - 0.7).abs() < 1e-9);
    assert!(an.records.iter().all(|r| r.m == Some(1)));
}

#[test]
fn gap_crossing_located() {
    let ex = example("gap_crossing", &Params::new()).unwrap();
    let an = gap_diagnostics(&ex.family, &ex.curve, &probe_grid(40), &GapOptions::default()).unwrap();
    assert!(!an.uniform_gap);
    assert_eq!(an.crossings.len(), 1);
    assert!((an.crossings[0] - 0.5).abs() < 1e-3);
}
