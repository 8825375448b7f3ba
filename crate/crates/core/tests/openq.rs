use adiabatica::evolve::{deviation, propagate, propagate_projected, Metric};
use adiabatica::matrixkit::{c, commutator, diag, expm, mul, norm2, trace, CMatrix, C64};
use adiabatica::openq::*;
use adiabatica::opfamily::uniform_grid;
use adiabatica::spectral::weakly_associated_projection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let m = CMatrix::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    (&m + m.adjoint()) * c(0.5, 0.0)
}

/// `H` random Hermitian, jumps `H² − H` and `i·H`: functions of `H`.
fn dephasing_spec(seed: u64, d: usize) -> LindbladSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_hermitian(&mut rng, d);
    let b1 = mul(&h, &h) - &h;
    let b2 = &h * c(0.0, 0.7);
    LindbladSpec::new(h, vec![b1, b2])
}

fn paper_like() -> LindbladSpec {
    nondephasing_example(&[-1.0, 0.5], &[1.5, 2.0, 2.5, 3.0], &[c(0.4, 0.0), c(0.0, 0.8)], c(0.9, 0.3)).unwrap()
}

#[test]
fn rage_matches_weakly_associated_projection() {
    for seed in 0..5 {
        let spec = dephasing_spec(seed, 4);
        let s = build_lindblad(&spec).unwrap();
        let rage = rage_projection(&spec.h).unwrap();
        let weak = weakly_associated_projection(&s.matrix, C64::from(0.0), 1e-8).unwrap();
        assert_eq!(weak.m, 1);
        assert!(norm2(&(&rage - &weak.p)) <= 1e-8, "seed {seed}: {}", norm2(&(&rage - &weak.p)));
        assert!(norm2(&(mul(&rage, &rage) - &rage)) <= 1e-12);
    }
}

#[test]
fn dephasing_kernel_is_diagonal_algebra() {
    let s = build_lindblad(&dephasing_spec(3, 5)).unwrap();
    let r = kernel_diagnostics(&s).unwrap();
    assert_eq!(r.dim_ker_z0, 5);
    assert_eq!(r.dim_ker_a, 5);
    assert!(r.inclusion && r.kernels_equal && r.dephasing && r.consistent_with_criterion);
}

#[test]
fn nondephasing_construction() {
    let spec = paper_like();
    let s = build_lindblad(&spec).unwrap();
    let b = &spec.jumps[0];
    // B is normal, does not commute with H
    assert!(norm2(&(mul(b, &b.adjoint()) - mul(&b.adjoint(), b))) <= 1e-12);
    assert!(norm2(&commutator(&spec.h, b)) > 1e-6);
    let r = kernel_diagnostics(&s).unwrap();
    assert!(r.inclusion, "{r:?}");
    assert!(!r.dephasing);
    // with pure point spectrum the kernels must then differ
    assert!(!r.kernels_equal);
    assert!(r.consistent_with_criterion);
    assert_eq!(r.dim_ker_z0, 6);
    assert_eq!(r.dim_ker_a, 3);
}

#[test]
fn semigroup_preserves_trace_and_hermiticity() {
    for spec in [paper_like(), dephasing_spec(9, 3)] {
        let s = build_lindblad(&spec).unwrap();
        assert!(s.checks.choi_min.iter().all(|&m| m >= -1e-9));
        let d = spec.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_hermitian(&mut rng, d);
        let rho = mul(&x, &x.adjoint());
        for k in 0..=10 {
            let sgrp = expm(&(&s.matrix * C64::from(0.5 * k as f64))).unwrap();
            let out = unvectorize(&(&sgrp * vectorize(&rho)), d);
            assert!((trace(&out) - trace(&rho)).norm() <= 1e-9);
            assert!(norm2(&(&out - out.adjoint())) <= 1e-9);
        }
    }
}

#[test]
fn unphysical_generator_fails_checks() {
    // B = [[0,1],[0,0]] is not normal: rejected before building
    let spec = LindbladSpec::new(diag(&[c(0.0, 0.0), c(1.0, 0.0)]), vec![CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])]);
    assert!(build_lindblad(&spec).is_err());
}

#[test]
fn constant_spec_gives_constant_family() {
    let spec = dephasing_spec(2, 3);
    let fam = lindblad_family("const", 3, move |_| spec.clone(), &[0.0, 0.5, 1.0]).unwrap();
    assert!(norm2(&(fam.at(0.1) - fam.at(0.9))) == 0.0);
    assert!(norm2(&fam.derivative(0.4)) < 1e-9);
}

#[test]
fn rotated_family_is_adiabatic_in_the_limit() {
    let spec = dephasing_spec(4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let cgen = random_hermitian(&mut rng, 3);
    let (a, p) = rotated_lindblad(&spec, &cgen).unwrap();
    // P(t) is the RAGE projection of H(t) = R(t)⁻¹ H R(t)
    let t = 0.6;
    let r = expm(&(&cgen * c(0.0, t))).unwrap();
    let rinv = expm(&(&cgen * c(0.0, -t))).unwrap();
    let ht = mul(&mul(&rinv, &spec.h), &r);
    assert!(norm2(&(rage_projection(&ht).unwrap() - p.at(t))) <= 1e-10);
    p.check(&uniform_grid(0.0, 1.0, 11)).unwrap();

    let grid = uniform_grid(0.0, 1.0, 41);
    let p0 = p.at(0.0);
    let sweep: Vec<f64> = [1e-1, 1e-2]
        .iter()
        .map(|&eps| {
            let u = propagate(&a, eps, &grid, 1e-10).unwrap();
            let v = propagate_projected(&a, &p, eps, &grid, 1e-10).unwrap();
            deviation(&u, &v, Metric::Projected, Some(&p0)).unwrap().sup
        })
        .collect();
    assert!(sweep[1] < sweep[0], "{sweep:?}");
}
