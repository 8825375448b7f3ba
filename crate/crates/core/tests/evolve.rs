use adiabatica::evolve::*;
use adiabatica::matrixkit::{c, diag, expm, identity, mul, norm2, CMatrix, C64};
use adiabatica::opfamily::{example, probe_grid, uniform_grid, OperatorFamily, Params, ProjectionFamily};
use std::f64::consts::PI;

fn params(kv: &[(&str, f64)]) -> Params {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Smallest-d parameters for each registry entry.
fn small(name: &str) -> Params {
    match name {
        "nogap_dense_rationals" | "nogap_shift" | "hölder_density" => params(&[("D", 8.0)]),
        "multiplication_diag" => params(&[("D", 8.0)]),
        _ => Params::new(),
    }
}

const NAMES: [&str; 7] = [
    "gap_uniform",
    "gap_crossing",
    "nogap_dense_rationals",
    "nogap_shift",
    "rotation_counterexample",
    "multiplication_diag",
    "hölder_density",
];

#[test]
fn commuting_diagonal_family_integrates_exactly() {
    let fam = OperatorFamily::new("diag", 3, |t| diag(&[c(-t, 2.0 * t * t), c(0.0, (3.0 * t).sin()), c(-0.5, 0.0)]));
    let eps = 0.05;
    let grid = probe_grid(11);
    let tab = propagate(&fam, eps, &grid, TOL_STEP).unwrap();
    for (k, &t) in grid.iter().enumerate() {
        let integral = diag(&[c(-t * t / 2.0, 2.0 * t.powi(3) / 3.0), c(0.0, (1.0 - (3.0 * t).cos()) / 3.0), c(-0.5 * t, 0.0)]);
        let exact = expm(&(integral * C64::from(1.0 / eps))).unwrap();
        assert!(norm2(&(&tab.accumulated[k] - exact)) < 1e-8);
    }
}

#[test]
fn registry_families_match_rk4_oracle() {
    let eps = 1e-2;
    for name in NAMES {
        let ex = example(name, &small(name)).unwrap();
        let gen = Generator::plain(&ex.family, eps).unwrap();
        // RK4 with ‖G‖h ≤ 0.005 instead of h = 1e-6 keeps the oracle affordable
        let g = (0..=10).map(|k| norm2(&gen.at(k as f64 / 10.0))).fold(0.0, f64::max);
        let grid = uniform_grid(0.0, 0.25, 6);
        let oracle = propagate_rk4(&gen, eps, &grid, (0.005 / g).min(1e-3)).unwrap();
        let tab = propagate_generator(&gen, eps, &grid, TOL_STEP).unwrap();
        let dev = deviation(&tab, &oracle, Metric::SupNorm, None).unwrap();
        assert!(dev.sup < 1e-7, "{name}: {:.3e}", dev.sup);
    }
}

#[test]
fn intertwined_without_moving_projection_is_plain() {
    let ex = example("gap_uniform", &params(&[("rotate", 0.0)])).unwrap();
    let grid = probe_grid(21);
    let u = propagate(&ex.family, 0.05, &grid, TOL_STEP).unwrap();
    let v = propagate_intertwined(&ex.family, &ex.projection, 0.05, &grid, TOL_STEP).unwrap();
    assert_eq!(u.accumulated, v.accumulated);
}

#[test]
fn intertwined_is_adiabatic_on_registry() {
    for name in NAMES {
        let ex = example(name, &small(name)).unwrap();
        let v = propagate_intertwined(&ex.family, &ex.projection, 1e-2, &probe_grid(21), TOL_STEP).unwrap();
        let defect = adiabaticity_defect(&v, &ex.projection).into_iter().fold(0.0, f64::max);
        if name == "multiplication_diag" {
            // P jumps where grid points cross the support edge; no generator can follow that
            assert!(defect > 0.5);
            continue;
        }
        assert!(defect <= 1e-7, "{name}: {defect:.3e}");
    }
}

#[test]
fn intertwined_growth_bound() {
    let ex = example("gap_uniform", &Params::new()).unwrap();
    let grid = probe_grid(21);
    let u = propagate(&ex.family, 1e-2, &grid, TOL_STEP).unwrap();
    let v = propagate_intertwined(&ex.family, &ex.projection, 1e-2, &grid, TOL_STEP).unwrap();
    let mut m: f64 = 1.0;
    for k in 0..grid.len() {
        for j in 0..=k {
            m = m.max(norm2(&u.between(k, j)));
        }
    }
    let cbound = grid.iter().map(|&t| norm2(&ex.projection.commutator_target(t))).fold(0.0, f64::max);
    assert!(norm2(v.last()) <= m * (m * cbound).exp());
}

#[test]
fn projected_rank_one_phase_factorization() {
    let ex = example("gap_uniform", &params(&[("omega", 0.7)])).unwrap();
    let grid = probe_grid(11);
    let eps = 0.02;
    let v0 = propagate_projected(&ex.family, &ex.projection, eps, &grid, TOL_STEP).unwrap();
    let p = ex.projection.clone();
    let w = propagate_generator(&Generator::from_fn(6, move |t| p.commutator_target(t)), 1.0, &grid, TOL_STEP).unwrap();
    let p0 = ex.projection.at(0.0);
    for (k, &t) in grid.iter().enumerate() {
        // λ(t) = 0.7 i t
        let phase = C64::new(0.0, 0.35 * t * t / eps).exp();
        let lhs = mul(&v0.accumulated[k], &p0);
        let rhs = mul(&w.accumulated[k], &p0) * phase;
        assert!(norm2(&(lhs - rhs)) < 1e-7);
    }
}

#[test]
fn projected_norm_independent_of_eps_for_imaginary_lambda() {
    let ex = example("gap_uniform", &Params::new()).unwrap();
    let grid = probe_grid(11);
    let p0 = ex.projection.at(0.0);
    let norms: Vec<Vec<f64>> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&eps| {
            let v0 = propagate_projected(&ex.family, &ex.projection, eps, &grid, TOL_STEP).unwrap();
            v0.accumulated.iter().map(|u| norm2(&mul(u, &p0))).collect()
        })
        .collect();
    for k in 0..grid.len() {
        assert!((norms[0][k] - norms[1][k]).abs() < 1e-7 && (norms[0][k] - norms[2][k]).abs() < 1e-7);
    }
}

#[test]
fn halving_eps_halves_gapped_deviation() {
    let ex = example("gap_uniform", &Params::new()).unwrap();
    let grid = probe_grid(51);
    let sup = |eps: f64| {
        let u = propagate(&ex.family, eps, &grid, TOL_STEP).unwrap();
        let v = propagate_intertwined(&ex.family, &ex.projection, eps, &grid, TOL_STEP).unwrap();
        deviation(&u, &v, Metric::SupNorm, None).unwrap().sup
    };
    let ratio = sup(5e-3) / sup(1e-2);
    assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
}

/// `∫₀^{1/4} τ cos²(2πτ) dτ = 1/64 − 1/(16π²)`.
fn rotation_integral() -> f64 {
    1.0 / 64.0 - 1.0 / (16.0 * PI * PI)
}

#[test]
fn rotation_counterexample_leaks_out_of_range() {
    let ex = example("rotation_counterexample", &Params::new()).unwrap();
    for eps in [1e-1, 1e-2] {
        let grid = uniform_grid(0.0, 0.25, 6);
        let u = propagate(&ex.family, eps, &grid, TOL_STEP).unwrap();
        let q = ex.projection.complement(0.25);
        let e1 = CMatrix::from_column_slice(2, 1, &[C64::from(1.0), C64::from(0.0)]);
        let leak = mul(&mul(&q, u.last()), &mul(&ex.projection.at(0.0), &e1)).norm();
        assert!(leak >= 1.0 + rotation_integral() / eps, "eps {eps}: {leak}");
    }
}

#[test]
fn cocycle_against_independent_restart() {
    let ex = example("nogap_shift", &params(&[("D", 8.0)])).unwrap();
    let grid = probe_grid(11);
    let tol = TOL_STEP;
    let full = propagate(&ex.family, 0.05, &grid, tol).unwrap();
    let tail = propagate(&ex.family, 0.05, &grid[4..], tol).unwrap();
    let k = grid.len() - 1;
    let err = norm2(&(full.between(k, 4) - tail.last()));
    assert!(err <= k as f64 * tol * 10.0, "{err:.3e}");
    let composed = mul(&full.between(k, 4), &full.between(4, 1));
    assert!(norm2(&(composed - full.between(k, 1))) <= k as f64 * tol);
}

#[test]
fn global_error_against_tighter_rerun() {
    let ex = example("gap_crossing", &Params::new()).unwrap();
    let grid = probe_grid(11);
    let tol = TOL_STEP;
    let a = propagate(&ex.family, 1e-2, &grid, tol).unwrap();
    let b = propagate(&ex.family, 1e-2, &grid, tol / 100.0).unwrap();
    let dev = deviation(&a, &b, Metric::SupNorm, None).unwrap();
    assert!(dev.sup <= 10.0 * tol * (grid.len() - 1) as f64, "{:.3e}", dev.sup);
}

#[test]
fn skew_families_propagate_unitarily() {
    for (name, prm) in [("gap_uniform", Params::new()), ("hölder_density", params(&[("D", 8.0)])), ("gap_crossing", Params::new())] {
        let ex = example(name, &prm).unwrap();
        let u = propagate(&ex.family, 1e-2, &probe_grid(11), TOL_STEP).unwrap();
        assert!(u.unitarity_defect() <= 1e-8, "{name}");
    }
}

#[test]
fn contraction_preserved_for_damped_family() {
    let ex = example("gap_uniform", &params(&[("damping", 0.5)])).unwrap();
    let u = propagate(&ex.family, 1e-2, &probe_grid(11), TOL_STEP).unwrap();
    assert!(u.max_norm() <= 1.0 + 1e-8);
}

#[test]
fn rescaling_time_is_rescaling_eps() {
    let ex = example("gap_crossing", &Params::new()).unwrap();
    let eps = 0.05;
    let window = uniform_grid(0.0, eps, 6);
    let u = propagate(&ex.family, eps, &window, TOL_STEP).unwrap();
    let slow = ex.family.reparametrized(0.0, eps);
    let v = propagate(&slow, 1.0, &uniform_grid(0.0, 1.0, 6), TOL_STEP).unwrap();
    for k in 0..6 {
        assert!(norm2(&(&u.accumulated[k] - &v.accumulated[k])) < 1e-7);
    }
}

#[test]
fn trivial_theorem_damped_bound() {
    let gamma = 2.0;
    let ex = example("gap_uniform", &params(&[("damping", gamma)])).unwrap();
    let grid = probe_grid(51);
    let cbound = grid.iter().map(|&t| norm2(&ex.projection.commutator_target(t))).fold(0.0, f64::max);
    for eps in [0.1, 0.05, 0.02] {
        let u = propagate(&ex.family, eps, &grid, TOL_STEP).unwrap();
        let v = propagate_intertwined(&ex.family, &ex.projection, eps, &grid, TOL_STEP).unwrap();
        let dev = deviation(&u, &v, Metric::SupNorm, None).unwrap().sup;
        // M = 1 for a contraction semigroup shifted by −γ
        let bound = cbound * cbound.exp() * eps / (gamma * std::f64::consts::E);
        assert!(dev <= bound, "eps {eps}: {dev:.3e} > {bound:.3e}");
    }
}

#[test]
fn table_files_round_trip() {
    let ex = example("gap_crossing", &Params::new()).unwrap();
    let tab = propagate(&ex.family, 0.1, &probe_grid(5), TOL_STEP).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.bin");
    tab.write_binary(std::fs::File::create(&path).unwrap()).unwrap();
    let back = PropagatorTable::read_binary(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, tab);
    let mut csv = Vec::new();
    tab.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 6);
    let _ = (identity(1), ProjectionFamily::constant(identity(1)));
}
