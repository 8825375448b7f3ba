use super::{hermitian_eigen, SwitchingSetup};
use crate::error::{Error, Result};
use crate::matrixkit::{mul, norm2, CMatrix, C64};
use nalgebra::DVector;

/// Smallest positive coupling sampled; `P(0)` itself comes from first-order
/// degenerate perturbation theory.
pub const KAPPA_MIN: f64 = 1e-6;
const CLUSTER_TOL: f64 = 1e-9;

/// One eigenvalue curve `λ(κ)` of `A₀ + κV` on `κ ∈ [0, 1]` with its
/// eigenprojection. Samples are ascending in `κ`, `kappa[0] = 0`.
#[derive(Debug, Clone)]
pub struct EigenCurve {
    pub rank: usize,
    pub kappa: Vec<f64>,
    pub lambda: Vec<C64>,
    pub proj: Vec<CMatrix>,
    /// Couplings where another eigenvalue came within the cluster tolerance.
    pub crossings: Vec<f64>,
}

impl EigenCurve {
    /// Linear interpolation of `λ` in `κ` (clamped to `[0, 1]`).
    pub fn lambda_at(&self, kappa: f64) -> C64 {
        let k = kappa.clamp(0.0, 1.0);
        let i = self.kappa.partition_point(|&x| x <= k).clamp(1, self.kappa.len() - 1);
        let (k0, k1) = (self.kappa[i - 1], self.kappa[i]);
        let s = if k1 > k0 { (k - k0) / (k1 - k0) } else { 0.0 };
        self.lambda[i - 1] * (1.0 - s) + self.lambda[i] * s
    }

    /// `P(−∞)`: the `κ → 0⁺` limit.
    pub fn initial_projection(&self) -> &CMatrix {
        &self.proj[0]
    }

    /// `P(0)`: the projection at full coupling.
    pub fn final_projection(&self) -> &CMatrix {
        self.proj.last().expect("non-empty curve")
    }

    /// `λ(0) − λ(−∞)`.
    pub fn shift(&self) -> C64 {
        self.lambda[self.lambda.len() - 1] - self.lambda[0]
    }

    /// Indices (into the ascending eigenvalues `mu` of `i·A(κ)`) that belong to
    /// this curve at `κ`: the `rank` values nearest the interpolated curve.
    pub(crate) fn members(&self, kappa: f64, mu: &[f64]) -> Vec<usize> {
        let target = (C64::i() * self.lambda_at(kappa)).re;
        let mut idx: Vec<usize> = (0..mu.len()).collect();
        idx.sort_by(|&a, &b| (mu[a] - target).abs().total_cmp(&(mu[b] - target).abs()));
        idx.truncate(self.rank);
        idx
    }
}

/// `0`, a geometric run from [`KAPPA_MIN`] up to `1/n`, then `k/n`.
pub fn continuation_grid(n: usize) -> Vec<f64> {
    let n = n.max(2);
    let first = 1.0 / n as f64;
    let steps = ((first / KAPPA_MIN).log10() * 2.0).ceil() as usize;
    let mut g = vec![0.0];
    for k in 0..steps {
        g.push(KAPPA_MIN * (first / KAPPA_MIN).powf(k as f64 / steps as f64));
    }
    g.extend((1..=n).map(|k| k as f64 / n as f64));
    g
}

fn projector(vecs: &CMatrix, members: &[usize]) -> CMatrix {
    let cols: Vec<DVector<C64>> = members.iter().map(|&k| vecs.column(k).into_owned()).collect();
    let v = CMatrix::from_columns(&cols);
    mul(&v, &v.adjoint())
}

/// Groups of indices of ascending `mu` closer than `tol`.
fn clusters(mu: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (k, &m) in mu.iter().enumerate() {
        match out.last_mut() {
            Some(c) if m - mu[*c.last().expect("non-empty")] <= tol => c.push(k),
            _ => out.push(vec![k]),
        }
    }
    out
}

/// Greedy assignment: each owner takes `want[c]` of the indices, cheapest
/// `cost(c, i)` first.
fn assign(want: &[usize], n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Vec<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for c in 0..want.len() {
        for i in 0..n {
            pairs.push((cost(c, i), c, i));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut taken = vec![false; n];
    let mut out = vec![Vec::new(); want.len()];
    for (_, c, i) in pairs {
        if !taken[i] && out[c].len() < want[c] {
            taken[i] = true;
            out[c].push(i);
        }
    }
    for o in &mut out {
        o.sort_unstable();
    }
    out
}

fn mean(mu: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&k| mu[k]).sum::<f64>() / idx.len() as f64
}

/// Eigenvalue curves of `A₀ + κV`, identified at `κ = 1` (ordered by
/// `Im λ`) and continued down to `κ = 0` by nearest predicted eigenvalue.
///
/// `n` uniform samples plus a geometric refinement towards `0`. When an
/// eigenvalue of `A₀` splits, `P(0)` is fixed by the eigenvectors of `V`
/// compressed to the degenerate eigenspace.
pub fn continue_curves(setup: &SwitchingSetup, n: usize) -> Result<Vec<EigenCurve>> {
    let grid = continuation_grid(n);
    let scale = norm2(&setup.a0).max(norm2(&setup.v)).max(1.0);
    let tol = CLUSTER_TOL * scale;

    let (mu1, _) = hermitian_eigen(&setup.at_kappa(1.0));
    let groups = clusters(&mu1, tol);
    let ranks: Vec<usize> = groups.iter().map(Vec::len).collect();
    // per curve, descending-κ samples of (κ, μ, P)
    let mut track: Vec<Vec<(f64, f64, CMatrix)>> = vec![Vec::new(); groups.len()];
    let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); groups.len()];

    for &k in grid[1..].iter().rev() {
        let (mu, vecs) = hermitian_eigen(&setup.at_kappa(k));
        let pred: Vec<f64> = track
            .iter()
            .enumerate()
            .map(|(c, tr)| match tr.len() {
                0 => mean(&mu1, &groups[c]),
                1 => tr[0].1,
                m => {
                    let (ka, ma, _) = &tr[m - 2];
                    let (kb, mb, _) = &tr[m - 1];
                    mb + (mb - ma) / (kb - ka) * (k - kb)
                }
            })
            .collect();
        let members = assign(&ranks, mu.len(), |c, i| (mu[i] - pred[c]).abs());
        for (c, idx) in members.iter().enumerate() {
            let m = mean(&mu, idx);
            let near = (0..mu.len()).any(|i| !idx.contains(&i) && (mu[i] - m).abs() <= tol);
            if near {
                crossings[c].push(k);
            }
            track[c].push((k, m, projector(&vecs, idx)));
        }
    }

    // κ → 0⁺ limit
    let (mu0, vecs0) = hermitian_eigen(&setup.a0);
    let groups0 = clusters(&mu0, tol);
    let mut limit: Vec<Option<(f64, CMatrix)>> = vec![None; track.len()];
    for g in &groups0 {
        let m0 = mean(&mu0, g);
        let owners: Vec<usize> = (0..track.len())
            .filter(|&c| {
                let mc = track[c].last().expect("sampled").1;
                groups0
                    .iter()
                    .min_by(|a, b| (mean(&mu0, a) - mc).abs().total_cmp(&(mean(&mu0, b) - mc).abs()))
                    .is_some_and(|best| best == g)
            })
            .collect();
        let owned: usize = owners.iter().map(|&c| ranks[c]).sum();
        if owned != g.len() {
            return Err(Error::Invariant {
                name: "continuation".into(),
                detail: format!("eigenvalue {:.6e} of A0 has multiplicity {} but {owned} continued dimensions", -m0, g.len()),
            });
        }
        if owners.len() == 1 {
            limit[owners[0]] = Some((m0, projector(&vecs0, g)));
            continue;
        }
        // first-order splitting: eigenvectors of Q*(iV)Q
        let cols: Vec<DVector<C64>> = g.iter().map(|&k| vecs0.column(k).into_owned()).collect();
        let q = CMatrix::from_columns(&cols);
        let iv = &setup.v * C64::i();
        let m = mul(&q.adjoint(), &mul(&iv, &q));
        let (nu, w) = hermitian_eigen_h(&m);
        let full = mul(&q, &w);
        let slopes: Vec<f64> = owners
            .iter()
            .map(|&c| {
                let (kc, mc, _) = track[c].last().expect("sampled");
                (mc - m0) / kc
            })
            .collect();
        let want: Vec<usize> = owners.iter().map(|&c| ranks[c]).collect();
        let picks = assign(&want, nu.len(), |c, i| (nu[i] - slopes[c]).abs());
        for (slot, &c) in owners.iter().enumerate() {
            limit[c] = Some((m0, projector(&full, &picks[slot])));
        }
    }

    let mut out = Vec::with_capacity(track.len());
    for (c, tr) in track.into_iter().enumerate() {
        let (m0, p0) = limit[c].clone().expect("every curve has a limit");
        let near = &tr.last().expect("sampled").2;
        let drift = norm2(&(&p0 - near));
        if drift > 1e-3 {
            return Err(Error::Invariant {
                name: "continuation".into(),
                detail: format!("limit projection of curve {c} is {drift:.3e} from the smallest sampled coupling; the first-order splitting is degenerate"),
            });
        }
        let mut kappa = vec![0.0];
        let mut lambda = vec![C64::new(0.0, -m0)];
        let mut proj = vec![p0];
        for (k, m, p) in tr.into_iter().rev() {
            kappa.push(k);
            lambda.push(C64::new(0.0, -m));
            proj.push(p);
        }
        let mut cr = crossings[c].clone();
        cr.reverse();
        out.push(EigenCurve {
            rank: ranks[c],
            kappa,
            lambda,
            proj,
            crossings: cr,
        });
    }
    Ok(out)
}

fn hermitian_eigen_h(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    super::sorted_eigen(h)
}
