use super::Integrator;
use crate::error::{Error, Result};
use crate::matrixkit::{identity, mul, norm2, CMatrix, C64};
use crate::util::{par_map, sig12};
use serde::Serialize;
use std::io::{Read, Write};

const MAGIC: &[u8; 8] = b"ADBTBL01";
const VERSION: u32 = 1;

/// Evolution operators on a time grid `t₀ < … < t_K`.
///
/// Binary layout (little-endian): magic `ADBTBL01`, `u32` version, `u32`
/// integrator (0 = CF4, 1 = RK4), `u64` d, `u64` number of grid points K+1,
/// `f64` ε, then K+1 grid points, K step error estimates (`f64`), K substep
/// counts (`u64`), K step propagators `U(t_{k+1}, t_k)` and K+1 accumulated
/// `U(t_k, t₀)`. Matrices are row-major `(re, im)` pairs of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorTable {
    pub grid: Vec<f64>,
    pub eps: f64,
    pub integrator: Integrator,
    /// `U(t_{k+1}, t_k)`.
    pub steps: Vec<CMatrix>,
    /// `U(t_k, t₀)`.
    pub accumulated: Vec<CMatrix>,
    /// Local error estimate per step (NaN for RK4).
    pub errors: Vec<f64>,
    pub substeps: Vec<usize>,
}

impl PropagatorTable {
    pub(crate) fn from_steps(
        grid: Vec<f64>,
        eps: f64,
        integrator: Integrator,
        steps: Vec<CMatrix>,
        errors: Vec<f64>,
        substeps: Vec<usize>,
    ) -> Self {
        let d = steps.first().map_or(0, |s| s.nrows());
        let mut accumulated = Vec::with_capacity(grid.len());
        accumulated.push(identity(d));
        for s in &steps {
            let next = mul(s, accumulated.last().expect("non-empty"));
            accumulated.push(next);
        }
        Self {
            grid,
            eps,
            integrator,
            steps,
            accumulated,
            errors,
            substeps,
        }
    }

    pub fn dim(&self) -> usize {
        self.accumulated[0].nrows()
    }

    /// `U(t_k, t_j)` for `j ≤ k` as the product of the steps in between.
    pub fn between(&self, k: usize, j: usize) -> CMatrix {
        assert!(j <= k && k < self.grid.len(), "between({k}, {j}) out of range");
        let mut u = identity(self.dim());
        for s in &self.steps[j..k] {
            u = mul(s, &u);
        }
        u
    }

    /// `U(t_K, t₀)`.
    pub fn last(&self) -> &CMatrix {
        self.accumulated.last().expect("non-empty table")
    }

    pub fn total_error(&self) -> f64 {
        self.errors.iter().filter(|e| e.is_finite()).sum()
    }

    /// Largest `‖U(t, s)*U(t, s) − I‖` over the steps and accumulated operators.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim();
        let all: Vec<&CMatrix> = self.steps.iter().chain(self.accumulated.iter()).collect();
        par_map(&all, |u| norm2(&(mul(&u.adjoint(), u) - identity(d)))).into_iter().fold(0.0, f64::max)
    }

    /// Largest `‖U(t_k, t₀)‖`.
    pub fn max_norm(&self) -> f64 {
        par_map(&self.accumulated, norm2).into_iter().fold(0.0, f64::max)
    }

    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        let d = self.dim() as u64;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let tag: u32 = match self.integrator {
            Integrator::Cf4 => 0,
            Integrator::Rk4 => 1,
        };
        w.write_all(&tag.to_le_bytes())?;
        w.write_all(&d.to_le_bytes())?;
        w.write_all(&(self.grid.len() as u64).to_le_bytes())?;
        w.write_all(&self.eps.to_le_bytes())?;
        for x in self.grid.iter().chain(&self.errors) {
            w.write_all(&x.to_le_bytes())?;
        }
        for &n in &self.substeps {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for m in self.steps.iter().chain(&self.accumulated) {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    w.write_all(&m[(i, j)].re.to_le_bytes())?;
                    w.write_all(&m[(i, j)].im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a propagator table (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported table version {version}")));
        }
        let integrator = match read_u32(&mut r)? {
            0 => Integrator::Cf4,
            1 => Integrator::Rk4,
            t => return Err(Error::Parse(format!("unknown integrator tag {t}"))),
        };
        let d = read_u64(&mut r)? as usize;
        let points = read_u64(&mut r)? as usize;
        if d == 0 || points < 2 || d > 1 << 16 || points > 1 << 24 {
            return Err(Error::Parse(format!("implausible header: d = {d}, points = {points}")));
        }
        let eps = read_f64(&mut r)?;
        let grid = (0..points).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let errors = (0..points - 1).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let substeps = (0..points - 1)
            .map(|_| read_u64(&mut r).map(|n| n as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut matrix = || -> Result<CMatrix> {
            let mut m = CMatrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    let re = read_f64(&mut r)?;
                    let im = read_f64(&mut r)?;
                    m[(i, j)] = C64::new(re, im);
                }
            }
            Ok(m)
        };
        let steps = (0..points - 1).map(|_| matrix()).collect::<Result<Vec<_>>>()?;
        let accumulated = (0..points).map(|_| matrix()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            eps,
            integrator,
            steps,
            accumulated,
            errors,
            substeps,
        })
    }

    /// One row per grid point: `t, step_error, substeps, norm` where the
    /// step columns describe the step ending at `t`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["t", "step_error", "substeps", "norm"]).map_err(io)?;
        let norms = par_map(&self.accumulated, norm2);
        for (k, t) in self.grid.iter().enumerate() {
            let (err, n) = if k == 0 {
                (0.0, 0)
            } else {
                (self.errors[k - 1], self.substeps[k - 1])
            };
            w.write_record([sig12(*t), sig12(err), n.to_string(), sig12(norms[k])]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `‖U(t) − V(t)‖`.
    SupNorm,
    /// `‖(U(t) − V(t)) P(t₀)‖`.
    Projected,
}

#[derive(Debug, Clone, Serialize)]
pub struct Deviation {
    pub per_t: Vec<f64>,
    pub sup: f64,
}

/// Per-grid-point distance between two tables. `p0` is required for the
/// projected metric.
pub fn deviation(a: &PropagatorTable, b: &PropagatorTable, metric: Metric, p0: Option<&CMatrix>) -> Result<Deviation> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("tables of dimension {} and {}", a.dim(), b.dim())));
    }
    let factor = match metric {
        Metric::SupNorm => None,
        Metric::Projected => {
            let p = p0.ok_or_else(|| Error::InvalidParam {
                name: "p0".into(),
                reason: "projected metric needs P(t0)".into(),
            })?;
            Some(range_factor(p))
        }
    };
    let idx: Vec<usize> = (0..a.grid.len()).collect();
    let per_t = par_map(&idx, |&k| {
        let diff = &a.accumulated[k] - &b.accumulated[k];
        match &factor {
            None => norm2(&diff),
            Some(f) => norm2(&mul(&diff, f)),
        }
    });
    let sup = per_t.iter().copied().fold(0.0, f64::max);
    Ok(Deviation { per_t, sup })
}

/// `F` with `‖X P‖ = ‖X F‖` for every `X`: from `P = U Σ W*`, `F = U_r Σ_r`
/// (rank-r thin factor), so the norm needs a d×r SVD instead of d×d.
pub fn range_factor(p: &CMatrix) -> CMatrix {
    let svd = p.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&k| s[k] > crate::matrixkit::RANK_TOL * smax).collect();
    let mut f = CMatrix::zeros(p.nrows(), keep.len().max(1));
    for (col, &k) in keep.iter().enumerate() {
        for i in 0..p.nrows() {
            f[(i, col)] = u[(i, k)] * s[k];
        }
    }
    f
}
