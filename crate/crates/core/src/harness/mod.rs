//! ε-sweeps over registry examples: deviation of the true from the adiabatic
//! evolution, invariant residuals, log-log slope fits and verdicts.

mod emit;
mod fit;

pub use emit::{plot_svg, read_csv, write_csv, write_profiles, CsvRow};
pub use fit::{fit_slope, inversions, verdict, SlopeFit, Verdict, LINEAR_SLOPE, MIN_FIT_POINTS, NON_DECAY_RATIO, RATE_SLACK, TRIVIAL_TOL, VANISHING_RATIO};

use crate::commutator::{delta_schedule, solve_gap_pole, solve_nogap, ScheduleKind};
use crate::error::{Error, Result};
use crate::evolve::{adiabaticity_defect, deviation, propagate, propagate_intertwined, propagate_projected, Metric};
use crate::opfamily::{example, uniform_grid, Example, Expectation, Params};
use crate::util::try_par_map;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

/// Adiabaticity residual above this is an invariant failure.
pub const ADIABATIC_TOL: f64 = 1e-7;
/// Commutator identity residual above this is an invariant failure.
pub const COMMUTATOR_TOL: f64 = 1e-8;
/// Projections that are not differentiable in `t`; no adiabatic evolution
/// can intertwine them, so their adiabaticity residual is not checked.
const NONSMOOTH_PROJECTION: &[&str] = &["multiplication_diag"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// `sup_t ‖U_ε(t) − V_ε(t)‖`.
    SupNorm,
    /// `sup_t ‖(U_ε(t) − V_{0,ε}(t))P(0)‖`.
    Projected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonGrid {
    #[serde(default = "default_eps_max")]
    pub max: f64,
    #[serde(default = "default_eps_min")]
    pub min: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Explicit values; overrides `max`, `min` and `points`.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

fn default_eps_max() -> f64 {
    1e-1
}
fn default_eps_min() -> f64 {
    1e-3
}
fn default_points() -> usize {
    8
}

impl Default for EpsilonGrid {
    fn default() -> Self {
        Self {
            max: default_eps_max(),
            min: default_eps_min(),
            points: default_points(),
            values: None,
        }
    }
}

/// Geometric grid from `max` down to `min` (inclusive).
pub fn geometric(max: f64, min: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![max];
    }
    (0..points)
        .map(|k| max * (min / max).powf(k as f64 / (points - 1) as f64))
        .collect()
}

impl EpsilonGrid {
    pub fn values(&self) -> Vec<f64> {
        self.values.clone().unwrap_or_else(|| geometric(self.max, self.min, self.points))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NogapConfig {
    /// Mollifier index.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
}

fn default_n() -> usize {
    8
}
fn default_schedule() -> ScheduleKind {
    ScheduleKind::Quantitative
}

impl Default for NogapConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            schedule: default_schedule(),
        }
    }
}

/// One sweep. TOML layout:
///
/// ```toml
/// example = "gap_uniform"
/// params = { d = 6 }
/// metric = "sup_norm"        # default: the example's own metric
/// tol = 1e-10                # per-interval integrator tolerance
/// grid_points = 51           # output points on [0, 1]
/// commutator = true          # record the commutator identity residual
/// commutator_points = 11
/// timings = false            # runtime_ms stays 0 unless set
/// out = "results"
/// jobs = 4
/// force = false              # allow ε below the example's floor
///
/// [epsilon]
/// max = 1e-1
/// min = 1e-3
/// points = 8
///
/// [nogap]
/// n = 8
/// schedule = "quantitative"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub epsilon: EpsilonGrid,
    #[serde(default)]
    pub metric: Option<MetricKind>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_true")]
    pub commutator: bool,
    #[serde(default = "default_comm_points")]
    pub commutator_points: usize,
    #[serde(default)]
    pub nogap: NogapConfig,
    #[serde(default)]
    pub timings: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub force: bool,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_grid_points() -> usize {
    51
}
fn default_true() -> bool {
    true
}
fn default_comm_points() -> usize {
    11
}

impl ExperimentConfig {
    pub fn new(example: impl Into<String>) -> Self {
        Self {
            example: example.into(),
            params: Params::new(),
            epsilon: EpsilonGrid::default(),
            metric: None,
            tol: default_tol(),
            grid_points: default_grid_points(),
            commutator: true,
            commutator_points: default_comm_points(),
            nogap: NogapConfig::default(),
            timings: false,
            out: None,
            jobs: None,
            force: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon.values();
        let bad = |reason: &str| {
            Err(Error::InvalidParam {
                name: "epsilon".into(),
                reason: reason.into(),
            })
        };
        if eps.is_empty() {
            return bad("empty grid");
        }
        if eps.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("values must lie in (0, 1]");
        }
        if eps.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("must be strictly decreasing");
        }
        if self.grid_points < 2 || self.commutator_points < 2 {
            return Err(Error::InvalidParam {
                name: "grid_points".into(),
                reason: "need at least 2".into(),
            });
        }
        if !(self.tol > 0.0 && self.tol < 1e-2) {
            return Err(Error::InvalidParam {
                name: "tol".into(),
                reason: "must lie in (0, 1e-2)".into(),
            });
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParam {
                name: "jobs".into(),
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// One ε of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub eps: f64,
    pub sup_dev: f64,
    pub adiab_resid: f64,
    pub comm_resid: f64,
    pub runtime_ms: u64,
    /// Deviation at each grid point.
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub example: String,
    pub params: Params,
    pub metric: MetricKind,
    pub grid: Vec<f64>,
    pub records: Vec<Record>,
    pub fit: Option<SlopeFit>,
    pub expectation: Expectation,
    pub verdict: Verdict,
    /// Residuals above the hard thresholds.
    pub invariant_failures: Vec<String>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    /// `0` pass, `1` verdict failure, `2` invariant failure.
    pub fn exit_code(&self) -> i32 {
        if !self.invariant_failures.is_empty() {
            2
        } else if !self.verdict.pass {
            1
        } else {
            0
        }
    }
}

/// Keeps the sweep above `floor`: the grid is re-spaced geometrically between
/// its largest value and the floor, with the same number of points.
pub fn restrict_to_floor(eps: &[f64], floor: f64) -> Result<(Vec<f64>, Option<String>)> {
    let max = eps[0];
    let min = *eps.last().expect("non-empty grid");
    if min >= floor {
        return Ok((eps.to_vec(), None));
    }
    if max <= floor {
        return Err(Error::InvalidParam {
            name: "epsilon".into(),
            reason: format!("whole grid lies below the truncation floor {floor:.3e}; pass --force to run anyway"),
        });
    }
    let out = geometric(max, floor, eps.len());
    let note = format!("epsilon grid re-spaced to [{floor:.3e}, {max:.3e}] ({} points): below {floor:.3e} the truncation behaves gapped", eps.len());
    Ok((out, Some(note)))
}

/// Jobs from the argument, then `ADIABATICA_JOBS`, then the machine.
pub fn resolve_jobs(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("ADIABATICA_JOBS").ok().and_then(|s| s.parse().ok()))
        .filter(|&j| j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a pool of `jobs` workers (serially without the `parallel`
/// feature).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidParam {
                name: "jobs".into(),
                reason: e.to_string(),
            })?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        Ok(f())
    }
}

/// Whether the adiabaticity residual is a hard invariant for this example.
pub fn enforces_adiabaticity(name: &str) -> bool {
    !NONSMOOTH_PROJECTION.contains(&name)
}

fn metric_for(ex: &Example, cfg: &ExperimentConfig) -> MetricKind {
    cfg.metric.unwrap_or(if ex.projected {
        MetricKind::Projected
    } else {
        MetricKind::SupNorm
    })
}

/// Residual of the commutator identity at one ε: the pole form when the
/// example has a uniform gap (ε-independent), otherwise the approximate
/// construction with the configured δ-schedule.
fn commutator_residual(ex: &Example, cfg: &ExperimentConfig, eps: f64) -> Result<f64> {
    let grid = uniform_grid(0.0, 1.0, cfg.commutator_points);
    let sol = if ex.gap.is_some() {
        solve_gap_pole(&ex.family, &ex.projection, &ex.curve, ex.m0, &grid)?
    } else {
        let sched = delta_schedule(eps, ex.m0, |d| d, ex.curve.delta0, cfg.nogap.schedule)?;
        solve_nogap(&ex.family, &ex.projection, &ex.curve, cfg.nogap.n, &sched.deltas, &grid)?
    };
    Ok(sol.max_residual())
}

/// Deviation, adiabaticity residual and commutator residual at one ε.
pub fn measure(ex: &Example, cfg: &ExperimentConfig, eps: f64, metric: MetricKind, comm: Option<f64>) -> Result<Record> {
    // Instant is unavailable on wasm32-unknown-unknown, so only read it on request
    let start = cfg.timings.then(Instant::now);
    let grid = uniform_grid(0.0, 1.0, cfg.grid_points);
    let u = propagate(&ex.family, eps, &grid, cfg.tol)?;
    let (v, dev) = match metric {
        MetricKind::SupNorm => {
            let v = propagate_intertwined(&ex.family, &ex.projection, eps, &grid, cfg.tol)?;
            let d = deviation(&u, &v, Metric::SupNorm, None)?;
            (v, d)
        }
        MetricKind::Projected => {
            let v = propagate_projected(&ex.family, &ex.projection, eps, &grid, cfg.tol)?;
            let p0 = ex.projection.at(grid[0]);
            let d = deviation(&u, &v, Metric::Projected, Some(&p0))?;
            (v, d)
        }
    };
    let adiab_resid = adiabaticity_defect(&v, &ex.projection).into_iter().fold(0.0, f64::max);
    let comm_resid = match comm {
        Some(c) => c,
        None if cfg.commutator => commutator_residual(ex, cfg, eps)?,
        None => f64::NAN,
    };
    let runtime_ms = start.map_or(0, |s| s.elapsed().as_millis() as u64);
    Ok(Record {
        eps,
        sup_dev: dev.sup,
        adiab_resid,
        comm_resid,
        runtime_ms,
        profile: dev.per_t,
    })
}

/// Runs the sweep on `jobs` workers (see [`resolve_jobs`]).
pub fn run(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ex = example(&cfg.example, &cfg.params)?;
    let mut notes = Vec::new();
    let requested = cfg.epsilon.values();
    let eps = if cfg.force {
        if *requested.last().expect("validated") < ex.floor_epsilon {
            notes.push(format!("forced below the truncation floor {:.3e}", ex.floor_epsilon));
        }
        requested
    } else {
        let (e, note) = restrict_to_floor(&requested, ex.floor_epsilon)?;
        notes.extend(note);
        e
    };
    let metric = metric_for(&ex, cfg);
    let records = with_jobs(jobs, || -> Result<Vec<Record>> {
        // the gapped commutator residual does not depend on ε
        let shared = if cfg.commutator && ex.gap.is_some() {
            Some(commutator_residual(&ex, cfg, eps[0])?)
        } else {
            None
        };
        try_par_map(&eps, |&e| measure(&ex, cfg, e, metric, shared))
    })??;

    let mut failures = Vec::new();
    let check_adiabatic = enforces_adiabaticity(&ex.name);
    if !check_adiabatic {
        notes.push("projection is not differentiable; adiabaticity residual recorded but not enforced".into());
    }
    for r in &records {
        if check_adiabatic && !(r.adiab_resid <= ADIABATIC_TOL) {
            failures.push(format!("eps {:.3e}: adiabaticity residual {:.3e} > {ADIABATIC_TOL:e}", r.eps, r.adiab_resid));
        }
        if cfg.commutator && !(r.comm_resid <= COMMUTATOR_TOL) {
            failures.push(format!("eps {:.3e}: commutator residual {:.3e} > {COMMUTATOR_TOL:e}", r.eps, r.comm_resid));
        }
    }

    let values: Vec<f64> = records.iter().map(|r| r.sup_dev).collect();
    let fit = match ex.expectation {
        Expectation::Linear | Expectation::Rate(_) if records.len() >= MIN_FIT_POINTS => {
            let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.eps, r.sup_dev)).collect();
            match fit_slope(&pairs) {
                Ok(f) => Some(f),
                Err(e) => {
                    notes.push(format!("slope fit skipped: {e}"));
                    None
                }
            }
        }
        Expectation::Linear | Expectation::Rate(_) => {
            notes.push(format!("slope fit needs at least {MIN_FIT_POINTS} points"));
            None
        }
        _ => None,
    };
    let verdict = verdict(ex.expectation, &values, fit.as_ref());
    Ok(ExperimentReport {
        example: ex.name.clone(),
        params: ex.params.clone(),
        metric,
        grid: uniform_grid(0.0, 1.0, cfg.grid_points),
        records,
        fit,
        expectation: ex.expectation,
        verdict,
        invariant_failures: failures,
        notes,
    })
}

/// Rate the theory predicts for the slope plot: `1` for `O(ε)`, `r` for
/// `O(ε^r)`, nothing otherwise.
pub fn expected_slope(expect: Expectation) -> Option<f64> {
    match expect {
        Expectation::Linear => Some(1.0),
        Expectation::Rate(r) => Some(r),
        _ => None,
    }
}
