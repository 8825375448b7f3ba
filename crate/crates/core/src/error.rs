use num_complex::Complex64;
use thiserror::Error;

/// Every failure the library can report. Variants carry enough context to
/// locate the offending input without a debugger.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is singular to tolerance: pivot {pivot:.3e} in column {column}")]
    Singular { pivot: f64, column: usize },
    #[error("matrix exponential out of range: 1-norm {norm:.3e} exceeds {limit:.1e}")]
    ExpmRange { norm: f64, limit: f64 },
    #[error("schur reordering failed: eigenvalues {selected} (selected) and {other} collide")]
    SchurCollision { selected: Complex64, other: Complex64 },
    #[error("eigenvalue solver did not converge")]
    EigenSolver,
    #[error("unknown example `{0}`")]
    UnknownExample(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("invariant `{name}` violated: {detail}")]
    Invariant { name: String, detail: String },
    #[error("contour touches the spectrum: sigma_min {sigma_min:.3e} at z = {z}")]
    ContourTouchesSpectrum { z: Complex64, sigma_min: f64 },
    #[error("riesz quadrature did not stabilise within {nodes} nodes (last change {change:.3e})")]
    QuadratureCap { nodes: usize, change: f64 },
    #[error("eigenvalue {other} lies within twice the cluster radius of {lambda}")]
    ClusterAmbiguity { lambda: Complex64, other: Complex64 },
    #[error("rank decision unstable: singular value {value:.3e} within a factor 10 of threshold {threshold:.3e}")]
    RankAmbiguity { value: f64, threshold: f64 },
    #[error("family lacks lambda/alpha/N structure required for the M0 check")]
    MissingStructure,
    #[error("ray leaves the resolvent set at t = {t}, delta = {delta:.3e}")]
    RayHitsSpectrum { t: f64, delta: f64 },
    #[error("step size underflow at t = {t}: required step {step:.3e}; use a larger epsilon or a smaller operator norm")]
    Stiffness { t: f64, step: f64 },
    #[error("time grids do not match")]
    GridMismatch,
    #[error("gap {gap:.3e} too small for contour quadrature")]
    GapTooSmall { gap: f64 },
    #[error("projections overlap: |P_{i} P_{j}| = {norm:.3e}")]
    ProjectionOverlap { i: usize, j: usize, norm: f64 },
    #[error("curves {i} and {j} collide on {fraction:.0}% of the grid")]
    CurveCollision { i: usize, j: usize, fraction: f64 },
    #[error("weak dephasing violated: |sum B B* - sum B* B| = {0:.3e}")]
    NotWeaklyDephasing(f64),
    #[error("hamiltonian is not hermitian: |H - H*| = {0:.3e}")]
    NotHermitian(f64),
    #[error("operator is not skew-hermitian: |A + A*| = {0:.3e}")]
    NotSkewHermitian(f64),
    #[error("denominator {0} too close to zero or to the branch cut")]
    Denominator(Complex64),
    #[error("vector is not in the range of the eigenprojection (distance {0:.3e})")]
    OutsideRange(f64),
    #[error("eigenprojection moved by {0:.3} >= 1 along the switching path; multi-step switching is not supported")]
    ProjectionJump(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("empty epsilon grid")]
    EmptyGrid,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
