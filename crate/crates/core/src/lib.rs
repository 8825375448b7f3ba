//! Finite-dimensional laboratory for adiabatic theorems.
//!
//! Modules, bottom-up: [`matrixkit`] (dense complex kernels), [`opfamily`]
//! (time-dependent families and the example registry), [`spectral`]
//! (projections, resolvent probes, gaps), [`evolve`] (evolution systems),
//! [`commutator`] (solvers of `BA − AB = [P', P]` and its approximate
//! variant), [`openq`] (Lindblad generators), [`switching`] (Gell-Mann–Low)
//! and [`harness`] (ε-sweeps, fits, reports).

pub mod error;
pub mod commutator;
pub mod evolve;
pub mod harness;
pub mod matrixkit;
pub mod openq;
pub mod opfamily;
pub mod spectral;
pub mod switching;
pub mod util;

pub use error::{Error, Result};
