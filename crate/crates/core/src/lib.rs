//! Numerical laboratory for Ruelle probability cascades and the Parisi functional.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and, for the Monte Carlo parts, of an explicit
//! `u64` seed. IO, the command line and parallel drivers live in the
//! `rpclab` companion crate.
//!
//! Module map:
//!
//! * [`measures`]: atomic order parameters `x` on `[0,1]`, covariance
//!   functions `g`, the `L¹(g′dq)` metric, dominance and mass transport.
//! * [`parisi`]: the recursive Gaussian-smoothing solver for `ψ_q` and the
//!   Parisi functional, including the singular case `x(q_k) = 1, q_k < 1`.
//! * [`cascade`]: REM / GREM samplers, cavity fields, the Bolthausen–Sznitman
//!   partition chain and Monte Carlo estimates of cascade functionals.
//! * [`backward`]: tilted (backward) field densities, conditional means and
//!   the exact first and second derivatives built from them.
//! * [`variational`]: the `G_{β,h}` functional, self-consistency, the
//!   Almeida–Thouless boundary, minimization over k-atom measures and a
//!   brute-force finite-N SK oracle.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backward;
pub mod cascade;
mod error;
pub mod grid;
pub mod measures;
pub mod parisi;
pub mod quadrature;
pub mod stats;
pub mod variational;

pub use error::{Error, Result};
pub use measures::{AtomicMeasure, CovarianceFunction};
pub use parisi::{BoundaryFunction, GridSpec, PsiSolution};
