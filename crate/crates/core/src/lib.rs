//! Stationary distributions of finite-buffer Markov-modulated fluid queues
//! and of two-sided reflected Markov-modulated Brownian motion (MMBM).
//!
//! The MMBM on `[0, b]` is approached through a family of fluid queues with
//! doubled phase space. For each member the finite-buffer stationary law is
//! available in closed form ([`fluid`]); letting the fluid parameter go to
//! zero gives the MMBM density ([`limit`]), which is cross-checked against
//! an independent time-reversed representation, a birth-death
//! discretization ([`validation`]) and Monte Carlo ([`simulation`]).
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]
// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
#[macro_use]
extern crate std;

pub mod error;
pub mod fluid;
pub mod limit;
pub mod linalg;
pub mod model;
pub mod simulation;
pub mod validation;

pub use error::{Error, Result};
pub use fluid::{alt_solution, finite_buffer_solution, FiniteBufferSolution};
pub use limit::{cross_check, stationary_density, time_reversed_density, MmbmSolution, TimeReversedForm};
pub use model::{build_fluid_approximation, validate_model, FluidModel, MmbmModel, PhaseDistribution};
pub use simulation::{ks_distance, simulate_fluid, simulate_mmbm, EmpiricalLaw, SimConfig};
pub use validation::{discretization_oracle, expansion_check, lambda_sweep, SweepReport};
