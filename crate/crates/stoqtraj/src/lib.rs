//! Trajectory-based simulation of open quantum systems driven by stochastic
//! Hamiltonians.
//!
//! The crate provides four trajectory engines and the deterministic oracles
//! they are validated against:
//!
//! * [`ito`] — Euler–Maruyama and Milstein integration of the normalized
//!   linear stochastic Schrödinger equation (white noise, general coupling
//!   operator `B`),
//! * [`strat`] — exact per-step unitaries `exp(-i H dt - i σ R ΔW)` for the
//!   Stratonovich form (Hermitian `R`), the scheme that maps onto quantum
//!   gates,
//! * [`rode`] — random ODEs `dψ/dt = -i (H + Z_t R) ψ` with an
//!   Ornstein–Uhlenbeck process `Z_t`,
//! * [`master`] — Lindblad, white-noise double-commutator, and
//!   time-convolutionless (Redfield-type) master equations integrated with
//!   classical RK4, plus trajectory-level Liouville right-hand sides.
//!
//! [`ensemble`] runs any engine over `N` reproducible trajectories in
//! parallel and averages the densities; [`circuit`] emits the equivalent
//! single-qubit gate sequences and verifies them against the unitary steps.
//! Everything is deterministic given a master seed: trajectory `i` of seed
//! `s` draws from its own counter-derived stream no matter how work is
//! scheduled across threads.

pub mod circuit;
pub mod ensemble;
mod error;
pub mod ito;
pub mod linops;
pub mod master;
pub mod noise;
pub mod rode;
pub mod strat;

pub use error::{Error, Result};
pub use linops::{DensityMatrix, Operator, StateVector};
pub use noise::{NoiseSpec, RngStream, WienerPath};
