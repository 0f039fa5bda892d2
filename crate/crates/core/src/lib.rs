//! Solver library for a two-level resource-allocation game on a downlink
//! assisted by a reconfigurable reflecting surface.
//!
//! A base station (the follower) serves `K` single-antenna users with `M`
//! transmit antennas and may rent reflection modules from a surface operator
//! (the leader). The surface has `S` modules of `N` elements each. Renting is
//! priced per unit of reflection amplitude: the operator announces a price,
//! the base station best-responds with joint transmit beamforming and a
//! group-sparse reflection configuration (unused modules are switched off
//! exactly), and the operator re-prices against the observed demand.
//!
//! Crate layout:
//!
//! * [`scenario`] — configuration, channel generation, SINR and utilities.
//! * [`follower`] — the base-station side: fractional-programming beamforming
//!   and an ADMM splitting with a group-shrinkage step for the reflection.
//! * [`leader`] — closed-form pricing against piecewise-parabolic revenue.
//! * [`game`] — the alternating best-response loop and per-scheme outcomes.
//! * [`sweep`] — deterministic Monte-Carlo sweeps with CSV aggregation.

pub mod error;
pub mod follower;
pub mod game;
pub mod leader;
pub mod scenario;
pub mod sweep;
pub mod tol;

pub use error::Error;

/// Convenience alias used throughout: double-precision complex scalar.
pub type C64 = num_complex::Complex<f64>;

/// Result alias for fallible operations in this crate.
pub type Result<T> = std::result::Result<T, Error>;
