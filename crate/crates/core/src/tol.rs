//! Named numeric tolerances shared across the crate.
//!
//! Every constant records why its value is what it is; tests use these
//! constants rather than re-inventing ad-hoc thresholds.

/// Relative threshold below which a module's reflection norm counts as
/// switched off. Relative to the largest module norm so the classification is
/// scale-free: group shrinkage produces exact zeros, while active modules sit
/// many orders of magnitude above `1e-6` times the maximum.
pub const TRIGGER_REL: f64 = 1e-6;

/// Relative feasibility slack accepted on the transmit-power budget and on
/// per-element reflection magnitudes. Both constraints are enforced by
/// construction (bisection exits on the feasible side, magnitudes are
/// clipped), so observed violations are pure floating-point noise.
pub const FEAS_REL: f64 = 1e-8;

/// Relative tolerance on delivered transmit power for the power-multiplier
/// bisection. Tight enough that the residual never shows up at the `FEAS_REL`
/// feasibility check, loose enough to converge in well under the step cap.
pub const POWER_BISECT_REL: f64 = 1e-8;

/// Cap on bisection steps for the power multiplier. The bracket halves each
/// step, so 100 steps shrink it by 2^-100 — reached only if the power curve
/// is numerically flat, in which case the feasible endpoint is returned.
pub const POWER_BISECT_MAX_STEPS: usize = 100;

/// Absolute floor under which a shrinkage-input norm is treated as exactly
/// zero when deciding whether any reflection demand exists at all. Far below
/// any physically meaningful norm; only a fully dark surface lands here.
pub const DEMAND_FLOOR: f64 = 1e-300;
