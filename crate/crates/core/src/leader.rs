//! Operator-side pricing for reflection modules.
//!
//! The operator charges per unit of mixed norm that the base station keeps
//! after group shrinkage. Holding the shrink inputs `x_s` fixed, a module
//! survives a charge rate `u` exactly when `‖x_s‖ > u`, and then contributes
//! `(‖x_s‖ − u) / penalty` to the billed norm, so revenue is the piecewise
//! quadratic evaluated by [`leader_utility`]. [`optimal_price`] maximizes it
//! in closed form; the charge rate here is the shrink threshold itself, i.e.
//! the posted per-norm price times the balance weight.

use crate::{Error, Result};
use rand::Rng;

/// A charge rate together with the revenue the demand model predicts for it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriceQuote {
    /// Revenue-maximizing charge rate on the shrink-threshold scale.
    pub price: f64,
    /// Predicted revenue at that rate.
    pub revenue: f64,
}

/// Revenue when charging `price` per unit of post-shrink mixed norm, given
/// the block norms `x_norms` of the shrink inputs and the split `penalty`.
pub fn leader_utility(price: f64, x_norms: &[f64], penalty: f64) -> f64 {
    let mut total = 0.0;
    for &n in x_norms {
        if n > price {
            total += (n - price) * price / penalty;
        }
    }
    total
}

/// Revenue-maximizing charge rate for shrink-input norms `x_norms`.
///
/// Each candidate optimum is either a kink (a block norm, where a module
/// switches off) or the vertex of the parabola formed by one suffix-truncated
/// subset of modules, clamped to the interval where that subset is active.
/// Errors with [`Error::NoReflectionDemand`] when no block has positive norm.
pub fn optimal_price(x_norms: &[f64], penalty: f64) -> Result<PriceQuote> {
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "penalty must be finite and positive, got {penalty}"
        )));
    }
    let mut norms: Vec<f64> = x_norms.iter().copied().filter(|n| *n > 0.0).collect();
    if norms.is_empty() {
        return Err(Error::NoReflectionDemand);
    }
    norms.sort_by(|a, b| b.partial_cmp(a).expect("norms must be comparable"));

    let mut best = PriceQuote {
        price: 0.0,
        revenue: 0.0,
    };
    let mut consider = |price: f64| {
        let revenue = leader_utility(price, &norms, penalty);
        if revenue > best.revenue {
            best = PriceQuote { price, revenue };
        }
    };
    let mut prefix = 0.0;
    for (t, &upper) in norms.iter().enumerate() {
        prefix += upper;
        // On [lower, upper) exactly the t+1 largest blocks stay active.
        let lower = norms.get(t + 1).copied().unwrap_or(0.0);
        let vertex = prefix / (2.0 * (t + 1) as f64);
        consider(vertex.clamp(lower, upper));
        consider(upper);
        consider(lower);
    }
    Ok(best)
}

/// Uniform draw from `(0, max_price]`, the benchmark pricing policy.
pub fn random_price<R: Rng + ?Sized>(rng: &mut R, max_price: f64) -> f64 {
    max_price * (1.0 - rng.gen::<f64>())
}
