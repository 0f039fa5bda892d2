//! Scene description: dimensions, geometry, channel realizations and the
//! utility bookkeeping both players are scored on.
//!
//! Conventions used throughout the crate:
//!
//! * `H` (`bs_irs`) is the `S·N × M` channel from the base-station array to
//!   the stacked surface elements; `g_k` (`irs_user`) and `h_{d,k}`
//!   (`bs_user`) are the per-user surface and direct channels.
//! * The reflection state is a stacked vector `phi` of length `S·N` holding
//!   the *conjugated* diagonal of the reflection matrix, so the effective
//!   downlink channel of user `k` is `h_k = h_{d,k} + H^H (phi ⊙ g_k)` and
//!   per-module norms of `phi` equal per-module Frobenius norms of the
//!   reflection matrix.
//! * Rates are in bits; the follower pays `price · balance_alpha` per unit of
//!   summed module norm, which is exactly the leader's revenue.

mod channel;
mod config;

pub use channel::{generate_channels, trial_rng, ChannelSet};
pub use config::{dbm_to_watts, ScenarioConfig};

use crate::{tol, C64};
use nalgebra::{DMatrix, DVector};

/// Effective downlink channels `h_k = h_{d,k} + H^H (phi ⊙ g_k)` for all
/// users, as column vectors of length `M`.
///
/// `phi` must have length `S·N`; with no surface elements this reduces to the
/// direct channels.
pub fn combined_channel(ch: &ChannelSet, phi: &DVector<C64>) -> Vec<DVector<C64>> {
    assert_eq!(
        phi.len(),
        ch.num_elements(),
        "reflection vector length must match element count"
    );
    ch.bs_user
        .iter()
        .zip(&ch.irs_user)
        .map(|(direct, g)| {
            if phi.is_empty() {
                direct.clone()
            } else {
                direct + ch.bs_irs.ad_mul(&phi.component_mul(g))
            }
        })
        .collect()
}

/// Per-user SINRs for effective channels `h` and beamforming matrix `w`
/// (columns are per-user beams): signal `|h_k^H w_k|²` over interference from
/// all other beams plus `noise_power`.
pub fn sinr(h: &[DVector<C64>], w: &DMatrix<C64>, noise_power: f64) -> Vec<f64> {
    let k = h.len();
    assert_eq!(w.ncols(), k, "one beam per user");
    (0..k)
        .map(|user| {
            let mut signal = 0.0;
            let mut interference = 0.0;
            for j in 0..k {
                let level = h[user].dotc(&w.column(j).into_owned()).norm_sqr();
                if j == user {
                    signal = level;
                } else {
                    interference += level;
                }
            }
            signal / (interference + noise_power)
        })
        .collect()
}

/// Euclidean norm of each length-`n` module block of `phi`.
pub fn module_norms(phi: &DVector<C64>, elements_per_module: usize) -> Vec<f64> {
    assert!(elements_per_module > 0, "modules cannot be empty");
    assert_eq!(phi.len() % elements_per_module, 0, "length must split into modules");
    (0..phi.len() / elements_per_module)
        .map(|s| {
            phi.rows(s * elements_per_module, elements_per_module)
                .norm()
        })
        .collect()
}

/// Group norm `Σ_s ‖phi_s‖₂`: the quantity reflection amplitude is billed on.
pub fn mixed_norm(phi: &DVector<C64>, elements_per_module: usize) -> f64 {
    module_norms(phi, elements_per_module).iter().sum()
}

/// Number of modules whose norm exceeds [`tol::TRIGGER_REL`] relative to the
/// largest module norm. A fully dark surface triggers nothing.
pub fn triggered_count(norms: &[f64]) -> usize {
    let max = norms.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0;
    }
    norms.iter().filter(|&&x| x > tol::TRIGGER_REL * max).count()
}

/// Scores for one strategy profile: what each player takes home.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Utilities {
    /// Follower utility: sum rate minus the reflection bill.
    pub follower: f64,
    /// Leader utility: the reflection bill, `price · balance_alpha · Σ‖phi_s‖`.
    pub leader: f64,
    /// Sum of per-user rates, bits per channel use.
    pub sum_rate: f64,
    /// Individual user rates `log2(1 + sinr_k)`.
    pub per_user_rates: Vec<f64>,
    /// Modules counted as switched on.
    pub triggered: usize,
}

/// Score a strategy profile `(w, phi)` under `price`. By construction
/// `follower + leader == sum_rate` exactly.
pub fn utilities(
    ch: &ChannelSet,
    w: &DMatrix<C64>,
    phi: &DVector<C64>,
    price: f64,
    cfg: &ScenarioConfig,
) -> Utilities {
    let h = combined_channel(ch, phi);
    let per_user_rates: Vec<f64> = sinr(&h, w, cfg.noise_power)
        .iter()
        .map(|g| (1.0 + g).log2())
        .collect();
    let sum_rate: f64 = per_user_rates.iter().sum();
    let norms = module_norms(phi, cfg.elements_per_module);
    let bill = price * cfg.balance_alpha * norms.iter().sum::<f64>();
    Utilities {
        follower: sum_rate - bill,
        leader: bill,
        sum_rate,
        per_user_rates,
        triggered: triggered_count(&norms),
    }
}

/// Relative overshoot of the transmit-power budget, `max(0, ‖w‖²−p)/p`.
pub fn power_violation(w: &DMatrix<C64>, max_power: f64) -> f64 {
    ((w.norm_squared() - max_power) / max_power).max(0.0)
}

/// Largest per-element reflection-magnitude overshoot, `max_i (|phi_i| − 1)⁺`.
pub fn modulus_violation(phi: &DVector<C64>) -> f64 {
    phi.iter().map(|z| (z.norm() - 1.0).max(0.0)).fold(0.0, f64::max)
}
