//! The base-station side of the game: best-respond to an announced
//! reflection price with joint transmit beamforming and a group-sparse
//! reflection configuration.
//!
//! The sum-rate objective is handled with two standard fractional-programming
//! moves — a Lagrangian dual transform introducing per-user nominal SINRs,
//! then a quadratic transform introducing one complex auxiliary per user for
//! the beam step (`beam_aux`) and one for the reflection step
//! (`reflect_aux`). The per-module norm bill is split off by ADMM: the
//! reflection vector `phi` is duplicated into a `consensus` copy that absorbs
//! the bill through block soft-thresholding, with a running `multiplier`
//! tying the copies together.
//!
//! All rate bookkeeping is in bits. The paper-style transforms are stated in
//! nats; carrying the `1/ln 2` into the rate weights (see [`rate_weights`])
//! keeps every sub-step the exact maximizer of the bit-scale objective, which
//! the perturbation tests in this crate check directly.

mod solve;
mod updates;

pub use solve::{solve_beams_only, solve_follower, FollowerSolve, IterationRecord};
pub use updates::{
    beam_aux, group_shrink, reflect_aux, reflected_terms, solve_reflection, update_beamforming,
    update_reflection,
};

use crate::scenario::{self, ChannelSet, ScenarioConfig};
use crate::C64;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::LN_2;

/// Full iterate of the follower solver.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FollowerState {
    /// Transmit beamforming matrix, `M × K`; columns are per-user beams.
    pub beamforming: DMatrix<C64>,
    /// Reflection vector `phi`, length `S·N`, per-element magnitude ≤ 1.
    pub reflection: DVector<C64>,
    /// Shrinkage copy `theta` of the reflection vector; exact zero blocks
    /// are modules the follower declines to rent.
    pub consensus: DVector<C64>,
    /// Scaled ADMM multiplier tying `consensus` to `reflection`.
    pub multiplier: DVector<C64>,
    /// Nominal per-user SINRs from the dual transform; non-negative.
    pub nominal_sinr: DVector<f64>,
    /// Quadratic-transform auxiliaries for the beam step.
    pub beam_aux: DVector<C64>,
    /// Quadratic-transform auxiliaries for the reflection step.
    pub reflect_aux: DVector<C64>,
    /// Per-element magnitude-constraint multipliers. Held at zero: the
    /// constraint is enforced by clipping after the unconstrained solve, but
    /// the reflection update accepts arbitrary values so the general formula
    /// stays testable.
    pub modulus_multipliers: DVector<f64>,
    /// Multiplier of the transmit-power constraint from the last beam update.
    pub power_multiplier: f64,
}

impl FollowerState {
    /// Cold-start iterate: full reflection (`phi = 1`), consensus aligned,
    /// zero multipliers, and matched-filter beams splitting the power budget
    /// equally across users.
    pub fn init(ch: &ChannelSet, cfg: &ScenarioConfig) -> Self {
        let elements = ch.num_elements();
        let k = ch.num_users();
        let m = ch.num_antennas();
        let phi = DVector::from_element(elements, C64::new(1.0, 0.0));
        let h = scenario::combined_channel(ch, &phi);
        let per_user = (cfg.max_power / k as f64).sqrt();
        let mut w = DMatrix::zeros(m, k);
        for (j, hk) in h.iter().enumerate() {
            let norm = hk.norm();
            if norm > 0.0 {
                w.set_column(j, &(hk * C64::new(per_user / norm, 0.0)));
            }
        }
        Self {
            beamforming: w,
            consensus: phi.clone(),
            reflection: phi,
            multiplier: DVector::zeros(elements),
            nominal_sinr: DVector::zeros(k),
            beam_aux: DVector::zeros(k),
            reflect_aux: DVector::zeros(k),
            modulus_multipliers: DVector::zeros(elements),
            power_multiplier: 0.0,
        }
    }
}

/// Per-user rate weights `(1 + nominal_sinr) / ln 2`: the factor every
/// quadratic-transform step carries so it maximizes rates measured in bits.
pub fn rate_weights(nominal_sinr: &DVector<f64>) -> Vec<f64> {
    nominal_sinr.iter().map(|a| (1.0 + a) / LN_2).collect()
}

/// Inputs to the block soft-thresholding step: per module,
/// `x_s = penalty · phi_s − multiplier_s` and its norm. The leader prices
/// against exactly these norms.
#[derive(Debug, Clone)]
pub struct ShrinkageInputs {
    pub blocks: Vec<DVector<C64>>,
    pub norms: Vec<f64>,
}

/// Recompute the shrinkage inputs of `state` under `penalty`.
pub fn shrinkage_inputs(
    state: &FollowerState,
    penalty: f64,
    elements_per_module: usize,
) -> ShrinkageInputs {
    assert!(elements_per_module > 0);
    let len = state.reflection.len();
    assert_eq!(len % elements_per_module, 0);
    let mut blocks = Vec::with_capacity(len / elements_per_module);
    let mut norms = Vec::with_capacity(blocks.capacity());
    for s in 0..len / elements_per_module {
        let rows = s * elements_per_module;
        let x = state.reflection.rows(rows, elements_per_module) * C64::new(penalty, 0.0)
            - state.multiplier.rows(rows, elements_per_module);
        norms.push(x.norm());
        blocks.push(x);
    }
    ShrinkageInputs { blocks, norms }
}

/// Dual-transform objective in bits at nominal SINRs `nominal_sinr`, actual
/// SINRs derived from `(h, w, noise)`, minus the reflection bill.
///
/// With `nominal_sinr` set to the actual SINRs this telescopes exactly to
/// `Σ log2(1 + sinr_k) − bill`, the follower's utility.
pub fn dual_objective(
    nominal_sinr: &DVector<f64>,
    h: &[DVector<C64>],
    w: &DMatrix<C64>,
    noise_power: f64,
    bill: f64,
) -> f64 {
    let gammas = scenario::sinr(h, w, noise_power);
    let rate_part: f64 = nominal_sinr
        .iter()
        .zip(&gammas)
        .map(|(&a, &g)| (1.0 + a).ln() - a + (1.0 + a) * g / (1.0 + g))
        .sum();
    rate_part / LN_2 - bill
}

/// Quadratic-transform surrogate the beam cycle maximizes: for each user,
/// `2·√weight·Re(conj(beam_aux)·h^H w) − |beam_aux|²·(Σ_j |h^H w_j|² + noise)`.
pub fn beam_cycle_objective(
    weights: &[f64],
    aux: &DVector<C64>,
    h: &[DVector<C64>],
    w: &DMatrix<C64>,
    noise_power: f64,
) -> f64 {
    let k = h.len();
    let mut total = 0.0;
    for user in 0..k {
        let own = h[user].dotc(&w.column(user));
        let mut denom = noise_power;
        for j in 0..k {
            denom += h[user].dotc(&w.column(j)).norm_sqr();
        }
        total += 2.0 * weights[user].sqrt() * (aux[user].conj() * own).re
            - aux[user].norm_sqr() * denom;
    }
    total
}

/// Augmented-Lagrangian surrogate the reflection cycle maximizes, evaluated
/// at `(phi, consensus, multiplier)` with fixed auxiliaries and beams.
///
/// `direct_terms[k][j]` and `reflected_terms[k][j]` are the per-user received
/// contributions of beam `j` over the direct path and per surface element
/// (see [`reflected_terms`]); `bill_rate` is `price · balance_alpha`.
#[allow(clippy::too_many_arguments)]
pub fn reflect_cycle_objective(
    weights: &[f64],
    aux: &DVector<C64>,
    direct_terms: &[Vec<C64>],
    reflected: &[Vec<DVector<C64>>],
    phi: &DVector<C64>,
    consensus: &DVector<C64>,
    multiplier: &DVector<C64>,
    penalty: f64,
    bill_rate: f64,
    noise_power: f64,
    elements_per_module: usize,
) -> f64 {
    let k = weights.len();
    let mut total = 0.0;
    for user in 0..k {
        let own = direct_terms[user][user] + phi.dotc(&reflected[user][user]);
        let mut denom = noise_power;
        for j in 0..k {
            denom += (direct_terms[user][j] + phi.dotc(&reflected[user][j])).norm_sqr();
        }
        total += 2.0 * weights[user].sqrt() * (aux[user].conj() * own).re
            - aux[user].norm_sqr() * denom;
    }
    let gap = consensus - phi;
    total -= bill_rate * scenario::mixed_norm(consensus, elements_per_module);
    total -= multiplier.dotc(&gap).re;
    total -= 0.5 * penalty * gap.norm_squared();
    total
}
