use super::updates::{
    beam_aux, group_shrink, reflect_aux, reflected_terms, update_beamforming, update_reflection,
};
use super::{dual_objective, rate_weights, FollowerState};
use crate::scenario::{self, ChannelSet, ScenarioConfig};
use crate::{Error, Result, C64};
use nalgebra::DVector;

/// One row of the follower convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Dual-transform objective in bits after the iteration.
    pub objective: f64,
    /// Relative split residual `‖consensus − reflection‖ / max(1, ‖reflection‖)`.
    pub split_residual: f64,
}

/// Result of a follower best-response solve.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FollowerSolve {
    pub state: FollowerState,
    pub trace: Vec<IterationRecord>,
    /// Iterations actually run.
    pub inner_iterations: usize,
    /// Final dual-transform objective.
    pub objective: f64,
    /// Whether the objective change dropped below `tol_inner`.
    pub converged: bool,
    /// Whether the split residual was below `tol_admm` at exit.
    pub split_consistent: bool,
}

struct Engine<'a> {
    ch: &'a ChannelSet,
    cfg: &'a ScenarioConfig,
    price: f64,
    /// `false` pins the reflection to zero and runs the beam cycle alone.
    reflection_enabled: bool,
    st: FollowerState,
    /// Combined per-user channels at the current reflection.
    h: Vec<DVector<C64>>,
}

impl<'a> Engine<'a> {
    fn new(
        ch: &'a ChannelSet,
        cfg: &'a ScenarioConfig,
        price: f64,
        reflection_enabled: bool,
        warm: Option<FollowerState>,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(price.is_finite() && price >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "price must be finite and non-negative, got {price}"
            )));
        }
        if ch.num_users() != cfg.num_users
            || ch.num_antennas() != cfg.num_antennas
            || ch.num_elements() != cfg.num_elements()
        {
            return Err(Error::DimensionMismatch(format!(
                "channel set is {}x{} with {} elements, config wants {}x{} with {}",
                ch.num_antennas(),
                ch.num_users(),
                ch.num_elements(),
                cfg.num_antennas,
                cfg.num_users,
                cfg.num_elements()
            )));
        }
        let mut st = match warm {
            Some(state) => {
                if state.beamforming.shape() != (cfg.num_antennas, cfg.num_users)
                    || state.reflection.len() != cfg.num_elements()
                {
                    return Err(Error::DimensionMismatch(
                        "warm-start state does not match the scene dimensions".into(),
                    ));
                }
                state
            }
            None => FollowerState::init(ch, cfg),
        };
        if !reflection_enabled {
            st.reflection.fill(C64::new(0.0, 0.0));
            st.consensus.fill(C64::new(0.0, 0.0));
            st.multiplier.fill(C64::new(0.0, 0.0));
        }
        let h = scenario::combined_channel(ch, &st.reflection);
        Ok(Self {
            ch,
            cfg,
            price,
            reflection_enabled,
            st,
            h,
        })
    }

    fn bill(&self) -> f64 {
        self.price
            * self.cfg.balance_alpha
            * scenario::mixed_norm(&self.st.reflection, self.cfg.elements_per_module)
    }

    /// One full update cycle; returns the objective and split residual.
    fn step(&mut self) -> (f64, f64) {
        let noise = self.cfg.noise_power;

        // Nominal SINRs tighten the dual transform.
        let gammas = scenario::sinr(&self.h, &self.st.beamforming, noise);
        self.st.nominal_sinr = DVector::from_vec(gammas);
        let weights = rate_weights(&self.st.nominal_sinr);

        // Beam cycle: auxiliaries, then the power-constrained beam solve.
        self.st.beam_aux = beam_aux(&weights, &self.h, &self.st.beamforming, noise);
        let (w, lam) = update_beamforming(&weights, &self.st.beam_aux, &self.h, self.cfg.max_power);
        self.st.beamforming = w;
        self.st.power_multiplier = lam;

        // Reflection cycle: auxiliaries, coupled solve, shrink, multiplier.
        if self.reflection_enabled && self.ch.num_elements() > 0 {
            let (direct, reflected) = reflected_terms(self.ch, &self.st.beamforming);
            self.st.reflect_aux = reflect_aux(
                &weights,
                &self.st.reflection,
                &direct,
                &reflected,
                noise,
            );
            self.st.reflection = update_reflection(
                &weights,
                &self.st.reflect_aux,
                &direct,
                &reflected,
                &self.st.consensus,
                &self.st.multiplier,
                &self.st.modulus_multipliers,
                self.cfg.admm_penalty,
            );
            self.h = scenario::combined_channel(self.ch, &self.st.reflection);

            let n = self.cfg.elements_per_module;
            let threshold = self.price * self.cfg.balance_alpha;
            let penalty = self.cfg.admm_penalty;
            for s in 0..self.cfg.num_modules {
                let rows = s * n;
                let x = self.st.reflection.rows(rows, n) * C64::new(penalty, 0.0)
                    - self.st.multiplier.rows(rows, n);
                let block = group_shrink(&x.into_owned(), threshold, penalty);
                self.st.consensus.rows_mut(rows, n).copy_from(&block);
            }
            let gap = &self.st.consensus - &self.st.reflection;
            self.st.multiplier += gap * C64::new(penalty, 0.0);
        } else {
            self.h = scenario::combined_channel(self.ch, &self.st.reflection);
        }

        let objective =
            dual_objective(&self.st.nominal_sinr, &self.h, &self.st.beamforming, noise, self.bill());
        let residual = (&self.st.consensus - &self.st.reflection).norm()
            / self.st.reflection.norm().max(1.0);
        (objective, residual)
    }

    fn run(mut self) -> Result<FollowerSolve> {
        let mut trace = Vec::new();
        let mut previous = f64::NAN;
        let mut converged = false;
        let mut residual = 0.0;
        let mut objective = f64::NAN;
        let mut iterations = 0;

        for iteration in 1..=self.cfg.max_inner {
            let (obj, resid) = self.step();
            iterations = iteration;
            if !obj.is_finite() {
                return Err(Error::NonFinite {
                    iteration,
                    objective: obj,
                    summary: format!(
                        "M={} K={} elements={} price={} ‖w‖²={:.3e} ‖phi‖={:.3e} ‖multiplier‖={:.3e}",
                        self.ch.num_antennas(),
                        self.ch.num_users(),
                        self.ch.num_elements(),
                        self.price,
                        self.st.beamforming.norm_squared(),
                        self.st.reflection.norm(),
                        self.st.multiplier.norm()
                    ),
                });
            }
            trace.push(IterationRecord {
                iteration,
                objective: obj,
                split_residual: resid,
            });
            objective = obj;
            residual = resid;
            if iteration > 1 {
                let change = (obj - previous).abs();
                if change <= self.cfg.tol_inner * previous.abs().max(obj.abs()) + 1e-15 {
                    converged = true;
                    break;
                }
            }
            previous = obj;
        }

        let split_consistent = if self.reflection_enabled && self.ch.num_elements() > 0 {
            residual <= self.cfg.tol_admm
        } else {
            true
        };
        Ok(FollowerSolve {
            state: self.st,
            trace,
            inner_iterations: iterations,
            objective,
            converged,
            split_consistent,
        })
    }
}

/// Best-respond to `price`: joint beam and reflection optimization from
/// `warm` (or the cold-start iterate) until the objective settles.
pub fn solve_follower(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    price: f64,
    warm: Option<FollowerState>,
) -> Result<FollowerSolve> {
    Engine::new(ch, cfg, price, true, warm)?.run()
}

/// Beam-only solve with the reflection pinned to zero: the no-surface
/// baseline, and the exact follower behaviour when no modules exist.
pub fn solve_beams_only(ch: &ChannelSet, cfg: &ScenarioConfig) -> Result<FollowerSolve> {
    Engine::new(ch, cfg, 0.0, false, None)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_channels, trial_rng, utilities};
    use approx::assert_relative_eq;

    #[test]
    fn beams_only_single_user_matches_matched_filter_rate() {
        // K = 1: the beam cycle must converge to full-power matched filtering,
        // whose rate is log2(1 + p·‖h_d‖²/σ²). The power bisection resolves
        // the budget to 1e-8 relative, so the objective cannot settle tighter.
        let mut cfg = ScenarioConfig::uniform_gain(3, 1, 0, 1);
        cfg.tol_inner = 1e-8;
        let ch = generate_channels(&cfg, &mut trial_rng(2, 0)).unwrap();
        let solve = solve_beams_only(&ch, &cfg).unwrap();
        let expect = (1.0 + cfg.max_power * ch.bs_user[0].norm_squared() / cfg.noise_power).log2();
        assert_relative_eq!(solve.objective, expect, max_relative = 1e-6);
        assert!(solve.converged);
        assert!(
            scenario::power_violation(&solve.state.beamforming, cfg.max_power)
                <= crate::tol::FEAS_REL
        );
    }

    #[test]
    fn beams_only_objective_never_decreases() {
        let cfg = ScenarioConfig::uniform_gain(4, 3, 0, 1);
        let ch = generate_channels(&cfg, &mut trial_rng(8, 0)).unwrap();
        let solve = solve_beams_only(&ch, &cfg).unwrap();
        // slack sits above the power bisection's 1e-8 resolution
        for pair in solve.trace.windows(2) {
            assert!(
                pair[1].objective >= pair[0].objective - 1e-7 * pair[0].objective.abs().max(1.0),
                "objective dropped: {} -> {}",
                pair[0].objective,
                pair[1].objective
            );
        }
    }

    #[test]
    fn zero_modules_solve_equals_beams_only() {
        let cfg = ScenarioConfig::uniform_gain(3, 2, 0, 2);
        let ch = generate_channels(&cfg, &mut trial_rng(5, 0)).unwrap();
        let with_price = solve_follower(&ch, &cfg, 3.0, None).unwrap();
        let baseline = solve_beams_only(&ch, &cfg).unwrap();
        assert_eq!(with_price.objective, baseline.objective);
        assert_eq!(with_price.state.beamforming, baseline.state.beamforming);
    }

    #[test]
    fn prohibitive_price_switches_every_module_off() {
        // At an absurd price the billed consensus must be exactly zero. The
        // raw iterate may keep chasing the rate gradient against the slowly
        // integrating multiplier, so only the consensus side is asserted.
        let cfg = ScenarioConfig::uniform_gain(2, 2, 2, 2);
        let ch = generate_channels(&cfg, &mut trial_rng(3, 0)).unwrap();
        let solve = solve_follower(&ch, &cfg, 1e6, None).unwrap();
        assert_eq!(solve.state.consensus.norm(), 0.0);
        let score = utilities(&ch, &solve.state.beamforming, &solve.state.consensus, 1e6, &cfg);
        assert_relative_eq!(score.leader, 0.0);
        assert_eq!(score.triggered, 0);
    }

    #[test]
    fn vanishing_budget_sends_utility_to_zero() {
        let mut cfg = ScenarioConfig::uniform_gain(2, 2, 2, 2);
        cfg.max_power = 1e-9;
        cfg.max_inner = 800;
        let ch = generate_channels(&cfg, &mut trial_rng(6, 0)).unwrap();
        let solve = solve_follower(&ch, &cfg, 1.0, None).unwrap();
        let score = utilities(&ch, &solve.state.beamforming, &solve.state.consensus, 1.0, &cfg);
        assert!(score.sum_rate < 1e-6, "sum rate {}", score.sum_rate);
        assert!(score.follower.abs() < 1e-6, "utility {}", score.follower);
        assert!(solve.state.consensus.norm() < 1e-6);
    }

    #[test]
    fn iteration_cap_is_respected() {
        let mut cfg = ScenarioConfig::uniform_gain(2, 2, 2, 2);
        cfg.max_inner = 3;
        let ch = generate_channels(&cfg, &mut trial_rng(1, 0)).unwrap();
        let solve = solve_follower(&ch, &cfg, 0.5, None).unwrap();
        assert_eq!(solve.inner_iterations, 3);
        assert_eq!(solve.trace.len(), 3);
    }

    #[test]
    fn warm_start_requires_matching_shapes() {
        let cfg = ScenarioConfig::uniform_gain(2, 2, 2, 2);
        let ch = generate_channels(&cfg, &mut trial_rng(1, 0)).unwrap();
        let other = ScenarioConfig::uniform_gain(3, 2, 2, 2);
        let other_ch = generate_channels(&other, &mut trial_rng(1, 0)).unwrap();
        let warm = FollowerState::init(&other_ch, &other);
        assert!(matches!(
            solve_follower(&ch, &cfg, 1.0, Some(warm)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn negative_price_is_rejected() {
        let cfg = ScenarioConfig::uniform_gain(2, 2, 1, 2);
        let ch = generate_channels(&cfg, &mut trial_rng(1, 0)).unwrap();
        assert!(solve_follower(&ch, &cfg, -1.0, None).is_err());
    }

    #[test]
    fn feasibility_holds_along_the_whole_solve() {
        for seed in 0..5 {
            let cfg = ScenarioConfig::uniform_gain(3, 3, 3, 2);
            let ch = generate_channels(&cfg, &mut trial_rng(seed, 0)).unwrap();
            let solve = solve_follower(&ch, &cfg, 0.8, None).unwrap();
            assert!(
                scenario::power_violation(&solve.state.beamforming, cfg.max_power)
                    <= crate::tol::FEAS_REL
            );
            assert!(scenario::modulus_violation(&solve.state.reflection) <= crate::tol::FEAS_REL);
        }
    }
}
