//! End-to-end game runs: the alternating price/best-response loop and the
//! two benchmark schemes it is compared against.
//!
//! The operator opens at `initial_price`, observes the base station's best
//! response, and reprices against the shrink inputs of that response until
//! its revenue settles. Reported figures are always recomputed from the
//! final `(beams, reflection, price)` triple via [`scenario::utilities`],
//! never read out of solver internals. The reflection a run reports is the
//! clipped iterate with priced-out modules zeroed, so it is exactly
//! group-sparse and exactly modulus-feasible.

use crate::follower::{
    shrinkage_inputs, solve_beams_only, solve_follower, FollowerSolve, FollowerState,
};
use crate::leader::{optimal_price, random_price};
use crate::scenario::{self, ChannelSet, ScenarioConfig, Utilities};
use crate::tol::DEMAND_FLOOR;
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use std::fmt;
use std::str::FromStr;

/// Which pricing policy produced an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Operator reprices optimally against the observed best response.
    Stackelberg,
    /// Operator posts one uniform random price.
    RandomPricing,
    /// No reflecting surface; beams only.
    DirectLink,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [
        SchemeKind::Stackelberg,
        SchemeKind::RandomPricing,
        SchemeKind::DirectLink,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Stackelberg => "stackelberg",
            SchemeKind::RandomPricing => "random-pricing",
            SchemeKind::DirectLink => "direct-link",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| format!("unknown scheme {s:?}; expected stackelberg, random-pricing, or direct-link"))
    }
}

/// Follower-side local-optimality probe at a returned outcome.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EquilibriumReport {
    /// Number of random feasible perturbations tried.
    pub follower_checks: usize,
    /// Largest follower-utility improvement any perturbation achieved
    /// (negative when every perturbation lost utility).
    pub follower_best_gain: f64,
    /// Filled by [`leader_grid_report`] when a price-grid scan was run.
    pub leader_grid: Option<LeaderGridReport>,
}

/// Leader-side grid scan: revenue of the best fixed price on a grid, with
/// the follower's reaction recomputed at every grid point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LeaderGridReport {
    pub grid_points: usize,
    pub best_price: f64,
    pub best_revenue: f64,
    pub equilibrium_revenue: f64,
}

/// Everything a scheme run reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GameOutcome {
    pub scheme: SchemeKind,
    /// Final posted per-norm price.
    pub price: f64,
    pub beamforming: DMatrix<C64>,
    /// Group-sparse, modulus-feasible reflection actually billed.
    pub reflection: DVector<C64>,
    pub utilities: Utilities,
    pub outer_iterations: usize,
    /// Inner iterations summed over every follower solve in the run.
    pub inner_iterations: usize,
    /// Final follower solve met its objective tolerance.
    pub inner_converged: bool,
    /// Price loop met the revenue tolerance (always true for single-solve schemes).
    pub outer_converged: bool,
    /// Consensus and reflection agreed at exit.
    pub split_consistent: bool,
    /// Demand died out and the run fell back to beams only.
    pub direct_fallback: bool,
    /// Raw final solver state, for warm starts and diagnostics.
    pub state: FollowerState,
    pub equilibrium: Option<EquilibriumReport>,
}

/// Knobs for [`run_stackelberg_with`].
#[derive(Debug, Clone, Copy)]
pub struct StackelbergOptions {
    /// Random feasible perturbations for the equilibrium report; 0 skips it.
    pub perturbation_checks: usize,
}

impl Default for StackelbergOptions {
    fn default() -> Self {
        Self {
            perturbation_checks: 100,
        }
    }
}

/// Reserved perturbation stream, clear of the per-trial streams `2t`, `2t+1`.
const PERTURBATION_STREAM: u64 = u64::MAX;

/// Clipped reflection with every module the consensus switched off zeroed.
fn reported_reflection(state: &FollowerState, elements_per_module: usize) -> DVector<C64> {
    let mut phi = state.reflection.clone();
    let modules = state.consensus.len().checked_div(elements_per_module).unwrap_or(0);
    for s in 0..modules {
        let rows = s * elements_per_module;
        if state.consensus.rows(rows, elements_per_module).norm() == 0.0 {
            phi.rows_mut(rows, elements_per_module)
                .fill(C64::new(0.0, 0.0));
        }
    }
    phi
}

#[allow(clippy::too_many_arguments)]
fn build_outcome(
    scheme: SchemeKind,
    price: f64,
    solve: FollowerSolve,
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    outer_iterations: usize,
    inner_iterations: usize,
    outer_converged: bool,
    direct_fallback: bool,
) -> GameOutcome {
    let reflection = reported_reflection(&solve.state, cfg.elements_per_module);
    let utilities = scenario::utilities(ch, &solve.state.beamforming, &reflection, price, cfg);
    GameOutcome {
        scheme,
        price,
        beamforming: solve.state.beamforming.clone(),
        reflection,
        utilities,
        outer_iterations,
        inner_iterations,
        inner_converged: solve.converged,
        outer_converged,
        split_consistent: solve.split_consistent,
        direct_fallback,
        state: solve.state,
        equilibrium: None,
    }
}

/// Beams-only benchmark: the surface stays dark and earns nothing.
pub fn run_direct_link(ch: &ChannelSet, cfg: &ScenarioConfig) -> Result<GameOutcome> {
    let solve = solve_beams_only(ch, cfg)?;
    let inner = solve.inner_iterations;
    Ok(build_outcome(
        SchemeKind::DirectLink,
        0.0,
        solve,
        ch,
        cfg,
        1,
        inner,
        true,
        false,
    ))
}

/// Full price loop with default options.
pub fn run_stackelberg(ch: &ChannelSet, cfg: &ScenarioConfig) -> Result<GameOutcome> {
    run_stackelberg_with(ch, cfg, StackelbergOptions::default())
}

/// Full price loop: alternate follower solves and repricing until the
/// operator's realized revenue moves by less than `tol_outer` (relative,
/// floored at one), then report the last `(price, response)` pair.
pub fn run_stackelberg_with(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    options: StackelbergOptions,
) -> Result<GameOutcome> {
    cfg.validate()?;
    if cfg.num_elements() == 0 {
        return run_direct_link(ch, cfg);
    }

    let mut price = cfg.initial_price;
    let mut warm: Option<FollowerState> = None;
    let mut previous_revenue = 0.0;
    let mut inner_total = 0;
    let mut outer_converged = false;
    let mut last: Option<FollowerSolve> = None;
    let mut rounds = 0;
    // Step factor for the price update. The repricing map contracts when the
    // split penalty matches the rate-gradient scale but can be expansive and
    // cycle otherwise; halving the step whenever the update direction flips
    // restores geometric convergence without moving any fixed point.
    let mut step = 1.0_f64;
    let mut previous_gap: Option<f64> = None;

    for round in 1..=cfg.max_outer {
        rounds = round;
        let solve = solve_follower(ch, cfg, price, warm.take())?;
        inner_total += solve.inner_iterations;

        let reflection = reported_reflection(&solve.state, cfg.elements_per_module);
        let revenue = scenario::utilities(ch, &solve.state.beamforming, &reflection, price, cfg)
            .leader;
        let inputs = shrinkage_inputs(&solve.state, cfg.admm_penalty, cfg.elements_per_module);
        let peak = inputs.norms.iter().copied().fold(0.0, f64::max);

        let target = if peak <= DEMAND_FLOOR {
            None
        } else {
            match optimal_price(&inputs.norms, cfg.admm_penalty) {
                Ok(quote) => Some(quote.price / cfg.balance_alpha),
                Err(Error::NoReflectionDemand) => None,
                Err(e) => return Err(e),
            }
        };

        let revenue_settled = round > 1
            && (revenue - previous_revenue).abs() / previous_revenue.abs().max(1.0)
                < cfg.tol_outer;
        // A settled revenue alone can be a trap: two overpriced rounds both
        // earn zero. Demand also repricing consistency before stopping.
        let price_settled = target
            .map(|t| (t - price).abs() <= cfg.tol_outer * price.abs().max(t.abs()))
            .unwrap_or(true);
        previous_revenue = revenue;
        warm = Some(solve.state.clone());
        last = Some(solve);

        if revenue_settled && price_settled {
            outer_converged = true;
            break;
        }
        if round == cfg.max_outer {
            break;
        }

        match target {
            Some(target) => {
                let gap = target - price;
                if let Some(previous) = previous_gap {
                    if gap * previous < 0.0 {
                        step = (step * 0.5).max(1.0 / 1024.0);
                    } else {
                        step = (step * 1.5).min(1.0);
                    }
                }
                previous_gap = Some(gap);
                price += step * gap;
            }
            None => {
                let fallback = solve_beams_only(ch, cfg)?;
                inner_total += fallback.inner_iterations;
                return Ok(build_outcome(
                    SchemeKind::Stackelberg,
                    0.0,
                    fallback,
                    ch,
                    cfg,
                    round,
                    inner_total,
                    true,
                    true,
                ));
            }
        }
    }

    let solve = last.expect("at least one round ran");
    let mut outcome = build_outcome(
        SchemeKind::Stackelberg,
        price,
        solve,
        ch,
        cfg,
        rounds,
        inner_total,
        outer_converged,
        false,
    );
    if options.perturbation_checks > 0 {
        outcome.equilibrium = Some(follower_perturbation_report(
            ch,
            cfg,
            &outcome,
            options.perturbation_checks,
        ));
    }
    Ok(outcome)
}

/// Random-pricing benchmark. A probe solve at the opening price reveals the
/// demand scale; the cap is `random_price_max_factor` times the largest
/// shrink-input norm, divided by the balance weight so the induced shrink
/// threshold straddles the demand cutoffs. Consumes exactly one draw from
/// `rng` (none when demand is dead and the run falls back to beams only).
pub fn run_random_pricing<R: Rng + ?Sized>(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<GameOutcome> {
    cfg.validate()?;
    if cfg.num_elements() == 0 {
        return run_direct_link(ch, cfg);
    }
    let probe = solve_follower(ch, cfg, cfg.initial_price, None)?;
    let mut inner_total = probe.inner_iterations;
    let inputs = shrinkage_inputs(&probe.state, cfg.admm_penalty, cfg.elements_per_module);
    let peak = inputs.norms.iter().copied().fold(0.0, f64::max);
    if peak <= DEMAND_FLOOR {
        let fallback = solve_beams_only(ch, cfg)?;
        inner_total += fallback.inner_iterations;
        return Ok(build_outcome(
            SchemeKind::RandomPricing,
            0.0,
            fallback,
            ch,
            cfg,
            2,
            inner_total,
            true,
            true,
        ));
    }
    let cap = cfg.random_price_max_factor * peak / cfg.balance_alpha;
    let price = random_price(rng, cap);
    let solve = solve_follower(ch, cfg, price, Some(probe.state))?;
    inner_total += solve.inner_iterations;
    Ok(build_outcome(
        SchemeKind::RandomPricing,
        price,
        solve,
        ch,
        cfg,
        2,
        inner_total,
        true,
        false,
    ))
}

/// Random pricing with an explicit cap instead of the probe-derived one;
/// cold-starts the single follower solve.
pub fn run_random_pricing_with_cap<R: Rng + ?Sized>(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    rng: &mut R,
    cap: f64,
) -> Result<GameOutcome> {
    cfg.validate()?;
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "price cap must be finite and positive, got {cap}"
        )));
    }
    if cfg.num_elements() == 0 {
        return run_direct_link(ch, cfg);
    }
    let price = random_price(rng, cap);
    let solve = solve_follower(ch, cfg, price, None)?;
    let inner = solve.inner_iterations;
    Ok(build_outcome(
        SchemeKind::RandomPricing,
        price,
        solve,
        ch,
        cfg,
        1,
        inner,
        true,
        false,
    ))
}

/// Try `checks` random feasible perturbations of the reported beams and
/// reflection, each of relative magnitude 1e-2, and record the best
/// follower-utility gain. Negative best gain means the point looked locally
/// optimal under every perturbation tried.
pub fn follower_perturbation_report(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    outcome: &GameOutcome,
    checks: usize,
) -> EquilibriumReport {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(PERTURBATION_STREAM);
    let base = outcome.utilities.follower;
    let mut best_gain = f64::NEG_INFINITY;
    for _ in 0..checks {
        let (w, phi) = perturbed_point(&mut rng, outcome, cfg);
        let trial = scenario::utilities(ch, &w, &phi, outcome.price, cfg);
        best_gain = best_gain.max(trial.follower - base);
    }
    EquilibriumReport {
        follower_checks: checks,
        follower_best_gain: best_gain,
        leader_grid: None,
    }
}

/// One feasible perturbation: a 1e-2 relative-norm step, then projection
/// back into the power ball and the unit-modulus box.
fn perturbed_point<R: Rng + ?Sized>(
    rng: &mut R,
    outcome: &GameOutcome,
    cfg: &ScenarioConfig,
) -> (DMatrix<C64>, DVector<C64>) {
    const REL: f64 = 1e-2;

    let mut draw = || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    };

    let mut dw =
        DMatrix::from_fn(outcome.beamforming.nrows(), outcome.beamforming.ncols(), |_, _| draw());
    let w_scale = outcome.beamforming.norm().max(cfg.max_power.sqrt() * 1e-3);
    if dw.norm() > 0.0 {
        dw *= C64::new(REL * w_scale / dw.norm(), 0.0);
    }
    let mut w = &outcome.beamforming + dw;
    let power = w.norm_squared();
    if power > cfg.max_power {
        w *= C64::new((cfg.max_power / power).sqrt(), 0.0);
    }

    let n = outcome.reflection.len();
    let mut phi = outcome.reflection.clone();
    if n > 0 {
        let mut dphi = DVector::from_fn(n, |_, _| draw());
        // A dark surface has no norm to be relative to; fall back to the
        // all-on magnitude so switched-off modules still get probed.
        let phi_scale = if outcome.reflection.norm() > 0.0 {
            outcome.reflection.norm()
        } else {
            (n as f64).sqrt()
        };
        if dphi.norm() > 0.0 {
            dphi *= C64::new(REL * phi_scale / dphi.norm(), 0.0);
        }
        phi += dphi;
        for i in 0..n {
            let m = phi[i].norm();
            if m > 1.0 {
                phi[i] /= C64::new(m, 0.0);
            }
        }
    }
    (w, phi)
}

/// Scan `grid_points` prices up to twice the outcome's demand support and
/// re-solve the follower at each, recording the best fixed-price revenue.
/// Meant for small instances: every grid point costs one cold solve.
pub fn leader_grid_report(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    outcome: &GameOutcome,
    grid_points: usize,
) -> Result<LeaderGridReport> {
    let inputs = shrinkage_inputs(&outcome.state, cfg.admm_penalty, cfg.elements_per_module);
    let peak = inputs.norms.iter().copied().fold(0.0, f64::max);
    let cap = if peak > DEMAND_FLOOR {
        2.0 * peak / cfg.balance_alpha
    } else {
        2.0 * outcome.price.max(1.0)
    };
    let mut best_price = 0.0;
    let mut best_revenue = 0.0;
    for i in 1..=grid_points {
        let price = cap * i as f64 / grid_points as f64;
        let solve = solve_follower(ch, cfg, price, None)?;
        let reflection = reported_reflection(&solve.state, cfg.elements_per_module);
        let revenue =
            scenario::utilities(ch, &solve.state.beamforming, &reflection, price, cfg).leader;
        if revenue > best_revenue {
            best_revenue = revenue;
            best_price = price;
        }
    }
    Ok(LeaderGridReport {
        grid_points,
        best_price,
        best_revenue,
        equilibrium_revenue: outcome.utilities.leader,
    })
}
