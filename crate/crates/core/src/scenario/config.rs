use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Complete description of one experiment scene: dimensions, geometry,
/// propagation model, powers and solver controls.
///
/// Distances are metres, powers are watts, `*_db` fields are decibels. The
/// propagation model is log-distance: a link of length `d` with exponent `e`
/// has power gain `10^-( (reference_loss_db + 10·e·log10(d)) / 10 )`, and
/// small-scale fading is i.i.d. circularly-symmetric unit-variance Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Base-station antennas `M`.
    pub num_antennas: usize,
    /// Single-antenna users `K`.
    pub num_users: usize,
    /// Reflection modules `S` offered for rent; may be zero.
    pub num_modules: usize,
    /// Elements per module `N`.
    pub elements_per_module: usize,
    /// Transmit-power budget, watts.
    pub max_power: f64,
    /// Receiver noise power, watts.
    pub noise_power: f64,
    /// Balance factor weighting the reflection bill in both utilities.
    pub balance_alpha: f64,
    /// Base-station coordinates, metres.
    pub bs_position: [f64; 2],
    /// Surface coordinates, metres.
    pub irs_position: [f64; 2],
    /// Centre of the user disk, metres.
    pub cell_center: [f64; 2],
    /// Radius of the user disk, metres.
    pub cell_radius: f64,
    /// Path loss at 1 m, dB.
    pub reference_loss_db: f64,
    /// Path-loss exponent of the direct base-station→user links.
    pub exponent_bs_user: f64,
    /// Path-loss exponent of the base-station→surface link.
    pub exponent_bs_irs: f64,
    /// Path-loss exponent of the surface→user links.
    pub exponent_irs_user: f64,
    /// ADMM penalty coupling the reflection vector to its shrinkage copy.
    pub admm_penalty: f64,
    /// Relative objective change below which the follower iteration stops.
    pub tol_inner: f64,
    /// Follower iteration cap.
    pub max_inner: usize,
    /// Relative split-consistency residual accepted at follower exit.
    pub tol_admm: f64,
    /// Relative leader-revenue change below which the game loop stops.
    pub tol_outer: f64,
    /// Game-loop iteration cap.
    pub max_outer: usize,
    /// Price the game loop opens with.
    pub initial_price: f64,
    /// Random-pricing cap factor: the baseline draws uniformly on
    /// `(0, factor · max_s ‖x_s‖ / balance_alpha]` with `x_s` taken from the
    /// probe solve at `initial_price`.
    pub random_price_max_factor: f64,
    /// Master seed for all randomness tied to this scenario.
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::reference_scene()
    }
}

impl ScenarioConfig {
    /// The reference experiment scene: a 4-antenna station at the origin, a
    /// 6-module surface of 8-element modules at (200, 50) m, four users on a
    /// 10 m disk around (200, 0) m, 0 dBm budget and −80 dBm noise.
    pub fn reference_scene() -> Self {
        Self {
            num_antennas: 4,
            num_users: 4,
            num_modules: 6,
            elements_per_module: 8,
            max_power: dbm_to_watts(0.0),
            noise_power: dbm_to_watts(-80.0),
            balance_alpha: 0.1,
            bs_position: [0.0, 0.0],
            irs_position: [200.0, 50.0],
            cell_center: [200.0, 0.0],
            cell_radius: 10.0,
            reference_loss_db: 30.0,
            exponent_bs_user: 3.5,
            exponent_bs_irs: 2.2,
            exponent_irs_user: 2.2,
            admm_penalty: 1.0,
            tol_inner: 1e-4,
            max_inner: 500,
            tol_admm: 1e-3,
            tol_outer: 1e-3,
            max_outer: 50,
            initial_price: 1.0,
            random_price_max_factor: 2.0,
            rng_seed: 0,
        }
    }

    /// Synthetic scene with unit path gain on every link (zero reference loss
    /// and exponents), unit noise and a 10 W budget. Channel entries are then
    /// plain unit-variance complex Gaussians — convenient for solver tests
    /// where physical scales would only obscure the numbers.
    pub fn uniform_gain(
        num_antennas: usize,
        num_users: usize,
        num_modules: usize,
        elements_per_module: usize,
    ) -> Self {
        Self {
            num_antennas,
            num_users,
            num_modules,
            elements_per_module,
            max_power: 10.0,
            noise_power: 1.0,
            reference_loss_db: 0.0,
            exponent_bs_user: 0.0,
            exponent_bs_irs: 0.0,
            exponent_irs_user: 0.0,
            ..Self::reference_scene()
        }
    }

    /// Total surface elements `S·N`.
    pub fn num_elements(&self) -> usize {
        self.num_modules * self.elements_per_module
    }

    /// Check every field is in range; returns the first offence found.
    pub fn validate(&self) -> Result<()> {
        fn pos(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be finite and positive, got {v}")))
            }
        }
        if self.num_antennas == 0 {
            return Err(Error::InvalidConfig("num_antennas must be at least 1".into()));
        }
        if self.num_users == 0 {
            return Err(Error::InvalidConfig("num_users must be at least 1".into()));
        }
        if self.elements_per_module == 0 {
            return Err(Error::InvalidConfig("elements_per_module must be at least 1".into()));
        }
        pos("max_power", self.max_power)?;
        pos("noise_power", self.noise_power)?;
        pos("balance_alpha", self.balance_alpha)?;
        pos("admm_penalty", self.admm_penalty)?;
        pos("tol_inner", self.tol_inner)?;
        pos("tol_admm", self.tol_admm)?;
        pos("tol_outer", self.tol_outer)?;
        pos("initial_price", self.initial_price)?;
        pos("random_price_max_factor", self.random_price_max_factor)?;
        if !(self.cell_radius.is_finite() && self.cell_radius >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cell_radius must be finite and non-negative, got {}",
                self.cell_radius
            )));
        }
        for (name, v) in [
            ("reference_loss_db", self.reference_loss_db),
            ("exponent_bs_user", self.exponent_bs_user),
            ("exponent_bs_irs", self.exponent_bs_irs),
            ("exponent_irs_user", self.exponent_irs_user),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        for (name, pt) in [
            ("bs_position", self.bs_position),
            ("irs_position", self.irs_position),
            ("cell_center", self.cell_center),
        ] {
            if !(pt[0].is_finite() && pt[1].is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        if self.max_inner == 0 {
            return Err(Error::InvalidConfig("max_inner must be at least 1".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidConfig("max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

/// Convert a dBm level to watts: `10^((dbm − 30)/10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    let exponent = (dbm - 30.0) / 10.0;
    // Integral exponents go through powi so that round levels convert to the
    // nearest representable power of ten exactly.
    if exponent.fract() == 0.0 && exponent.abs() <= 300.0 {
        10f64.powi(exponent as i32)
    } else {
        10f64.powf(exponent)
    }
}
