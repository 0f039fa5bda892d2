use super::ScenarioConfig;
use crate::{Result, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// One channel realization: every link the scene contains.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelSet {
    /// Base-station → surface channel `H`, `S·N × M`.
    pub bs_irs: DMatrix<C64>,
    /// Surface → user channels `g_k`, each of length `S·N`.
    pub irs_user: Vec<DVector<C64>>,
    /// Direct base-station → user channels `h_{d,k}`, each of length `M`.
    pub bs_user: Vec<DVector<C64>>,
    /// Sampled user coordinates, metres.
    pub user_positions: Vec<[f64; 2]>,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.bs_user.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.bs_irs.ncols()
    }

    pub fn num_elements(&self) -> usize {
        self.bs_irs.nrows()
    }
}

/// Deterministic per-trial random stream: one ChaCha generator per
/// `(seed, stream)` pair. Streams with the same seed never overlap, so a
/// sweep hands stream `2·trial` to channel generation and `2·trial + 1` to
/// scheme-internal draws.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Log-distance power gain of one link: `-(reference_loss_db + 10·e·log10 d)`
/// dB. Distances under a millimetre are clamped to keep the model finite.
pub fn path_gain(distance: f64, exponent: f64, reference_loss_db: f64) -> f64 {
    let d = distance.max(1e-3);
    let gain_db = -(reference_loss_db + 10.0 * exponent * d.log10());
    10f64.powf(gain_db / 10.0)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// One circularly-symmetric complex Gaussian with per-component variance
/// `gain / 2`, so `E|z|² = gain`. Real part drawn before imaginary part.
fn complex_gaussian(rng: &mut ChaCha8Rng, gain: f64) -> C64 {
    let scale = (gain / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * scale, im * scale)
}

/// Sample one channel realization.
///
/// Draw order is fixed — user positions, then each direct `h_{d,k}`, then
/// one block per surface module (its `H` rows, then each user's `g_k`
/// segment) — so a given `(cfg, rng state)` always yields the same
/// realization regardless of platform or thread count. Because modules come
/// last and in order, a surface with `S` modules is an exact prefix of one
/// with `S + 1` drawn from the same stream; module-count sweeps then compare
/// schemes on common random numbers instead of independent noise. Surface
/// elements share their module's coordinates; fading is i.i.d. per element.
pub fn generate_channels(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<ChannelSet> {
    cfg.validate()?;
    let m = cfg.num_antennas;
    let k = cfg.num_users;
    let n = cfg.elements_per_module;
    let elements = cfg.num_elements();

    // Users uniform on the disk: sqrt-radius keeps the density uniform.
    let mut user_positions = Vec::with_capacity(k);
    for _ in 0..k {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        let radius = cfg.cell_radius * u.sqrt();
        let angle = 2.0 * std::f64::consts::PI * v;
        user_positions.push([
            cfg.cell_center[0] + radius * angle.cos(),
            cfg.cell_center[1] + radius * angle.sin(),
        ]);
    }

    let mut bs_user = Vec::with_capacity(k);
    for pos in &user_positions {
        let gain = path_gain(
            distance(cfg.bs_position, *pos),
            cfg.exponent_bs_user,
            cfg.reference_loss_db,
        );
        bs_user.push(DVector::from_fn(m, |_, _| complex_gaussian(rng, gain)));
    }

    let gain_bs_irs = path_gain(
        distance(cfg.bs_position, cfg.irs_position),
        cfg.exponent_bs_irs,
        cfg.reference_loss_db,
    );
    let gain_irs_user: Vec<f64> = user_positions
        .iter()
        .map(|pos| {
            path_gain(
                distance(cfg.irs_position, *pos),
                cfg.exponent_irs_user,
                cfg.reference_loss_db,
            )
        })
        .collect();

    let mut entries = Vec::with_capacity(elements * m);
    let mut irs_user = vec![Vec::with_capacity(elements); k];
    for _ in 0..cfg.num_modules {
        for _ in 0..n * m {
            entries.push(complex_gaussian(rng, gain_bs_irs));
        }
        for (user, gain) in irs_user.iter_mut().zip(&gain_irs_user) {
            for _ in 0..n {
                user.push(complex_gaussian(rng, *gain));
            }
        }
    }
    let bs_irs = DMatrix::from_row_slice(elements, m, &entries);
    let irs_user: Vec<DVector<C64>> = irs_user.into_iter().map(DVector::from_vec).collect();

    Ok(ChannelSet {
        bs_irs,
        irs_user,
        bs_user,
        user_positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_gain_at_one_metre() {
        // d = 1 ⇒ only the reference loss: 30 dB ⇒ 1e-3, any exponent.
        assert_relative_eq!(path_gain(1.0, 3.5, 30.0), 1e-3, max_relative = 1e-12);
        assert_relative_eq!(path_gain(1.0, 2.2, 30.0), 1e-3, max_relative = 1e-12);
        // Unit gain with the synthetic zero-loss model.
        assert_eq!(path_gain(123.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn gain_decays_with_distance_and_exponent() {
        let near = path_gain(10.0, 2.2, 30.0);
        let far = path_gain(100.0, 2.2, 30.0);
        assert!(far < near);
        // 10x distance at exponent 2.2 is 22 dB.
        assert_relative_eq!(near / far, 10f64.powf(2.2), max_relative = 1e-12);
        let steep = path_gain(100.0, 3.5, 30.0);
        assert!(steep < far);
    }

    #[test]
    fn same_seed_and_stream_reproduce_identical_channels() {
        let cfg = ScenarioConfig::reference_scene();
        let a = generate_channels(&cfg, &mut trial_rng(42, 3)).unwrap();
        let b = generate_channels(&cfg, &mut trial_rng(42, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_streams_differ() {
        let cfg = ScenarioConfig::reference_scene();
        let a = generate_channels(&cfg, &mut trial_rng(42, 0)).unwrap();
        let b = generate_channels(&cfg, &mut trial_rng(42, 1)).unwrap();
        assert_ne!(a, b);
        let c = generate_channels(&cfg, &mut trial_rng(43, 0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dimensions_follow_config() {
        let cfg = ScenarioConfig::uniform_gain(3, 2, 4, 5);
        let ch = generate_channels(&cfg, &mut trial_rng(0, 0)).unwrap();
        assert_eq!(ch.bs_irs.shape(), (20, 3));
        assert_eq!(ch.irs_user.len(), 2);
        assert_eq!(ch.irs_user[0].len(), 20);
        assert_eq!(ch.bs_user[0].len(), 3);
        assert_eq!(ch.num_users(), 2);
        assert_eq!(ch.num_antennas(), 3);
        assert_eq!(ch.num_elements(), 20);
    }

    #[test]
    fn zero_modules_yield_empty_surface_channels() {
        let mut cfg = ScenarioConfig::reference_scene();
        cfg.num_modules = 0;
        let ch = generate_channels(&cfg, &mut trial_rng(1, 0)).unwrap();
        assert_eq!(ch.bs_irs.nrows(), 0);
        assert_eq!(ch.irs_user[0].len(), 0);
        assert_eq!(ch.bs_user.len(), 4);
    }

    #[test]
    fn smaller_surface_is_a_prefix_of_a_larger_one() {
        let mut small = ScenarioConfig::reference_scene();
        small.num_modules = 4;
        let mut large = small.clone();
        large.num_modules = 7;
        let a = generate_channels(&small, &mut trial_rng(9, 2)).unwrap();
        let b = generate_channels(&large, &mut trial_rng(9, 2)).unwrap();
        assert_eq!(a.user_positions, b.user_positions);
        assert_eq!(a.bs_user, b.bs_user);
        let rows = a.bs_irs.nrows();
        assert_eq!(a.bs_irs, b.bs_irs.rows(0, rows).into_owned());
        for (ga, gb) in a.irs_user.iter().zip(&b.irs_user) {
            assert_eq!(ga, &gb.rows(0, rows).into_owned());
        }
    }

    #[test]
    fn users_stay_inside_the_disk() {
        let cfg = ScenarioConfig::reference_scene();
        for seed in 0..20 {
            let ch = generate_channels(&cfg, &mut trial_rng(seed, 0)).unwrap();
            for p in &ch.user_positions {
                let d = distance(*p, cfg.cell_center);
                assert!(d <= cfg.cell_radius + 1e-9, "user at distance {d}");
            }
        }
    }

    #[test]
    fn invalid_config_is_rejected_before_sampling() {
        let mut cfg = ScenarioConfig::reference_scene();
        cfg.num_antennas = 0;
        assert!(generate_channels(&cfg, &mut trial_rng(0, 0)).is_err());
    }

    #[test]
    fn fading_statistics_match_path_gain() {
        // Empirical second moment over many elements ≈ link gain (±10 %).
        let mut cfg = ScenarioConfig::reference_scene();
        cfg.num_modules = 40;
        cfg.elements_per_module = 50;
        let ch = generate_channels(&cfg, &mut trial_rng(5, 0)).unwrap();
        let expect = path_gain(
            distance(cfg.bs_position, cfg.irs_position),
            cfg.exponent_bs_irs,
            cfg.reference_loss_db,
        );
        let mean_sq = ch.bs_irs.iter().map(|z| z.norm_sqr()).sum::<f64>()
            / (ch.bs_irs.len() as f64);
        assert!((mean_sq / expect - 1.0).abs() < 0.1, "ratio {}", mean_sq / expect);
    }
}
