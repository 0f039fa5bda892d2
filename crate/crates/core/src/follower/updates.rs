use crate::scenario::ChannelSet;
use crate::{tol, C64};
use nalgebra::{DMatrix, DVector};

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Closed-form beam auxiliaries: for each user,
/// `√weight · h^H w_user / (Σ_j |h^H w_j|² + noise)` — the unconstrained
/// maximizer of the beam-cycle surrogate over the auxiliary.
pub fn beam_aux(
    weights: &[f64],
    h: &[DVector<C64>],
    w: &DMatrix<C64>,
    noise_power: f64,
) -> DVector<C64> {
    let k = h.len();
    DVector::from_fn(k, |user, _| {
        let own = h[user].dotc(&w.column(user));
        let mut denom = noise_power;
        for j in 0..k {
            denom += h[user].dotc(&w.column(j)).norm_sqr();
        }
        own * re(weights[user].sqrt() / denom)
    })
}

/// Solve the Hermitian positive semi-definite system `a · x = rhs` through an
/// eigendecomposition, zeroing directions below numerical rank.
fn hermitian_pinv_solve(a: &DMatrix<C64>, rhs: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = a.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
    let cut = max_ev * a.nrows() as f64 * f64::EPSILON;
    let mut projected = eig.eigenvectors.ad_mul(rhs);
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        let scale = if ev.abs() > cut { 1.0 / ev } else { 0.0 };
        for j in 0..projected.ncols() {
            projected[(i, j)] *= re(scale);
        }
    }
    &eig.eigenvectors * projected
}

/// Beamforming update: ridge-regularized maximum of the beam-cycle surrogate
/// with the ridge weight (the power multiplier) bisected so the power budget
/// holds with complementary slackness.
///
/// Returns the new beam matrix and the multiplier. If the unconstrained
/// optimum (`multiplier = 0`) already fits the budget it is returned as is;
/// a singular system there is resolved by the minimum-norm solution. With all
/// auxiliaries zero the well-defined limit `w = 0` is returned.
pub fn update_beamforming(
    weights: &[f64],
    aux: &DVector<C64>,
    h: &[DVector<C64>],
    max_power: f64,
) -> (DMatrix<C64>, f64) {
    let k = h.len();
    let m = if k > 0 { h[0].len() } else { 0 };
    if aux.iter().all(|b| b.norm() == 0.0) {
        return (DMatrix::zeros(m, k), 0.0);
    }

    let mut gram = DMatrix::zeros(m, m);
    for (user, hk) in h.iter().enumerate() {
        gram.gerc(re(aux[user].norm_sqr()), hk, hk, re(1.0));
    }
    let targets = DMatrix::from_fn(m, k, |i, j| h[j][i] * aux[j] * re(weights[j].sqrt()));

    let solve_at = |lam: f64| -> DMatrix<C64> {
        let mut sys = gram.clone();
        for i in 0..m {
            sys[(i, i)] += re(lam);
        }
        match sys.clone().cholesky() {
            Some(chol) => chol.solve(&targets),
            None => hermitian_pinv_solve(&sys, &targets),
        }
    };

    let w0 = solve_at(0.0);
    if w0.norm_squared() <= max_power * (1.0 + tol::POWER_BISECT_REL) {
        return (w0, 0.0);
    }

    // Bracket the multiplier: delivered power decreases monotonically in it.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut w_hi = solve_at(hi);
    while w_hi.norm_squared() > max_power {
        lo = hi;
        hi *= 2.0;
        w_hi = solve_at(hi);
        if hi > 1e300 {
            return (w_hi, hi);
        }
    }
    for _ in 0..tol::POWER_BISECT_MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        let w_mid = solve_at(mid);
        let p = w_mid.norm_squared();
        if (p - max_power).abs() <= tol::POWER_BISECT_REL * max_power {
            return (w_mid, mid);
        }
        if p > max_power {
            lo = mid;
        } else {
            hi = mid;
            w_hi = w_mid;
        }
    }
    // Feasible endpoint if the tolerance was never met.
    (w_hi, hi)
}

/// Received-signal decomposition used by the reflection cycle: for user `k`
/// and beam `j`, `direct[k][j] = h_{d,k}^H w_j` and
/// `reflected[k][j][i] = conj(g_k[i]) · (H w_j)[i]`, so the effective
/// response is `direct[k][j] + phi^H reflected[k][j]`.
pub fn reflected_terms(
    ch: &ChannelSet,
    w: &DMatrix<C64>,
) -> (Vec<Vec<C64>>, Vec<Vec<DVector<C64>>>) {
    let k = ch.num_users();
    let elements = ch.num_elements();
    let hw = &ch.bs_irs * w;
    let mut direct = Vec::with_capacity(k);
    let mut reflected = Vec::with_capacity(k);
    for user in 0..k {
        let mut drow = Vec::with_capacity(k);
        let mut rrow = Vec::with_capacity(k);
        for j in 0..k {
            drow.push(ch.bs_user[user].dotc(&w.column(j)));
            rrow.push(DVector::from_fn(elements, |i, _| {
                ch.irs_user[user][i].conj() * hw[(i, j)]
            }));
        }
        direct.push(drow);
        reflected.push(rrow);
    }
    (direct, reflected)
}

/// Closed-form reflection auxiliaries: for each user,
/// `√weight · (response of own beam) / (Σ_j |response of beam j|² + noise)`
/// with responses evaluated at the current `phi`.
pub fn reflect_aux(
    weights: &[f64],
    phi: &DVector<C64>,
    direct: &[Vec<C64>],
    reflected: &[Vec<DVector<C64>>],
    noise_power: f64,
) -> DVector<C64> {
    let k = weights.len();
    DVector::from_fn(k, |user, _| {
        let own = direct[user][user] + phi.dotc(&reflected[user][user]);
        let mut denom = noise_power;
        for j in 0..k {
            denom += (direct[user][j] + phi.dotc(&reflected[user][j])).norm_sqr();
        }
        own * re(weights[user].sqrt() / denom)
    })
}

/// Unconstrained maximizer of the reflection-cycle surrogate over `phi`:
/// solves the Hermitian positive-definite normal equations assembled from the
/// auxiliaries, the consensus coupling and the magnitude multipliers.
#[allow(clippy::too_many_arguments)]
pub fn solve_reflection(
    weights: &[f64],
    aux: &DVector<C64>,
    direct: &[Vec<C64>],
    reflected: &[Vec<DVector<C64>>],
    consensus: &DVector<C64>,
    multiplier: &DVector<C64>,
    modulus_multipliers: &DVector<f64>,
    penalty: f64,
) -> DVector<C64> {
    let elements = consensus.len();
    if elements == 0 {
        return DVector::zeros(0);
    }
    let k = weights.len();
    let mut system = DMatrix::zeros(elements, elements);
    let mut rhs = multiplier + consensus * re(penalty);
    for user in 0..k {
        let energy = aux[user].norm_sqr();
        for j in 0..k {
            let term = &reflected[user][j];
            system.gerc(re(2.0 * energy), term, term, re(1.0));
            rhs -= term * (direct[user][j].conj() * re(2.0 * energy));
        }
        rhs += &reflected[user][user] * (aux[user].conj() * re(2.0 * weights[user].sqrt()));
    }
    for i in 0..elements {
        system[(i, i)] += re(2.0 * modulus_multipliers[i] + penalty);
    }
    system
        .clone()
        .cholesky()
        .map(|chol| chol.solve(&rhs))
        .unwrap_or_else(|| {
            hermitian_pinv_solve(&system, &DMatrix::from_column_slice(elements, 1, rhs.as_slice()))
                .column(0)
                .into_owned()
        })
}

/// Reflection update: unconstrained solve, then per-element magnitude clip
/// `phi_i ← phi_i / max(1, |phi_i|)` enforcing the passive-element bound.
#[allow(clippy::too_many_arguments)]
pub fn update_reflection(
    weights: &[f64],
    aux: &DVector<C64>,
    direct: &[Vec<C64>],
    reflected: &[Vec<DVector<C64>>],
    consensus: &DVector<C64>,
    multiplier: &DVector<C64>,
    modulus_multipliers: &DVector<f64>,
    penalty: f64,
) -> DVector<C64> {
    let mut phi = solve_reflection(
        weights,
        aux,
        direct,
        reflected,
        consensus,
        multiplier,
        modulus_multipliers,
        penalty,
    );
    for z in phi.iter_mut() {
        let mag = z.norm();
        if mag > 1.0 {
            *z /= re(mag);
        }
    }
    phi
}

/// Block soft-thresholding: the exact minimizer of
/// `threshold·‖t‖ + (penalty/2)·‖t − x/penalty‖²`, i.e. zero when
/// `‖x‖ ≤ threshold` and `x · (‖x‖ − threshold) / (penalty·‖x‖)` otherwise.
pub fn group_shrink(x: &DVector<C64>, threshold: f64, penalty: f64) -> DVector<C64> {
    let norm = x.norm();
    if norm <= threshold {
        DVector::zeros(x.len())
    } else {
        x * re((norm - threshold) / (penalty * norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re_: f64, im: f64) -> C64 {
        C64::new(re_, im)
    }

    #[test]
    fn beam_aux_scalar_case() {
        // One user, one antenna: h = 1, w = 1, noise 1, weight 1 ⇒ 1/2.
        let h = vec![DVector::from_vec(vec![c(1.0, 0.0)])];
        let w = DMatrix::from_row_slice(1, 1, &[c(1.0, 0.0)]);
        let aux = beam_aux(&[1.0], &h, &w, 1.0);
        assert_relative_eq!(aux[0].re, 0.5, max_relative = 1e-15);
        assert_relative_eq!(aux[0].im, 0.0);
    }

    #[test]
    fn beam_aux_vanishes_in_heavy_noise() {
        let h = vec![DVector::from_vec(vec![c(1.0, 0.0)])];
        let w = DMatrix::from_row_slice(1, 1, &[c(1.0, 0.0)]);
        let aux = beam_aux(&[1.0], &h, &w, 1e12);
        assert!(aux[0].norm() < 1e-11);
    }

    #[test]
    fn beamforming_scalar_unconstrained_case() {
        // h = 1, aux = 1/2, weight 1: gram = 1/4, target = 1/2 ⇒ w = 2 at
        // zero multiplier, power 4 within a budget of 10.
        let h = vec![DVector::from_vec(vec![c(1.0, 0.0)])];
        let aux = DVector::from_vec(vec![c(0.5, 0.0)]);
        let (w, lam) = update_beamforming(&[1.0], &aux, &h, 10.0);
        assert_eq!(lam, 0.0);
        assert_relative_eq!(w[(0, 0)].re, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn beamforming_scalar_constrained_case() {
        // Same data with budget 1: multiplier bisects to 1/4 and w = 1.
        let h = vec![DVector::from_vec(vec![c(1.0, 0.0)])];
        let aux = DVector::from_vec(vec![c(0.5, 0.0)]);
        let (w, lam) = update_beamforming(&[1.0], &aux, &h, 1.0);
        assert_relative_eq!(lam, 0.25, max_relative = 1e-6);
        assert_relative_eq!(w[(0, 0)].re, 1.0, max_relative = 1e-7);
        assert!(w.norm_squared() <= 1.0 + 1e-9);
    }

    #[test]
    fn beamforming_zero_aux_returns_zero() {
        let h = vec![
            DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 2.0)]),
            DVector::from_vec(vec![c(0.5, 0.0), c(1.0, 0.0)]),
        ];
        let aux = DVector::zeros(2);
        let (w, lam) = update_beamforming(&[1.0, 1.0], &aux, &h, 1.0);
        assert_eq!(lam, 0.0);
        assert_eq!(w.norm_squared(), 0.0);
        assert_eq!(w.shape(), (2, 2));
    }

    #[test]
    fn beamforming_handles_singular_unconstrained_system() {
        // One active user on two antennas: the gram matrix has rank 1 but the
        // target lies in its range; the minimum-norm solution must come back
        // with power below the (large) budget and zero multiplier.
        let h = vec![DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)])];
        let aux = DVector::from_vec(vec![c(0.5, 0.0)]);
        let (w, lam) = update_beamforming(&[1.0], &aux, &h, 100.0);
        assert_eq!(lam, 0.0);
        // system 0.25·hh^H, target 0.5·h ⇒ min-norm solution h/‖h‖²·2 = [1, 1].
        assert_relative_eq!(w[(0, 0)].re, 1.0, max_relative = 1e-10);
        assert_relative_eq!(w[(1, 0)].re, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn reflected_terms_match_effective_response() {
        // direct[k][j] + phi^H reflected[k][j] must equal h_k^H w_j with
        // h_k the combined channel — checked here on a small random scene.
        use crate::scenario::{combined_channel, generate_channels, trial_rng, ScenarioConfig};
        let cfg = ScenarioConfig::uniform_gain(3, 2, 2, 2);
        let ch = generate_channels(&cfg, &mut trial_rng(9, 0)).unwrap();
        let w = DMatrix::from_fn(3, 2, |i, j| c(0.3 * (i as f64 - 1.0), 0.2 * j as f64 + 0.1));
        let phi = DVector::from_fn(4, |i, _| c(0.4, -0.1 * i as f64));
        let (direct, reflected) = reflected_terms(&ch, &w);
        let h = combined_channel(&ch, &phi);
        for user in 0..2 {
            for j in 0..2 {
                let via_terms = direct[user][j] + phi.dotc(&reflected[user][j]);
                let via_channel = h[user].dotc(&w.column(j));
                assert_relative_eq!((via_terms - via_channel).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reflect_aux_scalar_case() {
        // All dimensions 1: g = 1, H = 1, w = 1, h_d = 1, phi = 1/2, noise 1,
        // weight 1: response = 1 + 1/2, aux = 1.5 / (1.5² + 1) = 6/13.
        let direct = vec![vec![c(1.0, 0.0)]];
        let reflected = vec![vec![DVector::from_vec(vec![c(1.0, 0.0)])]];
        let phi = DVector::from_vec(vec![c(0.5, 0.0)]);
        let aux = reflect_aux(&[1.0], &phi, &direct, &reflected, 1.0);
        assert_relative_eq!(aux[0].re, 1.5 / 3.25, max_relative = 1e-15);
        assert_relative_eq!(aux[0].im, 0.0);
    }

    #[test]
    fn reflect_aux_zero_beams_give_zero() {
        let direct = vec![vec![c(0.0, 0.0)]];
        let reflected = vec![vec![DVector::from_vec(vec![c(0.0, 0.0), c(0.0, 0.0)])]];
        let phi = DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let aux = reflect_aux(&[1.0], &phi, &direct, &reflected, 1.0);
        assert_eq!(aux[0], c(0.0, 0.0));
    }

    #[test]
    fn reflection_solve_without_users_returns_consensus_plus_scaled_multiplier() {
        let consensus = DVector::from_vec(vec![c(0.2, 0.1), c(-0.3, 0.0)]);
        let multiplier = DVector::from_vec(vec![c(0.4, -0.2), c(0.0, 0.6)]);
        let mu = DVector::zeros(2);
        let phi = solve_reflection(&[], &DVector::zeros(0), &[], &[], &consensus, &multiplier, &mu, 2.0);
        for i in 0..2 {
            let expect = consensus[i] + multiplier[i] / c(2.0, 0.0);
            assert_relative_eq!((phi[i] - expect).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn update_reflection_clips_magnitudes_to_one() {
        let consensus = DVector::from_vec(vec![c(3.0, 0.0), c(0.0, -0.4)]);
        let multiplier = DVector::zeros(2);
        let mu = DVector::zeros(2);
        let phi = update_reflection(&[], &DVector::zeros(0), &[], &[], &consensus, &multiplier, &mu, 1.0);
        assert_relative_eq!(phi[0].norm(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(phi[1].norm(), 0.4, max_relative = 1e-14);
        assert_eq!(crate::scenario::modulus_violation(&phi), 0.0);
    }

    #[test]
    fn group_shrink_matches_hand_example() {
        // x = (3, 0), threshold 1, penalty 2 ⇒ (3−1)/(2·3) · x = (1, 0).
        let x = DVector::from_vec(vec![c(3.0, 0.0), c(0.0, 0.0)]);
        let out = group_shrink(&x, 1.0, 2.0);
        assert_relative_eq!(out[0].re, 1.0, max_relative = 1e-15);
        assert_relative_eq!(out[1].norm(), 0.0);
    }

    #[test]
    fn group_shrink_zeroes_below_threshold() {
        let x = DVector::from_vec(vec![c(0.3, 0.4)]); // norm 0.5
        assert_eq!(group_shrink(&x, 0.5, 1.0), DVector::zeros(1));
        assert_eq!(group_shrink(&x, 0.6, 1.0), DVector::zeros(1));
    }

    #[test]
    fn group_shrink_zero_threshold_is_passthrough_scaling() {
        let x = DVector::from_vec(vec![c(1.0, -2.0), c(0.5, 0.0)]);
        let out = group_shrink(&x, 0.0, 4.0);
        for i in 0..2 {
            assert_relative_eq!((out[i] - x[i] / c(4.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn group_shrink_never_exceeds_unpenalized_norm(
            seed in 0u64..500, thr in 0.0f64..3.0, pen in 0.2f64..4.0
        ) {
            use crate::scenario::trial_rng;
            use rand::Rng;
            let mut rng = trial_rng(seed, 21);
            let x = DVector::from_fn(4, |_, _| c(rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0));
            let out = group_shrink(&x, thr, pen);
            prop_assert!(out.norm() <= x.norm() / pen + 1e-12);
            // shrink keeps direction: out is a non-negative multiple of x
            if out.norm() > 0.0 {
                let scale = (x.norm() - thr) / (pen * x.norm());
                for i in 0..4 {
                    prop_assert!((out[i] - x[i] * re(scale)).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn shrink_blocks_are_independent(seed in 0u64..200, thr in 0.0f64..2.0) {
            use crate::scenario::trial_rng;
            use rand::Rng;
            let mut rng = trial_rng(seed, 22);
            let blocks: Vec<DVector<C64>> = (0..3)
                .map(|_| DVector::from_fn(2, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)))
                .collect();
            // shrinking each block alone equals shrinking them jointly
            let jointly: Vec<DVector<C64>> = blocks.iter().map(|b| group_shrink(b, thr, 1.5)).collect();
            for (b, j) in blocks.iter().zip(&jointly) {
                let alone = group_shrink(b, thr, 1.5);
                prop_assert_eq!(&alone, j);
            }
        }
    }
}
