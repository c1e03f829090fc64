//! Success probability of an alternate-history attack.
//!
//! The attacker mines a private fork while the honest chain collects `N`
//! confirmations; each block race is won by the honest chain with probability
//! `1 / (1 + beta)`. The number of attacker blocks found meanwhile is negative
//! binomial. The attacker then races from `z = N - n_Y` blocks behind and gives
//! up once it trails by `N_g`. The catch-up probability is a gambler's-ruin
//! quantity `P_n` with `P_{-1} = 1` and `P_{N_g} = 0`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("confirmations must be at least 1")]
    NoConfirmations,
    #[error("give-up threshold must be at least 1")]
    NoGiveUpThreshold,
    #[error("relative mining power must be finite and non-negative, got {0}")]
    InvalidPower(f64),
    #[error("closed form needs N_g > N (got N = {confirmations}, N_g = {giveup_threshold}); use the direct sum")]
    ClosedFormOutOfDomain {
        confirmations: u32,
        giveup_threshold: u32,
    },
    #[error("Monte Carlo needs at least one trial")]
    NoTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    /// `N`, confirmations the honest chain collects before the race.
    pub confirmations: u32,
    /// `beta`, attacker mining rate over honest mining rate.
    pub relative_power: f64,
    /// `N_g`, deficit at which the attacker abandons.
    pub giveup_threshold: u32,
}

impl AttackParams {
    pub fn new(
        confirmations: u32,
        relative_power: f64,
        giveup_threshold: u32,
    ) -> Result<Self, AttackError> {
        let p = Self {
            confirmations,
            relative_power,
            giveup_threshold,
        };
        p.validate()?;
        Ok(p)
    }

    /// `beta = 0` is accepted as the powerless-attacker limit.
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.confirmations == 0 {
            return Err(AttackError::NoConfirmations);
        }
        if self.giveup_threshold == 0 {
            return Err(AttackError::NoGiveUpThreshold);
        }
        if !(self.relative_power.is_finite() && self.relative_power >= 0.0) {
            return Err(AttackError::InvalidPower(self.relative_power));
        }
        Ok(())
    }

    /// Probability that the honest chain mines the next block.
    pub fn honest_win_probability(&self) -> f64 {
        1.0 / (1.0 + self.relative_power)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    DirectSum,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::DirectSum => "direct-sum",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub probability: f64,
    pub method: Method,
    /// Zero for the analytic methods.
    pub std_error: f64,
    /// Monte Carlo trials; zero for the analytic methods.
    pub trials: u64,
}

impl AttackResult {
    fn analytic(probability: f64, method: Method) -> Self {
        Self {
            probability: probability.clamp(0.0, 1.0),
            method,
            std_error: 0.0,
            trials: 0,
        }
    }
}

/// `ln Pr{Y = n_y}` for `Y ~ NB(N, 1/(1+beta))` counting attacker blocks
/// found before the `N`-th honest block.
pub fn negbin_ln_pmf(n_y: u64, confirmations: u32, beta: f64) -> f64 {
    let n = f64::from(confirmations);
    let k = n_y as f64;
    let ln_honest = -beta.ln_1p();
    if n_y == 0 {
        return n * ln_honest;
    }
    if beta == 0.0 {
        return f64::NEG_INFINITY;
    }
    let ln_attacker = beta.ln() - beta.ln_1p();
    let ln_binom = ln_gamma(k + n) - ln_gamma(k + 1.0) - ln_gamma(n);
    ln_binom + n * ln_honest + k * ln_attacker
}

pub fn negbin_pmf(n_y: u64, confirmations: u32, beta: f64) -> f64 {
    negbin_ln_pmf(n_y, confirmations, beta).exp()
}

/// `P_n`, the probability of overtaking the honest chain from `n` blocks
/// behind before trailing by `N_g`.
///
/// ```text
/// P_n = 1                                            n < 0
/// P_n = 0                                            n >= N_g
/// P_n = (beta^(n+1) - beta^(N_g+1)) / (1 - beta^(N_g+1))   beta != 1
/// P_n = (N_g - n) / (N_g + 1)                        beta == 1
/// ```
pub fn catch_up_probability(n: i64, params: &AttackParams) -> f64 {
    let ng = i64::from(params.giveup_threshold);
    if n < 0 {
        return 1.0;
    }
    if n >= ng {
        return 0.0;
    }
    let beta = params.relative_power;
    if beta == 1.0 {
        return (ng - n) as f64 / (ng + 1) as f64;
    }
    if beta == 0.0 {
        return 0.0;
    }
    // beta^(n+1) (1 - beta^(N_g - n)) / (1 - beta^(N_g + 1)) via expm1 so that
    // beta close to 1 does not cancel.
    let lb = beta.ln();
    let head = ((n + 1) as f64 * lb).exp();
    head * (((ng - n) as f64 * lb).exp_m1() / ((ng + 1) as f64 * lb).exp_m1())
}

// Remaining tail mass below which the direct sum stops adding terms.
const TAIL_CUTOFF: f64 = 1e-12;

/// Evaluates `S = sum_{n_Y >= 0} Pr{Y = n_Y} P_{N - n_Y}` term by term. Once
/// `n_Y > N` every catch-up probability is 1, so the leftover negative-binomial
/// tail is added as a single mass once it drops below `1e-12`.
pub fn attack_success_direct(params: &AttackParams) -> Result<AttackResult, AttackError> {
    params.validate()?;
    let n = params.confirmations;
    let mut total = 0.0;
    let mut cdf = 0.0;
    let mut n_y: u64 = 0;
    loop {
        let pmf = negbin_pmf(n_y, n, params.relative_power);
        cdf += pmf;
        total += pmf * catch_up_probability(i64::from(n) - n_y as i64, params);
        n_y += 1;
        let tail = (1.0 - cdf).max(0.0);
        if n_y > u64::from(n) && tail < TAIL_CUTOFF {
            total += tail;
            break;
        }
        // the remaining terms all have P = 1, so the tail is exact at any cut
        if n_y > u64::from(n) + 100_000 {
            total += tail;
            break;
        }
    }
    Ok(AttackResult::analytic(total, Method::DirectSum))
}

/// Closed form of the attack success probability,
///
/// ```text
/// S = 1 - sum_{n=0}^{N} C(n+N-1, n) (1/(1+b))^N (b/(1+b))^n (1 - b^(N-n+1)) / (1 - b^(N_g+1))
/// ```
///
/// with the `beta = 1` limit `(N - n + 1) / (N_g + 1)` for the last factor.
/// Valid only for `N_g > N`, where no term reaches the abandoned state.
pub fn attack_success_closed(params: &AttackParams) -> Result<AttackResult, AttackError> {
    params.validate()?;
    let n = params.confirmations;
    let ng = params.giveup_threshold;
    if ng <= n {
        return Err(AttackError::ClosedFormOutOfDomain {
            confirmations: n,
            giveup_threshold: ng,
        });
    }
    let beta = params.relative_power;
    let deficit = |m: u32| -> f64 {
        // 1 - P_m
        if beta == 1.0 {
            f64::from(m + 1) / f64::from(ng + 1)
        } else if beta == 0.0 {
            1.0
        } else {
            let lb = beta.ln();
            (f64::from(m + 1) * lb).exp_m1() / (f64::from(ng + 1) * lb).exp_m1()
        }
    };
    let lost: f64 = (0..=n)
        .map(|k| negbin_pmf(u64::from(k), n, beta) * deficit(n - k))
        .sum();
    Ok(AttackResult::analytic(1.0 - lost, Method::ClosedForm))
}

/// Trials per independent random stream. Fixed so the estimate does not
/// depend on how chunks are spread over threads.
pub const MC_CHUNK: u64 = 1 << 16;

/// Simulates the two-phase attack `trials` times.
///
/// Trials are cut into chunks of [`MC_CHUNK`]; chunk `c` draws from a ChaCha8
/// stream seeded with `seed` on stream id `c`. Chunks run in parallel and the
/// merged count is the same for any thread count.
pub fn attack_success_montecarlo(
    params: &AttackParams,
    trials: u64,
    seed: u64,
) -> Result<AttackResult, AttackError> {
    params.validate()?;
    if trials == 0 {
        return Err(AttackError::NoTrials);
    }
    let chunks = trials.div_ceil(MC_CHUNK);
    let wins: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(trials - c * MC_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            (0..len)
                .filter(|_| simulate_attack(params, &mut rng))
                .count() as u64
        })
        .sum();
    let p = wins as f64 / trials as f64;
    Ok(AttackResult {
        probability: p,
        method: Method::MonteCarlo,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
    })
}

fn simulate_attack<R: Rng>(params: &AttackParams, rng: &mut R) -> bool {
    let honest = params.honest_win_probability();
    // phase 1: attacker blocks while the honest chain mines N
    let mut honest_blocks = 0;
    let mut deficit = i64::from(params.confirmations);
    while honest_blocks < params.confirmations {
        if rng.gen_bool(honest) {
            honest_blocks += 1;
        } else {
            deficit -= 1;
        }
    }
    // phase 2: race until overtaking or falling N_g behind
    let giveup = i64::from(params.giveup_threshold);
    loop {
        if deficit < 0 {
            return true;
        }
        if deficit >= giveup {
            return false;
        }
        if rng.gen_bool(honest) {
            deficit += 1;
        } else {
            deficit -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(n: u32, beta: f64, ng: u32) -> AttackParams {
        AttackParams::new(n, beta, ng).unwrap()
    }

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn pmf_values() {
        assert!((negbin_pmf(0, 3, 1.0) - 0.125).abs() < 1e-15);
        assert!((negbin_pmf(2, 2, 1.0) - 3.0 / 16.0).abs() < 1e-14);
        for (k, n, b) in [
            (5u64, 4u32, 0.3_f64),
            (17, 2, 0.9),
            (0, 7, 0.05),
            (40, 12, 2.0),
        ] {
            let p = 1.0 / (1.0 + b);
            let direct =
                binom(k + u64::from(n) - 1, k) * p.powi(n as i32) * (1.0 - p).powi(k as i32);
            assert!((negbin_pmf(k, n, b) - direct).abs() <= 1e-12 * direct.max(1e-300));
        }
    }

    #[test]
    fn pmf_normalises() {
        for (n, b) in [(1, 0.1), (3, 0.5), (6, 1.0), (2, 3.0)] {
            let mut total = 0.0;
            let mut k = 0;
            loop {
                let p = negbin_pmf(k, n, b);
                total += p;
                k += 1;
                if p < 1e-15 && k > 10 {
                    break;
                }
            }
            assert!((total - 1.0).abs() < 1e-12, "N={n} beta={b}: {total}");
        }
    }

    #[test]
    fn pmf_stays_finite_for_large_counts() {
        let p = negbin_pmf(400, 300, 0.8);
        assert!(p.is_finite() && p > 0.0);
    }

    #[test]
    fn catch_up_boundaries() {
        for (b, ng) in [(0.3, 4), (1.0, 6), (2.5, 1), (0.0, 3)] {
            let prm = params(2, b, ng);
            assert_eq!(catch_up_probability(-1, &prm), 1.0);
            assert_eq!(catch_up_probability(-7, &prm), 1.0);
            assert_eq!(catch_up_probability(i64::from(ng), &prm), 0.0);
            assert_eq!(catch_up_probability(i64::from(ng) + 3, &prm), 0.0);
        }
    }

    #[test]
    fn catch_up_values() {
        assert!((catch_up_probability(1, &params(1, 1.0, 4)) - 0.6).abs() < 1e-15);
        let want = (0.25 - 0.5f64.powi(5)) / (1.0 - 0.5f64.powi(5));
        assert!((catch_up_probability(1, &params(1, 0.5, 4)) - want).abs() < 1e-15);
        assert!((want - 0.225_806).abs() < 1e-6);
    }

    #[test]
    fn catch_up_continuous_through_beta_one() {
        let at_one = catch_up_probability(2, &params(1, 1.0, 7));
        let near = catch_up_probability(2, &params(1, 1.0 + 1e-9, 7));
        assert!((at_one - near).abs() < 1e-8);
    }

    #[test]
    fn catch_up_recursion() {
        for b in [0.05, 0.3, 0.7, 1.0, 1.6] {
            for ng in 1..=12u32 {
                let prm = params(1, b, ng);
                for n in 0..i64::from(ng) {
                    let lhs = catch_up_probability(n, &prm);
                    let rhs = (catch_up_probability(n + 1, &prm)
                        + b * catch_up_probability(n - 1, &prm))
                        / (1.0 + b);
                    assert!((lhs - rhs).abs() <= 1e-12, "beta={b} N_g={ng} n={n}");
                }
            }
        }
    }

    #[test]
    fn direct_sum_limits() {
        assert!(
            attack_success_direct(&params(1, 1e-9, 5))
                .unwrap()
                .probability
                < 1e-8
        );
        let even = attack_success_direct(&params(1, 1.0, 1_000))
            .unwrap()
            .probability;
        assert!(even > 0.99, "{even}");
        assert_eq!(
            attack_success_direct(&params(3, 0.0, 5))
                .unwrap()
                .probability,
            0.0
        );
    }

    #[test]
    fn direct_sum_hits_abandon_branch() {
        // N = 5 >= N_g = 2: n_Y in {0,1,2,3} start at or beyond the threshold
        let prm = params(5, 0.4, 2);
        let manual: f64 = (0..=5u64)
            .map(|k| negbin_pmf(k, 5, 0.4) * catch_up_probability(5 - k as i64, &prm))
            .sum::<f64>()
            + (1.0 - (0..=5u64).map(|k| negbin_pmf(k, 5, 0.4)).sum::<f64>());
        let got = attack_success_direct(&prm).unwrap().probability;
        assert!((got - manual).abs() < 1e-14);
        assert!(catch_up_probability(5, &prm) == 0.0);
    }

    #[test]
    fn closed_form_hand_value() {
        let s = attack_success_closed(&params(1, 1.0, 6)).unwrap();
        assert!((s.probability - (1.0 - 5.0 / 28.0)).abs() < 1e-15);
        assert_eq!(s.method, Method::ClosedForm);
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn closed_form_domain_guard() {
        assert!(matches!(
            attack_success_closed(&params(3, 0.2, 3)),
            Err(AttackError::ClosedFormOutOfDomain { .. })
        ));
    }

    #[test]
    fn closed_matches_direct_on_grid() {
        for n in [1u32, 3, 6] {
            for b in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
                for ng in n + 1..=12 {
                    let prm = params(n, b, ng);
                    let c = attack_success_closed(&prm).unwrap().probability;
                    let d = attack_success_direct(&prm).unwrap().probability;
                    assert!((c - d).abs() <= 1e-12, "N={n} b={b} N_g={ng}: {c} vs {d}");
                }
            }
        }
    }

    #[test]
    fn more_confirmations_help_at_low_power() {
        let one = attack_success_closed(&params(1, 0.1, 12))
            .unwrap()
            .probability;
        let three = attack_success_closed(&params(3, 0.1, 12))
            .unwrap()
            .probability;
        assert!(three < one);
        assert!(three > 1e-4 && three < 1e-2, "{three}");
    }

    #[test]
    fn montecarlo_degenerate_and_deterministic() {
        let r = attack_success_montecarlo(&params(2, 0.0, 4), 10_000, 1).unwrap();
        assert_eq!(r.probability, 0.0);
        let prm = params(2, 0.6, 5);
        let a = attack_success_montecarlo(&prm, 200_000, 99).unwrap();
        let b = attack_success_montecarlo(&prm, 200_000, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials, 200_000);
        assert!(matches!(
            attack_success_montecarlo(&prm, 0, 1),
            Err(AttackError::NoTrials)
        ));
    }

    #[test]
    fn montecarlo_independent_of_thread_count() {
        let prm = params(1, 0.5, 6);
        let wide = attack_success_montecarlo(&prm, 300_000, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let narrow = pool.install(|| attack_success_montecarlo(&prm, 300_000, 5).unwrap());
        assert_eq!(wide, narrow);
    }

    #[test]
    fn montecarlo_agrees_with_direct() {
        let prm = params(1, 0.5, 6);
        let mc = attack_success_montecarlo(&prm, 1_000_000, 2024).unwrap();
        let d = attack_success_direct(&prm).unwrap().probability;
        assert!(
            (mc.probability - d).abs() <= 3.0 * mc.std_error,
            "{mc:?} vs {d}"
        );
    }

    #[test]
    fn invalid_params() {
        assert_eq!(
            AttackParams::new(0, 0.5, 3),
            Err(AttackError::NoConfirmations)
        );
        assert_eq!(
            AttackParams::new(1, 0.5, 0),
            Err(AttackError::NoGiveUpThreshold)
        );
        assert!(AttackParams::new(1, -0.5, 3).is_err());
        assert!(AttackParams::new(1, f64::NAN, 3).is_err());
    }

    proptest! {
        #[test]
        fn probabilities_bounded(n in 1u32..10, b in 0.0f64..3.0, ng in 1u32..20) {
            let prm = params(n, b, ng);
            let d = attack_success_direct(&prm).unwrap().probability;
            prop_assert!((0.0..=1.0).contains(&d));
            if ng > n {
                let c = attack_success_closed(&prm).unwrap().probability;
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
    }
}
