//! Closed-form latency of the decoupled tandem: an M/M/1 block-inclusion stage
//! feeding an M/M/s service stage, plus a fixed confirmation wait.
//!
//! The formulas are exact only when blocks carry a single request and nothing
//! is rejected (`k = 1`, `R_r = 0`). Other configurations are accepted in
//! [`Mode::Approximate`] and labelled as such.

use thiserror::Error;

use crate::config::{ChainConfig, ConfigError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("servers must be at least 1")]
    NoServers,
    #[error("offered load must be finite and non-negative, got {0}")]
    NegativeLoad(f64),
    #[error("offered load {load} is not below the server count {servers}")]
    Unstable { servers: u32, load: f64 },
    #[error("block stage unstable: arrival rate {arrival_rate} >= mining rate {mining_rate}")]
    UnstableBlockStage { arrival_rate: f64, mining_rate: f64 },
    #[error("closed form needs k = 1 and no rejection; got k = {block_capacity}, R_r = {rejection_rate}")]
    NotSingleRequestBlocks {
        block_capacity: u32,
        rejection_rate: f64,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Erlang C: probability that an arrival to an M/M/s queue with offered load
/// `a = R_a / R_s` has to wait.
///
/// Runs the Erlang B recurrence `B(n) = a B(n-1) / (n + a B(n-1))` and converts
/// with `C = B / (1 - (a/s)(1 - B))`, which stays finite for large `s`.
pub fn erlang_c(servers: u32, offered_load: f64) -> Result<f64, AnalyticError> {
    if servers == 0 {
        return Err(AnalyticError::NoServers);
    }
    if !(offered_load.is_finite() && offered_load >= 0.0) {
        return Err(AnalyticError::NegativeLoad(offered_load));
    }
    let s = f64::from(servers);
    if offered_load >= s {
        return Err(AnalyticError::Unstable {
            servers,
            load: offered_load,
        });
    }
    let a = offered_load;
    let mut b = 1.0;
    for n in 1..=servers {
        b = a * b / (f64::from(n) + a * b);
    }
    let rho = a / s;
    Ok((b / (1.0 - rho * (1.0 - b))).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Refuse configurations outside `k = 1`, `R_r = 0`.
    #[default]
    Exact,
    /// Evaluate the same formulas anyway and flag the result.
    Approximate,
}

/// Components of the closed-form latency, in time units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyBreakdown {
    /// `1 / (R_m - R_a)`.
    pub block_wait: f64,
    /// `C(s, R_a/R_s) / (s R_s - R_a) + 1 / R_s`.
    pub service_stage: f64,
    /// `(N - 1) / R_m`.
    pub confirmation_wait: f64,
    pub sojourn: f64,
    /// Sojourn minus one service time.
    pub total: f64,
    /// Set when the configuration lies outside the exact regime.
    pub approximate: bool,
}

pub fn closed_form_latency(config: &ChainConfig) -> Result<LatencyBreakdown, AnalyticError> {
    closed_form_latency_with(config, Mode::Exact)
}

pub fn closed_form_latency_with(
    config: &ChainConfig,
    mode: Mode,
) -> Result<LatencyBreakdown, AnalyticError> {
    let approximate = config.block_capacity != 1 || config.rejection_rate != 0.0;
    if approximate && mode == Mode::Exact {
        return Err(AnalyticError::NotSingleRequestBlocks {
            block_capacity: config.block_capacity,
            rejection_rate: config.rejection_rate,
        });
    }
    if config.arrival_rate >= config.mining_rate {
        return Err(AnalyticError::UnstableBlockStage {
            arrival_rate: config.arrival_rate,
            mining_rate: config.mining_rate,
        });
    }
    config.validate()?;
    let ra = config.arrival_rate;
    let rs = config.service_rate;
    let block_wait = 1.0 / (config.mining_rate - ra);
    let wait_probability = erlang_c(config.servers, ra / rs)?;
    let service_stage = wait_probability / (config.service_capacity() - ra) + 1.0 / rs;
    let confirmation_wait = f64::from(config.confirmations - 1) / config.mining_rate;
    let sojourn = block_wait + service_stage + confirmation_wait;
    Ok(LatencyBreakdown {
        block_wait,
        service_stage,
        confirmation_wait,
        sojourn,
        total: sojourn - 1.0 / rs,
        approximate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tandem(arrival_rate: f64, servers: u32) -> ChainConfig {
        ChainConfig {
            arrival_rate,
            mining_rate: 1.0,
            rejection_rate: 0.0,
            service_rate: 1.0,
            servers,
            block_capacity: 1,
            rejection_batch: 1,
            confirmations: 1,
        }
    }

    // Direct evaluation with factorials, fine for small s.
    fn erlang_c_factorial(s: u32, a: f64) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        let tail = a.powi(s as i32) / fact(s) * f64::from(s) / (f64::from(s) - a);
        let head: f64 = (0..s).map(|n| a.powi(n as i32) / fact(n)).sum();
        tail / (head + tail)
    }

    #[test]
    fn erlang_c_reference_points() {
        assert!((erlang_c(1, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((erlang_c(2, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(erlang_c(10, 1e-12).unwrap() < 1e-12);
        assert_eq!(erlang_c(10, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn erlang_c_matches_factorial_form() {
        for s in 1..=20u32 {
            for frac in [0.1, 0.4, 0.7, 0.95] {
                let a = frac * f64::from(s);
                let got = erlang_c(s, a).unwrap();
                let want = erlang_c_factorial(s, a);
                assert!((got - want).abs() < 1e-12, "s={s} a={a}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn erlang_c_large_server_counts() {
        let c = erlang_c(500, 480.0).unwrap();
        assert!(c.is_finite() && c > 0.0 && c < 1.0);
        let c = erlang_c(2_000, 1_990.0).unwrap();
        assert!(c.is_finite() && c > 0.5 && c < 1.0);
    }

    #[test]
    fn erlang_c_errors() {
        assert_eq!(erlang_c(0, 0.5), Err(AnalyticError::NoServers));
        assert!(matches!(
            erlang_c(2, -0.1),
            Err(AnalyticError::NegativeLoad(_))
        ));
        assert!(matches!(
            erlang_c(2, 2.0),
            Err(AnalyticError::Unstable { .. })
        ));
    }

    #[test]
    fn erlang_c_monotone_on_grid() {
        for s in 1..=30u32 {
            let mut last = 0.0;
            for step in 0..50 {
                let a = f64::from(s) * f64::from(step) / 50.0;
                let c = erlang_c(s, a).unwrap();
                assert!(c >= last);
                last = c;
            }
        }
        for a in [0.3_f64, 0.9, 2.5, 7.0] {
            let first = a.floor() as u32 + 1;
            let mut last = 1.0;
            for s in first..first + 30 {
                let c = erlang_c(s, a).unwrap();
                assert!(c <= last);
                last = c;
            }
        }
    }

    #[test]
    fn worked_tandem_example() {
        let b = closed_form_latency(&tandem(0.5, 1)).unwrap();
        assert!((b.block_wait - 2.0).abs() < 1e-12);
        assert!((b.service_stage - 2.0).abs() < 1e-12);
        assert_eq!(b.confirmation_wait, 0.0);
        assert!((b.sojourn - 4.0).abs() < 1e-12);
        assert!((b.total - 3.0).abs() < 1e-12);
        assert!(!b.approximate);
    }

    #[test]
    fn confirmation_wait() {
        let cfg = ChainConfig {
            confirmations: 4,
            mining_rate: 2.0,
            ..tandem(0.5, 1)
        };
        assert_eq!(closed_form_latency(&cfg).unwrap().confirmation_wait, 1.5);
    }

    #[test]
    fn batch_configs_need_approximate_mode() {
        let cfg = ChainConfig {
            block_capacity: 3,
            ..tandem(0.5, 2)
        };
        assert!(matches!(
            closed_form_latency(&cfg),
            Err(AnalyticError::NotSingleRequestBlocks { .. })
        ));
        let b = closed_form_latency_with(&cfg, Mode::Approximate).unwrap();
        assert!(b.approximate);
        let rejecting = ChainConfig {
            rejection_rate: 0.1,
            ..tandem(0.5, 2)
        };
        assert!(closed_form_latency(&rejecting).is_err());
    }

    #[test]
    fn unstable_stages() {
        let cfg = ChainConfig {
            arrival_rate: 1.2,
            mining_rate: 1.0,
            servers: 4,
            ..tandem(0.5, 4)
        };
        assert!(matches!(
            closed_form_latency(&cfg),
            Err(AnalyticError::UnstableBlockStage { .. })
        ));
        let cfg = ChainConfig {
            mining_rate: 5.0,
            ..tandem(1.5, 1)
        };
        assert!(closed_form_latency(&cfg).is_err());
    }

    #[test]
    fn stages_diverge_near_saturation() {
        let eps = 1e-6;
        let block = ChainConfig {
            arrival_rate: 1.0 - eps,
            mining_rate: 1.0,
            servers: 4,
            ..tandem(0.5, 4)
        };
        assert!(closed_form_latency(&block).unwrap().block_wait > 1e3);
        let service = ChainConfig {
            arrival_rate: 3.0 * (1.0 - eps),
            mining_rate: 10.0,
            servers: 3,
            ..tandem(0.5, 3)
        };
        assert!(closed_form_latency(&service).unwrap().service_stage > 1e3);
    }

    proptest! {
        #[test]
        fn single_server_collapse(ra in 0.01f64..0.99, rs in 0.5f64..5.0) {
            let cfg = ChainConfig {
                arrival_rate: ra * rs,
                mining_rate: 10.0 * rs,
                service_rate: rs,
                ..tandem(0.5, 1)
            };
            let b = closed_form_latency(&cfg).unwrap();
            let exact = 1.0 / (rs - ra * rs);
            prop_assert!((b.service_stage - exact).abs() <= 1e-12 * exact);
        }

        #[test]
        fn erlang_c_single_server_identity(a in 0.0f64..0.999_999) {
            prop_assert!((erlang_c(1, a).unwrap() - a).abs() <= 1e-12);
        }

        #[test]
        fn components_positive_inside_stability(rho in 0.01f64..0.99, s in 1u32..40, n in 1u32..8) {
            let cfg = ChainConfig {
                arrival_rate: rho * f64::from(s),
                mining_rate: 1.5 * f64::from(s),
                servers: s,
                confirmations: n,
                ..tandem(0.5, 1)
            };
            let b = closed_form_latency(&cfg).unwrap();
            prop_assert!(b.block_wait > 0.0 && b.block_wait.is_finite());
            prop_assert!(b.service_stage > 0.0 && b.service_stage.is_finite());
            prop_assert!(b.confirmation_wait >= 0.0);
            prop_assert!((b.sojourn - (b.block_wait + b.service_stage + b.confirmation_wait)).abs() < 1e-12);
            prop_assert!(b.total >= 0.0);
        }
    }
}
