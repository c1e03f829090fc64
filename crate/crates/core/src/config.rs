//! Chain configuration tuple and its validation.
//!
//! Every engine in the crate consumes a [`ChainConfig`]: the rates of the four
//! event streams (arrival, mining, rejection, service), the number of access
//! links, the block capacity, the rejection batch and the confirmation depth.
//! Rates share one implicit time unit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} must be finite and positive, got {value}")]
    NonPositiveRate { field: &'static str, value: f64 },
    #[error("{field} must be at least 1")]
    ZeroCount { field: &'static str },
    #[error("rejection batch {rejection_batch} exceeds block capacity {block_capacity}")]
    CapacityViolation {
        rejection_batch: u32,
        block_capacity: u32,
    },
    #[error(
        "service queue unstable: arrival rate {arrival_rate} >= servers x service rate {capacity}"
    )]
    UnstableServiceQueue { arrival_rate: f64, capacity: f64 },
    #[error("mining queue unstable: arrival rate {arrival_rate} >= drain capacity {capacity}")]
    UnstableMiningQueue { arrival_rate: f64, capacity: f64 },
    #[error("traffic intensity must lie in (0, 1), got {0}")]
    IntensityOutOfRange(f64),
}

/// Configuration of a single chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Request arrival rate.
    pub arrival_rate: f64,
    /// Block mining rate.
    pub mining_rate: f64,
    /// Rate of rejection events on the pending pool.
    pub rejection_rate: f64,
    /// Per-server service completion rate.
    pub service_rate: f64,
    /// Number of concurrent access links.
    pub servers: u32,
    /// Maximum requests mined into one block.
    pub block_capacity: u32,
    /// Requests discarded by one rejection event.
    pub rejection_batch: u32,
    /// Confirmations required before service. Inclusion counts as the first.
    pub confirmations: u32,
}

impl Default for ChainConfig {
    /// The exemplar baseline: `R_m = R_s = 1`, `R_r = 0.1 R_m`, ten servers,
    /// blocks of three, one confirmation, at service intensity 0.2.
    fn default() -> Self {
        Self {
            arrival_rate: 2.0,
            mining_rate: 1.0,
            rejection_rate: 0.1,
            service_rate: 1.0,
            servers: 10,
            block_capacity: 3,
            rejection_batch: 1,
            confirmations: 1,
        }
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::NonPositiveRate { field, value })
    }
}

fn count(field: &'static str, value: u32) -> Result<(), ConfigError> {
    if value >= 1 {
        Ok(())
    } else {
        Err(ConfigError::ZeroCount { field })
    }
}

impl ChainConfig {
    /// Checks every invariant and reports the first violation.
    ///
    /// Order of checks: rates, integer counts, `r <= k`, service-stage
    /// stability, mining-stage stability.
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("arrival_rate", self.arrival_rate)?;
        positive("mining_rate", self.mining_rate)?;
        positive("service_rate", self.service_rate)?;
        if !(self.rejection_rate.is_finite() && self.rejection_rate >= 0.0) {
            return Err(ConfigError::NonPositiveRate {
                field: "rejection_rate",
                value: self.rejection_rate,
            });
        }
        count("servers", self.servers)?;
        count("block_capacity", self.block_capacity)?;
        count("rejection_batch", self.rejection_batch)?;
        count("confirmations", self.confirmations)?;
        if self.rejection_batch > self.block_capacity {
            return Err(ConfigError::CapacityViolation {
                rejection_batch: self.rejection_batch,
                block_capacity: self.block_capacity,
            });
        }
        let service_capacity = self.service_capacity();
        if self.arrival_rate >= service_capacity {
            return Err(ConfigError::UnstableServiceQueue {
                arrival_rate: self.arrival_rate,
                capacity: service_capacity,
            });
        }
        let drain = self.mining_drain_capacity();
        if self.arrival_rate >= drain {
            return Err(ConfigError::UnstableMiningQueue {
                arrival_rate: self.arrival_rate,
                capacity: drain,
            });
        }
        Ok(())
    }

    /// `s * R_s`.
    pub fn service_capacity(&self) -> f64 {
        f64::from(self.servers) * self.service_rate
    }

    /// `k * R_m + r * R_r`, the largest rate at which the pending pool can empty.
    pub fn mining_drain_capacity(&self) -> f64 {
        f64::from(self.block_capacity) * self.mining_rate
            + f64::from(self.rejection_batch) * self.rejection_rate
    }

    /// Service-stage utilisation `R_a / (s R_s)`.
    pub fn intensity(&self) -> f64 {
        self.arrival_rate / self.service_capacity()
    }

    /// Copy of `self` with the arrival rate set so that [`intensity`](Self::intensity)
    /// equals `rho`.
    pub fn with_intensity(&self, rho: f64) -> Result<Self, ConfigError> {
        Ok(Self {
            arrival_rate: arrival_rate_for_intensity(rho, self)?,
            ..*self
        })
    }
}

/// Arrival rate that puts the service stage of `config` at utilisation `rho`.
pub fn arrival_rate_for_intensity(rho: f64, config: &ChainConfig) -> Result<f64, ConfigError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(ConfigError::IntensityOutOfRange(rho));
    }
    Ok(rho * config.service_capacity())
}

/// Inverse of [`arrival_rate_for_intensity`].
pub fn intensity_of(config: &ChainConfig) -> f64 {
    config.intensity()
}

/// A secondary chain nested under a primary chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchicalConfig {
    pub primary: ChainConfig,
    pub secondary: ChainConfig,
}

impl HierarchicalConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.primary.validate()?;
        self.secondary.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tandem() -> ChainConfig {
        ChainConfig {
            arrival_rate: 0.5,
            mining_rate: 1.0,
            rejection_rate: 0.0,
            service_rate: 1.0,
            servers: 1,
            block_capacity: 1,
            rejection_batch: 1,
            confirmations: 1,
        }
    }

    #[test]
    fn stable_tandem_is_valid() {
        assert_eq!(tandem().validate(), Ok(()));
        assert_eq!(ChainConfig::default().validate(), Ok(()));
    }

    #[test]
    fn overloaded_service_stage() {
        let cfg = ChainConfig {
            arrival_rate: 2.0,
            ..tandem()
        };
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::UnstableServiceQueue { .. })
        ));
    }

    #[test]
    fn overloaded_mining_stage() {
        let cfg = ChainConfig {
            arrival_rate: 1.5,
            servers: 4,
            ..tandem()
        };
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::UnstableMiningQueue {
                arrival_rate: 1.5,
                capacity: 1.0
            })
        );
    }

    #[test]
    fn rejection_adds_drain_capacity() {
        let cfg = ChainConfig {
            arrival_rate: 1.5,
            rejection_rate: 0.6,
            servers: 4,
            ..tandem()
        };
        assert_eq!(cfg.mining_drain_capacity(), 1.6);
        assert_eq!(cfg.validate(), Ok(()));
    }

    #[test]
    fn first_violation_is_reported() {
        let cfg = ChainConfig {
            arrival_rate: 0.0,
            mining_rate: -1.0,
            ..tandem()
        };
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::NonPositiveRate {
                field: "arrival_rate",
                value: 0.0
            })
        );
        let cfg = ChainConfig {
            service_rate: f64::NAN,
            ..tandem()
        };
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::NonPositiveRate {
                field: "service_rate",
                ..
            })
        ));
        let cfg = ChainConfig {
            rejection_rate: -0.1,
            ..tandem()
        };
        assert!(cfg.validate().is_err());
        let cfg = ChainConfig {
            servers: 0,
            ..tandem()
        };
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::ZeroCount { field: "servers" })
        );
    }

    #[test]
    fn rejection_batch_bounded_by_capacity() {
        let cfg = ChainConfig {
            block_capacity: 2,
            rejection_batch: 3,
            ..tandem()
        };
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::CapacityViolation { .. })
        ));
    }

    #[test]
    fn intensity_conversions() {
        let one = ChainConfig {
            servers: 1,
            service_rate: 1.0,
            ..ChainConfig::default()
        };
        assert_eq!(arrival_rate_for_intensity(0.5, &one), Ok(0.5));
        let ten = ChainConfig::default();
        assert_eq!(arrival_rate_for_intensity(0.8, &ten), Ok(8.0));
        let cfg = ChainConfig {
            arrival_rate: 4.0,
            ..ten
        };
        assert_eq!(intensity_of(&cfg), 0.4);
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(arrival_rate_for_intensity(bad, &ten).is_err());
        }
    }

    #[test]
    fn rejects_unknown_json_fields() {
        let json = r#"{"arrival_rate":1,"mining_rate":2,"rejection_rate":0,"service_rate":1,
            "servers":2,"block_capacity":1,"rejection_batch":1,"confirmations":1,"typo":3}"#;
        assert!(serde_json::from_str::<ChainConfig>(json).is_err());
    }

    proptest! {
        #[test]
        fn intensity_round_trip(rho in 1e-6f64..0.999_999, servers in 1u32..200, rate in 1e-3f64..1e3) {
            let cfg = ChainConfig { servers, service_rate: rate, ..ChainConfig::default() };
            let ra = arrival_rate_for_intensity(rho, &cfg).unwrap();
            let back = intensity_of(&ChainConfig { arrival_rate: ra, ..cfg });
            prop_assert!(((back - rho) / rho).abs() <= 1e-12);
        }
    }
}
