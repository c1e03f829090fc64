//! Discrete-event simulation of one chain and of a secondary chain feeding a
//! primary chain.
//!
//! Each run is a serial loop over a future event list. Mining and rejection
//! clocks only run while they can act (a nonempty pool, or blocks still
//! awaiting confirmations in event-driven mode); since the clocks are
//! exponential, restarting them on enablement is exact.

mod engine;
pub mod stats;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ChainConfig, ConfigError, HierarchicalConfig};

pub use stats::LatencySummary;

/// Pending pool or service queue size treated as runaway growth.
pub const DEFAULT_MAX_BACKLOG: usize = 1_000_000;
/// Fraction of leading samples discarded as transient.
pub const WARMUP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("target_served must be at least 1")]
    NoTarget,
    #[error(
        "{chain} chain backlog exceeded {limit} requests at t = {time}; configuration is unstable"
    )]
    Unstable {
        chain: ChainRole,
        limit: usize,
        time: f64,
    },
    #[error("trace output failed: {0}")]
    Trace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfirmationMode {
    /// Each request waits `N - 1` independent `Exp(R_m)` delays after inclusion.
    #[default]
    Additive,
    /// Each request waits for `N - 1` further blocks actually mined.
    EventDriven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainRole {
    Single,
    Primary,
    Secondary,
}

impl ChainRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChainRole::Single => "single",
            ChainRole::Primary => "primary",
            ChainRole::Secondary => "secondary",
        }
    }
}

impl std::fmt::Display for ChainRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disposition {
    Served,
    Rejected,
    InFlight,
}

impl Disposition {
    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::Served => "served",
            Disposition::Rejected => "rejected",
            Disposition::InFlight => "in-flight",
        }
    }
}

/// Life cycle of one request on one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub submitted_at: f64,
    pub mined_at: Option<f64>,
    pub confirmed_at: Option<f64>,
    pub service_start_at: Option<f64>,
    pub disposition: Disposition,
    /// Index of the secondary record this primary request was injected for.
    pub origin: Option<usize>,
}

impl RequestRecord {
    fn new(submitted_at: f64, origin: Option<usize>) -> Self {
        Self {
            submitted_at,
            mined_at: None,
            confirmed_at: None,
            service_start_at: None,
            disposition: Disposition::InFlight,
            origin,
        }
    }

    /// `submitted <= mined <= confirmed <= service start`, and rejected
    /// requests never reach service.
    pub fn is_ordered(&self) -> bool {
        let mut last = self.submitted_at;
        for t in [self.mined_at, self.confirmed_at, self.service_start_at]
            .into_iter()
            .flatten()
        {
            if t < last {
                return false;
            }
            last = t;
        }
        match self.disposition {
            Disposition::Rejected => self.service_start_at.is_none(),
            Disposition::Served => self.service_start_at.is_some(),
            Disposition::InFlight => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub role: ChainRole,
    pub generated: usize,
    pub served: usize,
    pub rejected: usize,
    /// Largest number of requests mined into one block.
    pub max_block_batch: usize,
    /// Largest number of requests removed by one rejection event.
    pub max_rejection_batch: usize,
    pub records: Vec<RequestRecord>,
}

impl ChainStats {
    pub fn in_flight(&self) -> usize {
        self.generated - self.served - self.rejected
    }
}

/// Per-chain latency components of hierarchical runs, over the same
/// end-to-end completed requests, so `e2e = secondary + primary` sample by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalBreakdown {
    pub secondary: LatencySummary,
    pub primary: LatencySummary,
    pub e2e: LatencySummary,
    pub secondary_samples: Vec<f64>,
    pub primary_samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Post-warm-up latencies, in completion order. End-to-end in hierarchical runs.
    pub latency_samples: Vec<f64>,
    pub summary: LatencySummary,
    /// End-user requests that reached (final) service.
    pub served_count: usize,
    pub rejected_count: usize,
    pub generated_count: usize,
    pub warmup_discarded: usize,
    pub end_time: f64,
    pub events_processed: u64,
    pub chains: Vec<ChainStats>,
    pub hierarchical: Option<HierarchicalBreakdown>,
}

impl SimResult {
    pub fn mean(&self) -> f64 {
        self.summary.mean
    }

    pub fn variance(&self) -> f64 {
        self.summary.variance
    }

    pub fn confidence_interval_95(&self) -> (f64, f64) {
        (self.summary.ci_low, self.summary.ci_high)
    }

    pub fn in_flight_count(&self) -> usize {
        self.generated_count - self.served_count - self.rejected_count
    }

    /// Writes every request record as CSV.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<(), SimError> {
        let err = |e: csv::Error| SimError::Trace(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "request_id",
            "chain",
            "submitted_at",
            "mined_at",
            "confirmed_at",
            "service_start_at",
            "disposition",
        ])
        .map_err(err)?;
        let opt = |t: Option<f64>| t.map(|v| v.to_string()).unwrap_or_default();
        for chain in &self.chains {
            for (id, r) in chain.records.iter().enumerate() {
                w.write_record([
                    id.to_string(),
                    chain.role.as_str().to_string(),
                    r.submitted_at.to_string(),
                    opt(r.mined_at),
                    opt(r.confirmed_at),
                    opt(r.service_start_at),
                    r.disposition.as_str().to_string(),
                ])
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| SimError::Trace(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub target_served: usize,
    pub seed: u64,
    pub mode: ConfirmationMode,
    pub warmup_fraction: f64,
    pub max_backlog: usize,
    /// Hierarchical only: whether the primary chain carries its own arrivals.
    pub primary_background: bool,
}

impl SimOptions {
    pub fn new(target_served: usize, seed: u64) -> Self {
        Self {
            target_served,
            seed,
            mode: ConfirmationMode::Additive,
            warmup_fraction: WARMUP_FRACTION,
            max_backlog: DEFAULT_MAX_BACKLOG,
            primary_background: true,
        }
    }

    pub fn with_mode(self, mode: ConfirmationMode) -> Self {
        Self { mode, ..self }
    }
}

pub fn simulate_chain(
    config: &ChainConfig,
    target_served: usize,
    seed: u64,
    mode: ConfirmationMode,
) -> Result<SimResult, SimError> {
    simulate_chain_with(
        config,
        &SimOptions::new(target_served, seed).with_mode(mode),
    )
}

pub fn simulate_chain_with(
    config: &ChainConfig,
    options: &SimOptions,
) -> Result<SimResult, SimError> {
    config.validate()?;
    if options.target_served == 0 {
        return Err(SimError::NoTarget);
    }
    engine::run(&[(ChainRole::Single, *config, true)], options)
}

pub fn simulate_hierarchical(
    hconfig: &HierarchicalConfig,
    target_served: usize,
    seed: u64,
    mode: ConfirmationMode,
) -> Result<SimResult, SimError> {
    simulate_hierarchical_with(
        hconfig,
        &SimOptions::new(target_served, seed).with_mode(mode),
    )
}

/// The primary chain's own `arrival_rate` is background traffic on top of
/// the injected requests; it is ignored when `primary_background` is off.
/// The primary configuration is validated on its background load alone.
pub fn simulate_hierarchical_with(
    hconfig: &HierarchicalConfig,
    options: &SimOptions,
) -> Result<SimResult, SimError> {
    hconfig.validate()?;
    if options.target_served == 0 {
        return Err(SimError::NoTarget);
    }
    engine::run(
        &[
            (
                ChainRole::Primary,
                hconfig.primary,
                options.primary_background,
            ),
            (ChainRole::Secondary, hconfig.secondary, true),
        ],
        options,
    )
}
