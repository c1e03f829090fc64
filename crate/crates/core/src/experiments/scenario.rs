use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ExperimentError;
use crate::attack::Method;
use crate::config::{ChainConfig, ConfigError};
use crate::sim::ConfirmationMode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Markov,
    ClosedForm,
    Simulation,
    Attack,
    HierarchicalSimulation,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Markov => "markov",
            Engine::ClosedForm => "closed-form",
            Engine::Simulation => "simulation",
            Engine::Attack => "attack",
            Engine::HierarchicalSimulation => "hierarchical-simulation",
        }
    }
}

/// A scenario file: one engine, a base configuration and up to two sweep axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub name: String,
    pub engine: Engine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<HierarchySpec>,
    /// Attack model settings. With the markov engine, adds an attack
    /// probability column evaluated at the chain's confirmation depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
    pub sweep: Vec<SweepAxis>,
    #[serde(default)]
    pub replication: Replication,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySpec {
    pub primary: ChainConfig,
    pub secondary: ChainConfig,
    /// Whether the primary chain carries its own arrivals on top of the
    /// injected secondary traffic.
    #[serde(default = "yes")]
    pub primary_background: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub relative_power: f64,
    pub giveup_threshold: u32,
    /// Required by the attack engine unless swept; the markov engine uses
    /// the chain's confirmations when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmations: Option<u32>,
    #[serde(default = "direct_sum")]
    pub method: Method,
}

fn direct_sum() -> Method {
    Method::DirectSum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// A single swept parameter with scalar values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    /// Several parameters moved together; each value is a tuple.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<String>>,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Replication {
    pub seed: u64,
    pub target_served: usize,
    pub trials: u64,
    pub confirmation_mode: ConfirmationMode,
}

impl Default for Replication {
    fn default() -> Self {
        Self {
            seed: 1,
            target_served: 100_000,
            trials: 1_000_000,
            confirmation_mode: ConfirmationMode::Additive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    ArrivalRate,
    MiningRate,
    RejectionRate,
    ServiceRate,
    Servers,
    BlockCapacity,
    RejectionBatch,
    Confirmations,
    Intensity,
}

impl Field {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "arrival_rate" => Field::ArrivalRate,
            "mining_rate" => Field::MiningRate,
            "rejection_rate" => Field::RejectionRate,
            "service_rate" => Field::ServiceRate,
            "servers" => Field::Servers,
            "block_capacity" => Field::BlockCapacity,
            "rejection_batch" => Field::RejectionBatch,
            "confirmations" => Field::Confirmations,
            "intensity" => Field::Intensity,
            _ => return None,
        })
    }

    fn is_integer(self) -> bool {
        matches!(
            self,
            Field::Servers | Field::BlockCapacity | Field::RejectionBatch | Field::Confirmations
        )
    }

    fn set(self, cfg: &mut ChainConfig, v: f64) {
        match self {
            Field::ArrivalRate => cfg.arrival_rate = v,
            Field::MiningRate => cfg.mining_rate = v,
            Field::RejectionRate => cfg.rejection_rate = v,
            Field::ServiceRate => cfg.service_rate = v,
            Field::Servers => cfg.servers = v as u32,
            Field::BlockCapacity => cfg.block_capacity = v as u32,
            Field::RejectionBatch => cfg.rejection_batch = v as u32,
            Field::Confirmations => cfg.confirmations = v as u32,
            Field::Intensity => unreachable!("intensity is applied separately"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Chain,
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Config(Target, Field),
    AttackPower,
    AttackGiveUp,
    AttackConfirmations,
}

impl Param {
    fn parse(path: &str, engine: Engine, has_attack: bool) -> Option<Self> {
        let (head, tail) = path.split_once('.')?;
        let target = match head {
            "chain"
                if matches!(
                    engine,
                    Engine::Markov | Engine::ClosedForm | Engine::Simulation
                ) =>
            {
                Target::Chain
            }
            "primary" if engine == Engine::HierarchicalSimulation => Target::Primary,
            "secondary" if engine == Engine::HierarchicalSimulation => Target::Secondary,
            "attack" if engine == Engine::Attack || (engine == Engine::Markov && has_attack) => {
                return match tail {
                    "relative_power" => Some(Param::AttackPower),
                    "giveup_threshold" => Some(Param::AttackGiveUp),
                    "confirmations" => Some(Param::AttackConfirmations),
                    _ => None,
                };
            }
            _ => return None,
        };
        Field::parse(tail).map(|f| Param::Config(target, f))
    }

    fn is_integer(self) -> bool {
        match self {
            Param::Config(_, f) => f.is_integer(),
            Param::AttackPower => false,
            Param::AttackGiveUp | Param::AttackConfirmations => true,
        }
    }
}

/// A validated axis: parameters and one tuple of values per position.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub names: Vec<String>,
    pub params: Vec<Param>,
    pub values: Vec<Vec<f64>>,
}

/// Base configuration with every sweep coordinate applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointConfig {
    pub chain: Option<ChainConfig>,
    pub hierarchy: Option<HierarchySpec>,
    pub attack: Option<AttackSpec>,
}

/// One grid point, possibly invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub index: usize,
    pub config: PointConfig,
    /// Set when the coordinates could not be applied, e.g. an intensity
    /// outside `(0, 1)`.
    pub error: Option<ConfigError>,
}

fn malformed(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Malformed(msg.into())
}

impl ScenarioSpec {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.axes().map(|_| ())
    }

    /// Checks the document and resolves the sweep axes.
    pub fn axes(&self) -> Result<Vec<Axis>, ExperimentError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(malformed(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.name.trim().is_empty() {
            return Err(malformed("name: must not be empty"));
        }
        match self.engine {
            Engine::Markov | Engine::ClosedForm | Engine::Simulation => {
                if self.chain.is_none() {
                    return Err(malformed(format!(
                        "chain: required by engine {}",
                        self.engine.as_str()
                    )));
                }
            }
            Engine::HierarchicalSimulation => {
                if self.hierarchy.is_none() {
                    return Err(malformed(
                        "hierarchy: required by engine hierarchical-simulation",
                    ));
                }
            }
            Engine::Attack => {
                if self.attack.is_none() {
                    return Err(malformed("attack: required by engine attack"));
                }
            }
        }
        if self.replication.target_served == 0 {
            return Err(malformed("replication.target_served: must be at least 1"));
        }
        if self.replication.trials == 0 {
            return Err(malformed("replication.trials: must be at least 1"));
        }
        if self.sweep.is_empty() {
            return Err(malformed("sweep: at least one axis is required"));
        }
        if self.sweep.len() > 2 {
            return Err(malformed(format!(
                "sweep: at most two axes, got {}",
                self.sweep.len()
            )));
        }
        let axes = self
            .sweep
            .iter()
            .enumerate()
            .map(|(i, a)| self.resolve_axis(i, a))
            .collect::<Result<Vec<_>, _>>()?;
        let mut seen = Vec::new();
        for p in axes.iter().flat_map(|a| a.params.iter().zip(&a.names)) {
            if seen.contains(p.0) {
                return Err(malformed(format!("sweep: parameter {} swept twice", p.1)));
            }
            seen.push(*p.0);
        }
        if self.engine == Engine::Attack
            && self.attack.is_some_and(|a| a.confirmations.is_none())
            && !seen.contains(&Param::AttackConfirmations)
        {
            return Err(malformed(
                "attack.confirmations: required by engine attack unless swept",
            ));
        }
        Ok(axes)
    }

    fn resolve_axis(&self, i: usize, axis: &SweepAxis) -> Result<Axis, ExperimentError> {
        let at = format!("sweep[{i}]");
        let names = match (&axis.parameter, &axis.parameters) {
            (Some(p), None) => vec![p.clone()],
            (None, Some(ps)) if !ps.is_empty() => ps.clone(),
            (None, Some(_)) => {
                return Err(malformed(format!("{at}.parameters: must not be empty")))
            }
            _ => {
                return Err(malformed(format!(
                    "{at}: give exactly one of `parameter` or `parameters`"
                )))
            }
        };
        let params = names
            .iter()
            .map(|n| {
                Param::parse(n, self.engine, self.attack.is_some()).ok_or_else(|| {
                    malformed(format!(
                        "{at}: unknown parameter `{n}` for engine {}",
                        self.engine.as_str()
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if axis.values.is_empty() {
            return Err(malformed(format!("{at}.values: must not be empty")));
        }
        let linked = axis.parameters.is_some();
        let mut values = Vec::with_capacity(axis.values.len());
        for (j, v) in axis.values.iter().enumerate() {
            let at = format!("{at}.values[{j}]");
            let tuple: Vec<&Value> = match (linked, v) {
                (false, v) => vec![v],
                (true, Value::Array(items)) if items.len() == params.len() => {
                    items.iter().collect()
                }
                (true, _) => {
                    return Err(malformed(format!(
                        "{at}: expected an array of {} numbers",
                        params.len()
                    )))
                }
            };
            let mut row = Vec::with_capacity(tuple.len());
            for (p, v) in params.iter().zip(tuple) {
                let x = v
                    .as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| malformed(format!("{at}: `{v}` is not a number")))?;
                if p.is_integer() && !(x >= 0.0 && x.fract() == 0.0 && x <= f64::from(u32::MAX)) {
                    return Err(malformed(format!(
                        "{at}: `{v}` must be a non-negative integer"
                    )));
                }
                row.push(x);
            }
            values.push(row);
        }
        Ok(Axis {
            names,
            params,
            values,
        })
    }

    /// Materialises the grid in row-major order (last axis fastest).
    pub fn points(&self) -> Result<Vec<Point>, ExperimentError> {
        let axes = self.axes()?;
        let sizes: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();
        let total: usize = sizes.iter().product();
        let base = PointConfig {
            chain: self.chain,
            hierarchy: self.hierarchy,
            attack: self.attack,
        };
        let mut out = Vec::with_capacity(total);
        for index in 0..total {
            let mut rem = index;
            let mut coords = vec![0; axes.len()];
            for (d, size) in sizes.iter().enumerate().rev() {
                coords[d] = rem % size;
                rem /= size;
            }
            let assignments: Vec<(Param, f64)> = axes
                .iter()
                .zip(&coords)
                .flat_map(|(a, &c)| a.params.iter().copied().zip(a.values[c].iter().copied()))
                .collect();
            let (config, error) = apply(base, &assignments);
            out.push(Point {
                index,
                config,
                error,
            });
        }
        Ok(out)
    }
}

// Plain fields first, then intensities, so that an intensity refers to the
// final server count and service rate.
fn chain_of(cfg: &mut PointConfig, t: Target) -> &mut ChainConfig {
    match t {
        Target::Chain => cfg.chain.as_mut().expect("validated"),
        Target::Primary => &mut cfg.hierarchy.as_mut().expect("validated").primary,
        Target::Secondary => &mut cfg.hierarchy.as_mut().expect("validated").secondary,
    }
}

fn apply(mut cfg: PointConfig, assignments: &[(Param, f64)]) -> (PointConfig, Option<ConfigError>) {
    for &(p, v) in assignments {
        match p {
            Param::Config(_, Field::Intensity) => {}
            Param::Config(t, f) => f.set(chain_of(&mut cfg, t), v),
            Param::AttackPower => cfg.attack.as_mut().expect("validated").relative_power = v,
            Param::AttackGiveUp => {
                cfg.attack.as_mut().expect("validated").giveup_threshold = v as u32
            }
            Param::AttackConfirmations => {
                cfg.attack.as_mut().expect("validated").confirmations = Some(v as u32)
            }
        }
    }
    for &(p, v) in assignments {
        if let Param::Config(t, Field::Intensity) = p {
            let chain = chain_of(&mut cfg, t);
            match chain.with_intensity(v) {
                Ok(c) => *chain = c,
                Err(e) => return (cfg, Some(e)),
            }
        }
    }
    (cfg, None)
}
