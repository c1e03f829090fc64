use rayon::prelude::*;

use super::scenario::{Engine, Point, PointConfig, ScenarioSpec};
use super::{Cell, ExperimentError, ResultTable};
use crate::analytic::{closed_form_latency_with, AnalyticError, Mode};
use crate::attack::{
    attack_success_closed, attack_success_direct, attack_success_montecarlo, AttackParams,
    AttackResult, Method,
};
use crate::config::{ChainConfig, ConfigError};
use crate::markov::{latency_report, LatencyReport, MarkovError, TruncationOptions};
use crate::sim::{simulate_chain_with, simulate_hierarchical_with, SimError, SimOptions};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; all available cores when absent.
    pub jobs: Option<usize>,
    /// Replaces the scenario's master seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub table: ResultTable,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Seed of grid point `index`: the `index`-th output of a SplitMix64 stream
/// started at `master`. Adding points never changes earlier points' seeds.
pub fn point_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const OK: &str = "ok";
const UNSTABLE: &str = "skipped-unstable";
const INVALID: &str = "skipped-invalid";
const FAILED: &str = "failed";

type Outcome = Result<Vec<Cell>, (&'static str, String)>;

fn config_status(e: &ConfigError) -> &'static str {
    match e {
        ConfigError::UnstableServiceQueue { .. } | ConfigError::UnstableMiningQueue { .. } => {
            UNSTABLE
        }
        _ => INVALID,
    }
}

fn markov_status(e: &MarkovError) -> &'static str {
    match e {
        MarkovError::Config(c) => config_status(c),
        _ => FAILED,
    }
}

fn analytic_status(e: &AnalyticError) -> &'static str {
    match e {
        AnalyticError::Unstable { .. } | AnalyticError::UnstableBlockStage { .. } => UNSTABLE,
        AnalyticError::Config(c) => config_status(c),
        _ => INVALID,
    }
}

fn sim_status(e: &SimError) -> &'static str {
    match e {
        SimError::Unstable { .. } => UNSTABLE,
        SimError::Config(c) => config_status(c),
        _ => INVALID,
    }
}

const CHAIN_FIELDS: [&str; 9] = [
    "arrival_rate",
    "mining_rate",
    "rejection_rate",
    "service_rate",
    "servers",
    "block_capacity",
    "rejection_batch",
    "confirmations",
    "intensity",
];

fn chain_cells(c: &ChainConfig) -> Vec<Cell> {
    vec![
        c.arrival_rate.into(),
        c.mining_rate.into(),
        c.rejection_rate.into(),
        c.service_rate.into(),
        c.servers.into(),
        c.block_capacity.into(),
        c.rejection_batch.into(),
        c.confirmations.into(),
        c.intensity().into(),
    ]
}

fn echo_columns(spec: &ScenarioSpec) -> Vec<String> {
    let named = |prefix: &'static str| CHAIN_FIELDS.iter().map(move |f| format!("{prefix}{f}"));
    match spec.engine {
        Engine::Markov | Engine::ClosedForm | Engine::Simulation => {
            let mut cols: Vec<String> = named("").collect();
            if spec.engine == Engine::Markov && spec.attack.is_some() {
                cols.extend(
                    [
                        "attack_relative_power",
                        "attack_giveup_threshold",
                        "attack_method",
                    ]
                    .map(String::from),
                );
            }
            cols
        }
        Engine::HierarchicalSimulation => named("primary_")
            .chain(named("secondary_"))
            .chain(["primary_background".to_string()])
            .collect(),
        Engine::Attack => [
            "confirmations",
            "relative_power",
            "giveup_threshold",
            "method",
        ]
        .map(String::from)
        .to_vec(),
    }
}

fn echo_cells(spec: &ScenarioSpec, p: &PointConfig) -> Vec<Cell> {
    match spec.engine {
        Engine::Markov | Engine::ClosedForm | Engine::Simulation => {
            let mut cells = chain_cells(p.chain.as_ref().expect("validated"));
            if spec.engine == Engine::Markov {
                if let Some(a) = p.attack {
                    cells.extend([
                        a.relative_power.into(),
                        a.giveup_threshold.into(),
                        a.method.as_str().into(),
                    ]);
                }
            }
            cells
        }
        Engine::HierarchicalSimulation => {
            let h = p.hierarchy.expect("validated");
            let mut cells = chain_cells(&h.primary);
            cells.extend(chain_cells(&h.secondary));
            cells.push(h.primary_background.into());
            cells
        }
        Engine::Attack => {
            let a = p.attack.expect("validated");
            vec![
                a.confirmations.map_or(Cell::Empty, Cell::from),
                a.relative_power.into(),
                a.giveup_threshold.into(),
                a.method.as_str().into(),
            ]
        }
    }
}

fn result_columns(spec: &ScenarioSpec) -> Vec<&'static str> {
    match spec.engine {
        Engine::Markov => {
            let mut cols = vec![
                "latency",
                "std_error",
                "base_latency",
                "mean_queue_length",
                "i_max",
                "j_max",
                "truncation_mass",
                "closed_form_latency",
            ];
            if spec.attack.is_some() {
                cols.extend(["attack_probability", "attack_std_error"]);
            }
            cols
        }
        Engine::ClosedForm => vec![
            "latency",
            "std_error",
            "block_wait",
            "service_stage",
            "confirmation_wait",
            "approximate",
        ],
        Engine::Simulation => vec![
            "latency",
            "std_error",
            "ci_low",
            "ci_high",
            "variance",
            "samples",
            "served",
            "rejected",
            "generated",
            "confirmation_mode",
            "seed",
        ],
        Engine::HierarchicalSimulation => vec![
            "latency",
            "std_error",
            "ci_low",
            "ci_high",
            "secondary_latency",
            "secondary_ci_low",
            "secondary_ci_high",
            "primary_latency",
            "primary_ci_low",
            "primary_ci_high",
            "served",
            "rejected",
            "generated",
            "confirmation_mode",
            "seed",
        ],
        Engine::Attack => vec!["probability", "std_error", "trials", "seed"],
    }
}

fn attack(
    params: &AttackParams,
    method: Method,
    trials: u64,
    seed: u64,
) -> Result<AttackResult, (&'static str, String)> {
    let r = match method {
        Method::ClosedForm => attack_success_closed(params),
        Method::DirectSum => attack_success_direct(params),
        Method::MonteCarlo => attack_success_montecarlo(params, trials, seed),
    };
    r.map_err(|e| (INVALID, e.to_string()))
}

fn attack_params(p: &PointConfig, confirmations: u32) -> AttackParams {
    let a = p.attack.expect("validated");
    AttackParams {
        confirmations: a.confirmations.unwrap_or(confirmations),
        relative_power: a.relative_power,
        giveup_threshold: a.giveup_threshold,
    }
}

struct Context<'a> {
    spec: &'a ScenarioSpec,
    master_seed: u64,
    // markov only: solves keyed by the configuration at one confirmation
    solves: Vec<(ChainConfig, Result<LatencyReport, MarkovError>)>,
}

impl Context<'_> {
    fn evaluate(&self, point: &Point) -> Outcome {
        if let Some(e) = &point.error {
            return Err((config_status(e), e.to_string()));
        }
        let seed = point_seed(self.master_seed, point.index);
        let rep = &self.spec.replication;
        let p = &point.config;
        match self.spec.engine {
            Engine::Markov => {
                let cfg = p.chain.expect("validated");
                cfg.validate()
                    .map_err(|e| (config_status(&e), e.to_string()))?;
                let key = one_confirmation(&cfg);
                let base = self
                    .solves
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, r)| r)
                    .expect("solved up front");
                let report = match base {
                    Ok(r) => r.with_confirmations(cfg.confirmations, cfg.mining_rate),
                    Err(e) => return Err((markov_status(e), e.to_string())),
                };
                let closed = closed_form_latency_with(&cfg, Mode::Approximate)
                    .map_or(Cell::Empty, |b| b.total.into());
                let mut cells = vec![
                    report.latency.into(),
                    0.0.into(),
                    report.base_latency.into(),
                    report.mean_queue_length.into(),
                    report.i_max.into(),
                    report.j_max.into(),
                    report.truncation_mass.into(),
                    closed,
                ];
                if let Some(a) = p.attack {
                    let r = attack(
                        &attack_params(p, cfg.confirmations),
                        a.method,
                        rep.trials,
                        seed,
                    )?;
                    cells.extend([r.probability.into(), r.std_error.into()]);
                }
                Ok(cells)
            }
            Engine::ClosedForm => {
                let cfg = p.chain.expect("validated");
                let b = closed_form_latency_with(&cfg, Mode::Approximate)
                    .map_err(|e| (analytic_status(&e), e.to_string()))?;
                Ok(vec![
                    b.total.into(),
                    0.0.into(),
                    b.block_wait.into(),
                    b.service_stage.into(),
                    b.confirmation_wait.into(),
                    b.approximate.into(),
                ])
            }
            Engine::Simulation => {
                let cfg = p.chain.expect("validated");
                let opts =
                    SimOptions::new(rep.target_served, seed).with_mode(rep.confirmation_mode);
                let r = simulate_chain_with(&cfg, &opts)
                    .map_err(|e| (sim_status(&e), e.to_string()))?;
                Ok(vec![
                    r.summary.mean.into(),
                    r.summary.std_error.into(),
                    r.summary.ci_low.into(),
                    r.summary.ci_high.into(),
                    r.summary.variance.into(),
                    r.summary.count.into(),
                    r.served_count.into(),
                    r.rejected_count.into(),
                    r.generated_count.into(),
                    mode_name(rep.confirmation_mode).into(),
                    seed.into(),
                ])
            }
            Engine::HierarchicalSimulation => {
                let h = p.hierarchy.expect("validated");
                let opts = SimOptions {
                    primary_background: h.primary_background,
                    ..SimOptions::new(rep.target_served, seed).with_mode(rep.confirmation_mode)
                };
                let hc = crate::config::HierarchicalConfig {
                    primary: h.primary,
                    secondary: h.secondary,
                };
                let r = simulate_hierarchical_with(&hc, &opts)
                    .map_err(|e| (sim_status(&e), e.to_string()))?;
                let b = r.hierarchical.as_ref().expect("hierarchical run");
                Ok(vec![
                    b.e2e.mean.into(),
                    b.e2e.std_error.into(),
                    b.e2e.ci_low.into(),
                    b.e2e.ci_high.into(),
                    b.secondary.mean.into(),
                    b.secondary.ci_low.into(),
                    b.secondary.ci_high.into(),
                    b.primary.mean.into(),
                    b.primary.ci_low.into(),
                    b.primary.ci_high.into(),
                    r.served_count.into(),
                    r.rejected_count.into(),
                    r.generated_count.into(),
                    mode_name(rep.confirmation_mode).into(),
                    seed.into(),
                ])
            }
            Engine::Attack => {
                let a = p.attack.expect("validated");
                let params = attack_params(p, 0);
                let r = attack(&params, a.method, rep.trials, seed)?;
                Ok(vec![
                    r.probability.into(),
                    r.std_error.into(),
                    r.trials.into(),
                    seed.into(),
                ])
            }
        }
    }
}

fn mode_name(mode: crate::sim::ConfirmationMode) -> &'static str {
    match mode {
        crate::sim::ConfirmationMode::Additive => "additive",
        crate::sim::ConfirmationMode::EventDriven => "event-driven",
    }
}

fn one_confirmation(cfg: &ChainConfig) -> ChainConfig {
    ChainConfig {
        confirmations: 1,
        ..*cfg
    }
}

/// Evaluates every grid point of `spec`.
///
/// Points that fail validation or prove unstable become rows with a
/// `skipped-*` status; the sweep itself only fails on a malformed spec.
pub fn run_scenario(
    spec: &ScenarioSpec,
    options: &RunOptions,
) -> Result<ScenarioOutcome, ExperimentError> {
    let points = spec.points()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = options.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;

    let rows: Vec<Outcome> = pool.install(|| {
        let mut keys: Vec<ChainConfig> = Vec::new();
        if spec.engine == Engine::Markov {
            for p in &points {
                let cfg = p.config.chain.expect("validated");
                if p.error.is_none() && cfg.validate().is_ok() {
                    let key = one_confirmation(&cfg);
                    if !keys.contains(&key) {
                        keys.push(key);
                    }
                }
            }
        }
        let solves = keys
            .par_iter()
            .map(|k| (*k, latency_report(k, &TruncationOptions::default())))
            .collect();
        let ctx = Context {
            spec,
            master_seed: options.seed.unwrap_or(spec.replication.seed),
            solves,
        };
        points.par_iter().map(|p| ctx.evaluate(p)).collect()
    });

    let results = result_columns(spec);
    let mut columns: Vec<String> = ["point", "status", "message"].map(String::from).to_vec();
    columns.extend(echo_columns(spec));
    columns.extend(results.iter().map(|s| s.to_string()));
    let mut evaluated = 0;
    let table_rows = points
        .iter()
        .zip(rows)
        .map(|(p, outcome)| {
            let mut row = vec![Cell::from(p.index)];
            let values = match outcome {
                Ok(values) => {
                    evaluated += 1;
                    row.extend([Cell::from(OK), Cell::Empty]);
                    values
                }
                Err((status, msg)) => {
                    row.extend([Cell::from(status), Cell::Text(msg)]);
                    vec![Cell::Empty; results.len()]
                }
            };
            row.extend(echo_cells(spec, &p.config));
            row.extend(values);
            row
        })
        .collect::<Vec<_>>();
    Ok(ScenarioOutcome {
        skipped: points.len() - evaluated,
        evaluated,
        table: ResultTable {
            columns,
            rows: table_rows,
        },
    })
}
