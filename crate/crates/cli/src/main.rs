//! `branlab` command-line front end.
//!
//! Exit codes: 0 on success, 1 when no sweep point could be evaluated,
//! 2 for a malformed scenario or bad arguments, 3 for I/O errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use branlab::experiments::{
    list_presets, preset, run_scenario, ExperimentError, Format, RunOptions, ScenarioSpec,
};

#[derive(Parser)]
#[command(
    name = "branlab",
    version,
    about = "Latency and security sweeps for blockchain radio access networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a built-in preset.
    Preset {
        name: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Print the scenario document behind a preset.
    ShowPreset { name: String },
    /// List the built-in presets.
    ListPresets,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; defaults to the scenario's output.path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Master seed, replacing the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel sweep points.
    #[arg(long, env = "BRANLAB_JOBS")]
    jobs: Option<usize>,
    /// Omit the timestamp comment line from CSV output.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

fn load(path: &Path) -> Result<ScenarioSpec, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioSpec::from_json(&text).map_err(|e| match e {
        ExperimentError::Malformed(msg) => {
            ExperimentError::Malformed(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

fn find_preset(name: &str) -> Result<ScenarioSpec, ExperimentError> {
    preset(name).ok_or_else(|| {
        let known: Vec<&str> = list_presets().iter().map(|p| p.name).collect();
        ExperimentError::Malformed(format!(
            "unknown preset `{name}` (known: {})",
            known.join(", ")
        ))
    })
}

fn execute(spec: &ScenarioSpec, args: &OutputArgs) -> Result<(), ExperimentError> {
    let out = args
        .out
        .clone()
        .or_else(|| {
            spec.output
                .as_ref()
                .and_then(|o| o.path.as_ref())
                .map(PathBuf::from)
        })
        .ok_or_else(|| {
            ExperimentError::Malformed("no output path: pass --out or set output.path".into())
        })?;
    let format = args
        .format
        .map(Format::from)
        .or_else(|| spec.output.as_ref().map(|o| o.format))
        .unwrap_or_default();
    let options = RunOptions {
        jobs: args.jobs,
        seed: args.seed,
    };
    let outcome = run_scenario(spec, &options)?;
    outcome
        .table
        .write_to_path(&out, format, !args.no_timestamp)?;
    eprintln!(
        "{}: {} rows ({} evaluated, {} skipped) -> {}",
        spec.name,
        outcome.table.rows.len(),
        outcome.evaluated,
        outcome.skipped,
        out.display()
    );
    if outcome.evaluated == 0 {
        return Err(ExperimentError::NothingEvaluated {
            skipped: outcome.skipped,
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, output } => load(scenario).and_then(|s| execute(&s, output)),
        Command::Preset { name, output } => find_preset(name).and_then(|s| execute(&s, output)),
        Command::ShowPreset { name } => find_preset(name).map(|s| println!("{}", s.to_json())),
        Command::ListPresets => {
            for p in list_presets() {
                println!("{:<6} {}", p.name, p.description);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
