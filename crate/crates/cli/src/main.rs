use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gle_kit_cli::{design, execute, validate_config, Command, Report, RunConfig};
use serde_json::{json, Value};

/// Generalized Langevin equation toolkit: resolvents, fluctuation-dissipation
/// force construction, simulation and verification.
#[derive(Parser)]
#[command(name = "gle-kit", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving every output file.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

/// Replace single configuration values before validation.
#[derive(Args)]
struct Overrides {
    /// Time step (grid.dt).
    #[arg(long)]
    dt: Option<f64>,
    /// Resolvent horizon (grid.horizon).
    #[arg(long)]
    horizon: Option<f64>,
    /// Simulation mode.
    #[arg(long, value_parser = ["ivp", "stationary"])]
    mode: Option<String>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Burn-in time.
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the first N sample paths as path_NNNN.csv.
    #[arg(long, value_name = "N")]
    dump_paths: Option<u64>,
    /// Write F0 along the first N paths as noise_NNNN.csv.
    #[arg(long, value_name = "N")]
    dump_noise: Option<u64>,
}

impl Overrides {
    fn apply(&self, doc: &mut Value) {
        let Some(root) = doc.as_object_mut() else {
            return;
        };
        let mut set = |section: &str, key: &str, v: Option<Value>| {
            if let Some(v) = v {
                let entry = root.entry(section).or_insert_with(|| json!({}));
                if let Some(obj) = entry.as_object_mut() {
                    obj.insert(key.to_string(), v);
                }
            }
        };
        set("grid", "dt", self.dt.map(Value::from));
        set("grid", "horizon", self.horizon.map(Value::from));
        set("simulation", "mode", self.mode.clone().map(Value::from));
        set("simulation", "paths", self.paths.map(Value::from));
        set("simulation", "steps", self.steps.map(Value::from));
        set("simulation", "burn_in", self.burn_in.map(Value::from));
        set("simulation", "seed", self.seed.map(Value::from));
        set("outputs", "paths", self.dump_paths.map(Value::from));
        set("outputs", "noise", self.dump_noise.map(Value::from));
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve for the resolvent and write resolvent.csv.
    Resolvent(Common),
    /// Construct the force from the fluctuation-dissipation relation and write phi.csv.
    FdrSolve(Common),
    /// Check the configured force against the fluctuation-dissipation relation.
    FdrCheck(Common),
    /// Simulate and write the estimated autocorrelation.
    Simulate(Common),
    /// Simulate and compare with the theoretical autocorrelation.
    Verify(Common),
    /// Design a force whose stationary autocorrelation is the given target (D = 0).
    Design {
        #[command(flatten)]
        common: Common,
        /// Target autocorrelation CSV (t, row-major entries).
        #[arg(long)]
        psi: PathBuf,
        /// Largest accepted sup-norm mismatch.
        #[arg(long, default_value_t = 2e-2)]
        tolerance: f64,
    },
    /// Full pipeline: resolvent, force, simulation, verification.
    Run(Common),
}

const EXIT_CHECKS: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

fn load(common: &Common) -> Result<RunConfig, ExitCode> {
    let path = &common.config;
    let mut raw = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    // malformed JSON is left for the validator to report
    if let Ok(mut doc) = serde_json::from_str::<Value>(&raw) {
        common.overrides.apply(&mut doc);
        raw = doc.to_string();
    }
    let base = path.parent().unwrap_or(Path::new("."));
    validate_config(&raw, base).map_err(|e| {
        eprint!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn configure_threads() {
    if let Ok(v) = std::env::var("GLE_KIT_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("warning: could not size the thread pool: {e}");
                }
            }
            _ => eprintln!("warning: ignoring GLE_KIT_THREADS={v}; expected a positive integer"),
        }
    }
}

fn summarize(report: &Report) -> ExitCode {
    for (name, ok) in &report.checks {
        eprintln!("{:<20} {}", name, if *ok { "ok" } else { "FAILED" });
    }
    if let Some(v) = report
        .verification
        .as_ref()
        .and_then(|v| v.variance.as_ref())
    {
        eprintln!("estimated variance   {v:?}");
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECKS)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let (common, outcome) = match &cli.command {
        Cmd::Design {
            common,
            psi,
            tolerance,
        } => {
            let cfg = match load(common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            (common, design(&cfg, psi, &common.out_dir, *tolerance))
        }
        other => {
            let (command, common) = match other {
                Cmd::Resolvent(c) => (Command::Resolvent, c),
                Cmd::FdrSolve(c) => (Command::FdrSolve, c),
                Cmd::FdrCheck(c) => (Command::FdrCheck, c),
                Cmd::Simulate(c) => (Command::Simulate, c),
                Cmd::Verify(c) => (Command::Verify, c),
                Cmd::Run(c) => (Command::Run, c),
                Cmd::Design { .. } => unreachable!(),
            };
            let cfg = match load(common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            (common, execute(command, &cfg, &common.out_dir))
        }
    };
    match outcome {
        Ok(report) => {
            eprintln!("reports written to {}", common.out_dir.display());
            summarize(&report)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
