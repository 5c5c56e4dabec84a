//! `hyqme`: run hybrid quantum-classical master-equation scenarios.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyqme::runtime::integrator::IntegratorConfig;
use hyqme::runtime::scenario::{
    demo_naive_positivity, run_scenario, validate_state_file, ExitReport, SamplerSettings, ScenarioConfig,
    ScenarioKind,
};
use hyqme::{Error, Result};

const DEFAULT_OUT: &str = "hyqme-out";

#[derive(Parser)]
#[command(name = "hyqme", version, about = "Hybrid quantum-classical master equations")]
struct Cli {
    /// Output directory (default: the scenario's `output`, else ./hyqme-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Do not print the report.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a state file for Hermiticity, positivity and normalization.
    Validate { state: PathBuf },
    /// Integrate a classical, quantum, hybrid or monitoring scenario.
    Evolve { scenario: PathBuf },
    /// Apply a measurement channel.
    Measure { scenario: PathBuf },
    /// Compare hybrid evolution with its enlarged-space Lindblad embedding.
    EmbedCheck {
        model: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Run a monitoring scenario, optionally against the Monte Carlo oracle.
    Monitor {
        scenario: PathBuf,
        /// Number of trajectories for the oracle comparison.
        #[arg(long)]
        oracle: Option<usize>,
    },
    /// Built-in demonstrations.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Naive monitoring equation loses positivity, the corrected one does not.
    NaivePositivity,
}

fn out_dir(cli_out: &Option<PathBuf>, sc: Option<(&ScenarioConfig, &Path)>) -> PathBuf {
    if let Some(o) = cli_out {
        return o.clone();
    }
    match sc {
        Some((cfg, base)) => cfg.output.as_ref().map(|o| base.join(o)).unwrap_or_else(|| DEFAULT_OUT.into()),
        None => DEFAULT_OUT.into(),
    }
}

fn load(path: &Path, seed: Option<u64>, allowed: &[ScenarioKind]) -> Result<(ScenarioConfig, PathBuf)> {
    let (mut sc, base) = ScenarioConfig::load(path)?;
    if !allowed.contains(&sc.kind) {
        return Err(Error::Config(format!("this command does not run `{}` scenarios", sc.kind.name())));
    }
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok((sc, base))
}

fn run(cli: &Cli) -> Result<ExitReport> {
    match &cli.command {
        Command::Validate { state } => validate_state_file(state),
        Command::Evolve { scenario } => {
            use ScenarioKind::*;
            let (sc, base) = load(scenario, cli.seed, &[Classical, Quantum, Hybrid, Monitoring, EmbedCheck])?;
            run_scenario(&sc, &base, &out_dir(&cli.out, Some((&sc, &base))))
        }
        Command::Measure { scenario } => {
            let (sc, base) = load(scenario, cli.seed, &[ScenarioKind::Measure])?;
            run_scenario(&sc, &base, &out_dir(&cli.out, Some((&sc, &base))))
        }
        Command::EmbedCheck { model, t, dt } => {
            let sc = ScenarioConfig {
                model: Some(serde_json::Value::String(model.display().to_string())),
                integrator: Some(IntegratorConfig::new(*dt, *t)),
                seed: cli.seed.unwrap_or(0),
                ..ScenarioConfig::new(ScenarioKind::EmbedCheck)
            };
            run_scenario(&sc, Path::new(""), &out_dir(&cli.out, None))
        }
        Command::Monitor { scenario, oracle } => {
            let (mut sc, base) = load(scenario, cli.seed, &[ScenarioKind::Monitoring])?;
            if let Some(n) = oracle {
                let s = sc.sampler.get_or_insert(SamplerSettings { nu: 1000.0, n_traj: 0, record_every: 1 });
                s.n_traj = *n;
            }
            run_scenario(&sc, &base, &out_dir(&cli.out, Some((&sc, &base))))
        }
        Command::Demo { which: Demo::NaivePositivity } => demo_naive_positivity(&out_dir(&cli.out, None)),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("HYQME_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("HYQME_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(&cli));
    match result {
        Ok(report) => {
            if !cli.quiet {
                println!("{}", report.to_json());
            }
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
