use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use epo_lab::harness::{run_experiment, run_suite, sweep_cost_limit, write_suite_report, ExperimentConfig, Suite, OUT_ENV};
use epo_lab::Result;

const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "epo", version, about = "Penalty-based constrained policy optimisation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and write one CSV per seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// `key=value`, applied after the file; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a verification suite (lemma1, corollary1, prop1, thm2, gradients, pmn_properties, all).
    Verify {
        #[arg(long)]
        suite: String,
        /// Directory for the JSON report (default: $EPO_OUT or the current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat an experiment for several cost limits.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated limits, e.g. 10,25,50.
        #[arg(long, value_delimiter = ',')]
        limits: Vec<f64>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load(config: &PathBuf, seed: Option<u64>, mut overrides: Vec<String>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(config)?;
    if let Some(s) = seed {
        overrides.push(format!("seed={s}"));
    }
    ExperimentConfig::from_text(&text, &overrides)
}

fn execute(command: Command) -> Result<u8> {
    match command {
        Command::Run { config, seed, overrides } => {
            let cfg = load(&config, seed, overrides)?;
            let art = run_experiment(&cfg)?;
            for p in &art.csv_paths {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Sweep { config, limits, overrides } => {
            let cfg = load(&config, None, overrides)?;
            for art in sweep_cost_limit(&cfg, &limits)? {
                for p in &art.csv_paths {
                    println!("{}", p.display());
                }
            }
            Ok(0)
        }
        Command::Verify { suite, out } => {
            let suite: Suite = suite.parse()?;
            let outcome = run_suite(suite)?;
            for c in &outcome.checks {
                let mark = if c.satisfied { "PASS" } else { "FAIL" };
                println!("{mark} {} lhs={:.6e} rhs={:.6e}", c.name, c.lhs, c.rhs);
            }
            let failed = outcome.checks.iter().filter(|c| !c.satisfied).count();
            println!("{}: {} checks, {failed} failed", outcome.suite, outcome.checks.len());
            let dir = out
                .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let path = write_suite_report(&outcome, &dir)?;
            println!("report: {}", path.display());
            Ok(if outcome.passed { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
