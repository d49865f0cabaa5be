use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gdas_core::experiments::{run_bandit_scenario, run_scenario, sweep, SweepParam};
use gdas_core::output;
use gdas_core::scenario::{Mode, Scenario};
use gdas_core::validation::{self, Check};

#[derive(Parser)]
#[command(
    name = "gdas",
    version,
    about = "Gaussian data-aided sensing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (flat TOML key/value table).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Monte-Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Polling or ALOHA sensing curves over rounds.
    Run {
        #[command(flatten)]
        common: Common,
        /// Fail unless the mean stop round matches the closed form.
        #[arg(long)]
        check: bool,
    },
    /// MSE after a fixed number of rounds against p or N, both access modes.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: Param,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Fail unless the ordering of the two modes matches the closed form.
        #[arg(long)]
        check: bool,
    },
    /// Model selection with the softmax bandit.
    Bandit {
        #[command(flatten)]
        common: Common,
        /// Fail unless the selection frequencies match their expected pattern.
        #[arg(long)]
        check: bool,
    },
    /// Run every reproduction check; exits nonzero on any failure.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        runs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    P,
    N,
}

fn load(common: &Common, defaults: Scenario) -> Result<Scenario, String> {
    let mut s = match &common.config {
        Some(path) => Scenario::load(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => defaults,
    };
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(runs) = common.runs {
        s.runs = runs;
    }
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn report_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{c}");
    }
    checks.iter().all(|c| c.passed)
}

fn write_sweep(
    out: &Path,
    name: &str,
    rows: &[gdas_core::experiments::SweepRow],
) -> Result<(), String> {
    let path = output::write_sweep(out, name, rows).map_err(|e| e.to_string())?;
    report_files(&[path]);
    Ok(())
}

fn execute(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run { common, check } => {
            let s = load(&common, Scenario::default())?;
            if s.mode == Mode::Bandit {
                return Err("mode = \"bandit\" belongs to the `bandit` command".into());
            }
            let report = run_scenario(&s).map_err(|e| e.to_string())?;
            report_files(&output::write_scenario(&common.out, &report).map_err(|e| e.to_string())?);
            let (stop, stopped) = report.mean_stop_round();
            println!("mean stop round {stop:.3} ({stopped}/{} runs)", s.runs);
            Ok(!check || report_checks(&[validation::check_stop_rounds(&report)]))
        }
        Command::Sweep {
            common,
            param,
            values,
            check,
        } => {
            let defaults = Scenario {
                max_rounds: 75,
                ..Scenario::default()
            };
            let s = load(&common, defaults)?;
            let (param, name) = match param {
                Param::P => (SweepParam::P, "p"),
                Param::N => (SweepParam::Channels, "n"),
            };
            let rows = sweep(&s, param, &values).map_err(|e| e.to_string())?;
            write_sweep(&common.out, name, &rows)?;
            let c = match param {
                SweepParam::P => validation::check_crossover(&rows),
                SweepParam::Channels => validation::check_channel_sweep(&rows),
            };
            Ok(!check || report_checks(&[c]))
        }
        Command::Bandit { common, check } => {
            let defaults = Scenario {
                mode: Mode::Bandit,
                runs: 200,
                ..Scenario::default()
            };
            let mut s = load(&common, defaults)?;
            s.mode = Mode::Bandit;
            s.validate().map_err(|e| e.to_string())?;
            let report = run_bandit_scenario(&s).map_err(|e| e.to_string())?;
            report_files(&output::write_bandit(&common.out, &report).map_err(|e| e.to_string())?);
            let checks = [
                validation::check_bandit(&report),
                validation::check_mismatch(&report),
            ];
            Ok(!check || report_checks(&checks))
        }
        Command::Validate { seed, runs } => {
            let checks = validation::validate_all(runs, seed).map_err(|e| e.to_string())?;
            Ok(report_checks(&checks))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
