use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use starfl_core::checks::validate;
use starfl_core::sim::{
    convergence_trace, run_sweep, run_trial_scenarios, write_convergence_csv, write_csv, write_sweep_csv, write_trials_jsonl,
    SweepSpec, TrialResult, BLOCK_A_FAILURE,
};
use starfl_core::{Error, Scenario, SystemConfig};

/// Energy minimisation for federated learning over a STAR-RIS with
/// wireless power transfer and NOMA.
#[derive(Debug, Parser)]
#[command(name = "starfl", version)]
struct Cli {
    /// System config (TOML). Defaults to the desk profile.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Restricts the run to one scenario (ES-ES, ES-TS, TS-ES, TS-TS, CONV).
    #[arg(long, global = true, value_name = "NAME")]
    scenario: Option<Scenario>,
    /// Prints solver diagnostics to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs one trial and dumps the plans.
    Trial {
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Runs a parameter sweep and writes the summary CSV.
    Sweep {
        spec: PathBuf,
        /// Also writes every trial as a JSON line.
        #[arg(long, value_name = "PATH")]
        records: Option<PathBuf>,
        /// Overrides the trial count of the spec.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Runs the oracle and property checks on a few trials.
    Validate {
        #[arg(long, default_value_t = 3)]
        trials: u64,
    },
    /// Writes the BCD trace of one trial as CSV.
    Convergence {
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
}

enum Failure {
    Usage(String),
    Infeasible(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Config(_) => Failure::Usage(e.to_string()),
            Error::Infeasible(_) => Failure::Infeasible(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible(msg)) => {
            eprintln!("starfl: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("starfl: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("starfl: numeric failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(cli: &Cli, fallback: SystemConfig) -> Result<SystemConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => SystemConfig::load(path)?,
        None => fallback,
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn scenarios(cli: &Cli, default: &[Scenario]) -> Vec<Scenario> {
    cli.scenario.map_or_else(|| default.to_vec(), |s| vec![s])
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|source| Error::Io { path: path.display().to_string(), source }.into()),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn stdout_csv<T: serde::Serialize>(rows: &[T]) {
    let _ = write_csv(std::io::stdout().lock(), rows);
}

/// Exit status for a batch of trial results.
fn outcome(results: &[&TrialResult]) -> Result<(), Failure> {
    if let Some(r) = results.iter().find(|r| r.reason.as_deref().is_some_and(|m| m.starts_with(BLOCK_A_FAILURE))) {
        return Err(Failure::Numeric(format!("trial {} {}: {}", r.trial, r.scenario, r.reason.as_deref().unwrap_or(""))));
    }
    if !results.is_empty() && results.iter().all(|r| !r.feasible) {
        return Err(Failure::Infeasible("no feasible trial".into()));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Trial { index } => {
            let config = load_config(cli, SystemConfig::desk())?;
            let list = scenarios(cli, &Scenario::ALL);
            let results = run_trial_scenarios(&config, &list, *index)?;
            for r in &results {
                match (&r.plan, &r.energy) {
                    (Some(plan), Some(e)) => {
                        eprintln!("{} trial {}: {:.6e} J", r.scenario, r.trial, e.total_j);
                        eprint!("{}", plan.to_record());
                    }
                    _ => eprintln!("{} trial {}: infeasible ({})", r.scenario, r.trial, r.reason.as_deref().unwrap_or("")),
                }
                if cli.verbose {
                    dump_trace(&config, r.scenario, *index);
                }
            }
            let json = serde_json::to_string_pretty(&results).map_err(|e| Failure::Numeric(e.to_string()))?;
            emit(cli.out.as_deref(), &(json + "\n"))?;
            outcome(&results.iter().collect::<Vec<_>>())
        }
        Command::Sweep { spec, records, trials } => {
            let (mut sweep, base) = SweepSpec::load(spec)?;
            let config = load_config(cli, base)?;
            if let Some(n) = trials {
                sweep.trials = *n;
            }
            if let Some(s) = cli.scenario {
                sweep.scenarios = vec![s];
            }
            let output = run_sweep(&sweep, &config)?;
            if cli.verbose {
                for row in &output.rows {
                    eprintln!(
                        "{}={} {}: mean {:?} J, stderr {:?} J, infeasible {:.2}",
                        row.param, row.value, row.scenario, row.mean_energy_j, row.stderr_j, row.infeasible_rate
                    );
                }
            }
            match &cli.out {
                Some(path) => write_sweep_csv(path, &output.rows)?,
                None => stdout_csv(&output.rows),
            }
            if let Some(path) = records {
                write_trials_jsonl(path, sweep.param.name(), &output.trials)?;
            }
            outcome(&output.trials.iter().map(|(_, r)| r).collect::<Vec<_>>())
        }
        Command::Validate { trials } => {
            let config = load_config(cli, SystemConfig::desk())?;
            let report = validate(&config, *trials)?;
            let mut text = String::new();
            for c in &report.checks {
                text += &format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            text += &format!("{} of {} plans feasible\n", report.feasible, report.attempted);
            emit(cli.out.as_deref(), &text)?;
            if report.feasible == 0 {
                Err(Failure::Infeasible("no feasible plan to check".into()))
            } else if report.passed() {
                Ok(())
            } else {
                Err(Failure::Numeric("validation checks failed".into()))
            }
        }
        Command::Convergence { index } => {
            let config = load_config(cli, SystemConfig::desk())?;
            let mut rows = Vec::new();
            for s in scenarios(cli, &[Scenario::EsEs, Scenario::TsTs, Scenario::Conv]) {
                rows.extend(convergence_trace(&config, s, *index)?);
            }
            match &cli.out {
                Some(path) => write_convergence_csv(path, &rows)?,
                None => stdout_csv(&rows),
            }
            Ok(())
        }
    }
}

fn dump_trace(config: &SystemConfig, scenario: Scenario, index: u64) {
    match convergence_trace(config, scenario, index) {
        Ok(rows) => {
            for r in rows {
                eprintln!(
                    "  bcd {} {} iter {}: objective {:.9e} residual {:.3e}",
                    r.phase, r.mode, r.iteration, r.objective, r.residual
                );
            }
        }
        Err(e) => eprintln!("  bcd trace unavailable: {e}"),
    }
}
