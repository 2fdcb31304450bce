mod config;
mod run;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use elastic_pinn::beam::BeamSpec;
use elastic_pinn::plate::PlateSpec;

use crate::config::{load, Loaded, Overrides};
use crate::run::Failure;
use crate::sweep::{Axis, SweepValue};

#[derive(Parser)]
#[command(name = "elastic-pinn", version, about = "Train and evaluate PINNs for the cantilever and plate benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the training, initialization and sampling seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Fixed-order reductions so that repeated runs are bit-identical.
    #[arg(long)]
    deterministic: bool,
}

impl Common {
    fn load(&self) -> Result<Loaded, Failure> {
        let o = Overrides {
            seed: self.seed,
            epochs: self.epochs,
            out_dir: self.out_dir.clone(),
            deterministic: self.deterministic,
        };
        load(&self.config, &o).map_err(Failure::Config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Benchmark {
    Beam,
    Plate,
}

#[derive(Subcommand)]
enum Command {
    /// Sample, train, evaluate and write all artifacts.
    Run(Common),
    /// Repeat `run` over activations or architectures.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values, e.g. `relu,sigmoid,tanh` or `20x5,40x10`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Seed replicates; with more than one, a median row is added per value.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Continue a saved model on an enlarged collocation set with a fresh optimizer.
    WarmStart {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Check the closed-form solutions against their defining equations.
    VerifyOracle {
        #[arg(long, value_enum, conflicts_with = "config")]
        problem: Option<Benchmark>,
        /// Take the benchmark and its parameters from a configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Export grid fields and errors for a saved model.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn verify_oracle(problem: Option<Benchmark>, config: Option<PathBuf>) -> Result<bool, Failure> {
    let checks = match (problem, config) {
        (_, Some(path)) => {
            let loaded = load(&path, &Overrides::default()).map_err(Failure::Config)?;
            match loaded.config.problem {
                config::ProblemKind::Beam => verify::beam(&loaded.beam_spec()?)?,
                config::ProblemKind::Plate => verify::plate(&loaded.plate_spec()?)?,
            }
        }
        (Some(Benchmark::Beam), None) => verify::beam(&BeamSpec::default())?,
        (Some(Benchmark::Plate), None) => verify::plate(&PlateSpec::default())?,
        (None, None) => {
            let mut all = verify::beam(&BeamSpec::default())?;
            all.extend(verify::plate(&PlateSpec::default())?);
            all
        }
    };
    let mut ok = true;
    for c in &checks {
        println!(
            "{:<4} {:<50} max {:.3e} (tol {:.0e})",
            if c.pass() { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
        ok &= c.pass();
    }
    Ok(ok)
}

fn print_summary(s: &run::RunSummary) {
    println!("{} ({}): final total {:e} after {:.1} s", s.label, s.problem, s.final_loss.total, s.train_seconds);
    for e in &s.field_errors {
        println!("  {:<10} rel L2 {:.4e}  max abs {:.4e}", e.field, e.relative_l2, e.max_abs_error);
    }
    if let Some(w) = s.center_deflection {
        println!("  center deflection {w:.6e}");
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Run(common) => {
            let summary = run::run(&common.load()?)?;
            print_summary(&summary);
        }
        Command::WarmStart { common, checkpoint } => {
            let summary = run::warm_start(&common.load()?, &checkpoint)?;
            print_summary(&summary);
        }
        Command::Eval { common, checkpoint } => {
            for e in run::eval(&common.load()?, &checkpoint)? {
                println!("{:<10} rel L2 {:.4e}  max abs {:.4e}", e.field, e.relative_l2, e.max_abs_error);
            }
        }
        Command::Sweep { common, axis, values, seeds } => {
            let loaded = common.load()?;
            let parsed = values
                .iter()
                .map(|v| SweepValue::parse(axis, v))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|m| Failure::Config(config::ConfigError { line: None, message: m }))?;
            let rows = sweep::sweep(&loaded, &parsed, &seeds)?;
            for r in &rows {
                println!(
                    "{:<8} {:<7} {:<14} total {:e}  t_tr {:.1} s",
                    r.value, r.seed, r.status, r.total, r.train_seconds
                );
            }
        }
        Command::VerifyOracle { problem, config } => {
            if !verify_oracle(problem, config)? {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
