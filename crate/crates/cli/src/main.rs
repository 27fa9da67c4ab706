//! `ldpq`: run LDP linear-query experiments, evaluate error guarantees and
//! audit randomizers.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 a bound check or audit
//! failed, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldpq_core::harness::{
    baseline_bound, run_audit, run_experiment, theoretical_bound, write_outputs, AuditKind,
    AuditParams, DistributionFamily, ExperimentConfig, MatrixFamily, PartialConfig, ProtocolKind,
    StrategyFamily, TheoreticalBound,
};
use ldpq_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ldpq",
    version,
    about = "Locally private linear queries: experiments, bounds and audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment and compare its mean error with the guarantee.
    Run(ConfigArgs),
    /// Print the error guarantee for a configuration without running it.
    Bound(ConfigArgs),
    /// Exactly audit a randomizer's privacy loss.
    Audit(AuditArgs),
}

/// Flags mirror the JSON config fields; flags override `--config`.
#[derive(Args)]
struct ConfigArgs {
    /// JSON file with any subset of the fields below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<ProtocolKind>,
    /// Number of users.
    #[arg(long)]
    n: Option<usize>,
    /// Domain size.
    #[arg(long = "J")]
    domain_size: Option<usize>,
    /// Number of queries (matrix rows or adaptive rounds).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// uniform | zipf:S | point:J (1-based) | two-spike | file:PATH
    #[arg(long)]
    dist: Option<DistributionFamily>,
    /// identity | random-unit-columns | file:PATH
    #[arg(long)]
    matrix: Option<MatrixFamily>,
    /// constant | random | tracking-adversary
    #[arg(long)]
    strategy: Option<StrategyFamily>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV path for per-trial rows; the JSON summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(self) -> Result<ExperimentConfig, Error> {
        let base = match &self.config {
            Some(path) => PartialConfig::from_json_file(path)?,
            None => PartialConfig::default(),
        };
        base.merge(PartialConfig {
            protocol: self.protocol,
            n: self.n,
            domain_size: self.domain_size,
            d: self.d,
            r: self.r,
            epsilon: self.epsilon,
            delta: self.delta,
            dist: self.dist,
            matrix: self.matrix,
            strategy: self.strategy,
            trials: self.trials,
            seed: self.seed,
            out: self.out,
        })
        .resolve()
    }
}

#[derive(Args)]
struct AuditArgs {
    /// adaptive-rr | hadamard-rr | rejsamp-bit
    kind: AuditKind,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Query bound (adaptive-rr) or column norm (rejsamp-bit).
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long = "J", default_value_t = 8)]
    domain_size: usize,
    /// Number of users, which sets the rejection-sampling noise scale.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Random queries audited for adaptive-rr.
    #[arg(long, default_value_t = 20)]
    queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Io { .. } | Error::Csv(_) | Error::Json(_) => EXIT_IO,
                _ => EXIT_CONFIG,
            })
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let result = run_experiment(&config)?;
            if let Some(out) = &config.out {
                let (csv, summary) = write_outputs(&result, out)?;
                eprintln!("wrote {} and {}", csv.display(), summary.display());
            }
            println!("{}", serde_json::to_string_pretty(&result)?);
            for warning in &result.warnings {
                eprintln!("warning: {}", serde_json::to_string(warning)?);
            }
            let check = &result.primary_check;
            eprintln!(
                "{}: mean {:?} {:.6} vs bound {:.6} over {} trials in {:.2?}",
                if result.bound_satisfied() {
                    "PASS"
                } else {
                    "FAIL"
                },
                check.metric,
                check.mean,
                check.bound,
                config.trials,
                result.wall_clock,
            );
            Ok(exit_for(result.bound_satisfied()))
        }
        Command::Bound(args) => {
            let config = args.resolve()?;
            let bound = if config.protocol == ProtocolKind::Baseline {
                let b = baseline_bound(config.r, config.n);
                TheoreticalBound {
                    stated: b,
                    with_sampling: b,
                    cap: config.r,
                }
            } else {
                theoretical_bound(&config)?
            };
            println!("{}", serde_json::to_string_pretty(&bound)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit(args) => {
            let params = AuditParams {
                epsilon: args.epsilon,
                r: args.r,
                domain_size: args.domain_size,
                n: args.n,
                queries: args.queries,
                seed: args.seed,
            };
            let report = run_audit(args.kind, &params)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            eprintln!(
                "{}: max privacy loss {:.6} at epsilon {}",
                if report.pass { "PASS" } else { "FAIL" },
                report.max_loss,
                params.epsilon
            );
            Ok(exit_for(report.pass))
        }
    }
}

fn exit_for(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}
