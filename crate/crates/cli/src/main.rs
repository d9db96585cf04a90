use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ergocert::pipeline::{analyze, certify, diagnose, exit_code_for, RunOptions};
use ergocert::report::{CertificationReport, EXIT_INPUT};
use ergocert::spec::ChainSpec;
use ergocert::{zoo, Error};

/// Concentration constants and tail-bound certification for finite Markov chains.
#[derive(Parser)]
#[command(name = "ergocert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check assumptions and derive (L, r), (u, M) and beta.
    Analyze {
        spec: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Compare exact or simulated tail probabilities with the bound.
    Certify {
        spec: PathBuf,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        out: Output,
    },
    /// Run the exhaustive checks of the martingale decomposition.
    Diagnose {
        spec: PathBuf,
        /// Number of random instances for the coupling-inequality batch.
        #[arg(long, value_name = "K")]
        lemma1_batch: Option<usize>,
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
        #[command(flatten)]
        out: Output,
    },
    /// Built-in benchmark chains.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
}

#[derive(Subcommand)]
enum ZooAction {
    /// List the registered chains.
    List,
    /// Print the spec of a registered chain.
    Show { name: String },
    /// Certify a registered chain.
    Run {
        name: String,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args)]
struct Sampling {
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Monte Carlo sample size when the path count exceeds the enumeration budget.
    #[arg(long, value_name = "N")]
    samples: Option<u64>,
}

#[derive(Args)]
struct Output {
    /// Write the JSON report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write the tail rows as CSV.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Omit the generation timestamp.
    #[arg(long)]
    no_timestamp: bool,
}

fn load(path: &Path) -> Result<ChainSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ChainSpec::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn emit(mut report: CertificationReport, out: &Output) -> Result<ExitCode> {
    if !out.no_timestamp {
        report.provenance.generated_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
    }
    let json = report.to_json();
    match &out.output {
        Some(path) => fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    if let Some(path) = &out.csv {
        fs::write(path, report.tail_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!("{}", summary(&report));
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn summary(report: &CertificationReport) -> String {
    let mut line = format!("{}: {:?}", report.command, report.outcome);
    if let Some(beta) = &report.beta {
        line += &format!(", beta = {:.6e}", beta.beta);
    }
    if !report.tail_rows.is_empty() {
        let holds = report.tail_rows.iter().filter(|r| r.verdict == ergocert::report::Verdict::Holds).count();
        line += &format!(", {holds}/{} rows hold", report.tail_rows.len());
    }
    if let Some(d) = &report.diagnostics {
        let passed = d.checks.iter().filter(|c| c.passed).count();
        line += &format!(", {passed}/{} checks pass", d.checks.len());
    }
    for issue in &report.issues {
        line += &format!("\n  assumption failure ({:?}): {}", issue.assumption, issue.message);
    }
    for warning in &report.warnings {
        line += &format!("\n  warning: {warning}");
    }
    line
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze { spec, out } => emit(analyze(&load(&spec)?, &RunOptions::default())?, &out),
        Command::Certify { spec, sampling, out } => {
            let options = RunOptions { seed: sampling.seed, samples: sampling.samples, lemma1_batch: None };
            emit(certify(&load(&spec)?, &options)?, &out)
        }
        Command::Diagnose { spec, lemma1_batch, seed, out } => {
            let options = RunOptions { seed, samples: None, lemma1_batch };
            emit(diagnose(&load(&spec)?, &options)?, &out)
        }
        Command::Zoo { action } => match action {
            ZooAction::List => {
                for entry in zoo::REGISTRY {
                    println!("{:<24}{}", entry.name, entry.description);
                }
                Ok(ExitCode::SUCCESS)
            }
            ZooAction::Show { name } => {
                println!("{}", zoo::spec(&name)?.to_json_pretty());
                Ok(ExitCode::SUCCESS)
            }
            ZooAction::Run { name, sampling, out } => {
                let options = RunOptions { seed: sampling.seed, samples: sampling.samples, lemma1_batch: None };
                emit(certify(&zoo::spec(&name)?, &options)?, &out)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT as u8) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(EXIT_INPUT, exit_code_for);
            if let Some(Error::BudgetExceeded { .. }) = e.downcast_ref::<Error>() {
                eprintln!("hint: shrink the horizon n (or the state space) so that m^n fits the budget");
            }
            ExitCode::from(code as u8)
        }
    }
}
