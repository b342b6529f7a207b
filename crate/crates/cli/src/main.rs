use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccsim_core::error::HarnessError;
use ccsim_core::harness::{compare, sweep, Experiment, ExperimentConfig, ExperimentSummary, OUTPUT_ROOT_ENV};
use ccsim_core::scenario::Scenario;
use clap::{Parser, Subcommand};

/// Computing-continuum orchestration simulator.
#[derive(Parser)]
#[command(name = "ccsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config and the output root.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Paired per-seed comparison of fulfilment rates across result dirs.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Label every other run set is compared against; defaults to the
        /// first label of the first directory.
        #[arg(long)]
        baseline: Option<String>,
        /// Print machine-readable JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Parse and validate a scenario file.
    Validate { scenario: PathBuf },
    /// Run an experiment once per value of an agent parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Io { .. } | HarnessError::Runtime(_) => EXIT_RUNTIME,
        _ => EXIT_INVALID,
    }
}

fn output_dir(configured: &Path, flag: Option<PathBuf>) -> PathBuf {
    if let Some(p) = flag {
        return p;
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if configured.is_relative() => PathBuf::from(root).join(configured),
        _ => configured.to_path_buf(),
    }
}

fn run(config: &Path, output: Option<PathBuf>) -> Result<(), HarnessError> {
    let cfg = ExperimentConfig::from_path(config)?;
    let dir = output_dir(&cfg.output, output);
    let exp = Experiment::prepare(cfg)?;
    let summary = exp.run(Some(&dir))?;
    println!("wrote {} runs to {}", summary.runs.len(), dir.display());
    for (label, agg) in &summary.aggregates {
        println!(
            "{label:<16} fulfilment {:.4} +/- {:.4}  recovered {}/{}",
            agg.fulfillment.mean,
            agg.fulfillment.sd,
            agg.recovered,
            agg.recovered + agg.not_recovered
        );
    }
    Ok(())
}

fn compare_dirs(dirs: &[PathBuf], baseline: Option<String>, json: bool) -> Result<(), HarnessError> {
    let summaries = dirs
        .iter()
        .map(|d| ExperimentSummary::from_path(d.join("summary.json")))
        .collect::<Result<Vec<_>, _>>()?;
    let base_label = match baseline {
        Some(b) => b,
        None => summaries[0]
            .agents
            .first()
            .map(|a| a.label.clone())
            .ok_or_else(|| HarnessError::Config("summary lists no agents".into()))?,
    };
    let base = summaries
        .iter()
        .find(|s| s.agents.iter().any(|a| a.label == base_label))
        .ok_or_else(|| HarnessError::Config(format!("no runs labelled `{base_label}`")))?;
    let mut reports = Vec::new();
    for s in &summaries {
        for a in &s.agents {
            if std::ptr::eq(s, base) && a.label == base_label {
                continue;
            }
            reports.push(compare(s, &a.label, base, &base_label)?);
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports).expect("report serializes"));
    } else {
        println!("{:<16} {:<16} {:>9} {:>9} {:>5} {:>5} {:>5}", "a", "b", "mean", "sd", "a>b", "a<b", "tie");
        for r in &reports {
            println!(
                "{:<16} {:<16} {:>9.4} {:>9.4} {:>5} {:>5} {:>5}",
                r.label_a, r.label_b, r.mean, r.sd, r.a_better, r.b_better, r.ties
            );
        }
    }
    Ok(())
}

fn validate(path: &Path) -> Result<(), HarnessError> {
    let sc = Scenario::from_path(path)?;
    println!(
        "ok: {} ({} nodes, {} services, horizon {})",
        if sc.name.is_empty() { "unnamed" } else { &sc.name },
        sc.nodes.len(),
        sc.services().count(),
        sc.horizon
    );
    Ok(())
}

fn sweep_cmd(config: &Path, param: &str, values: &[String], output: Option<PathBuf>) -> Result<(), HarnessError> {
    let cfg = ExperimentConfig::from_path(config)?;
    let dir = output_dir(&cfg.output, output);
    for (value, summary) in sweep(&cfg, param, values, Some(&dir))? {
        for (label, agg) in &summary.aggregates {
            println!("{param}={value:<10} {label:<16} {:.4} +/- {:.4}", agg.fulfillment.mean, agg.fulfillment.sd);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run { config, output } => run(&config, output),
        Command::Compare { dirs, baseline, json } => compare_dirs(&dirs, baseline, json),
        Command::Validate { scenario } => validate(&scenario),
        Command::Sweep {
            config,
            param,
            values,
            output,
        } => sweep_cmd(&config, &param, &values, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
