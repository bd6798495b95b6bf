//! Batch command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::fs::{self, File};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};

use readmission::config::RunConfig;
use readmission::models::ModelKind;
use readmission::pipeline::Pipeline;
use readmission::preprocess::Task;
use readmission::synthetic::{self, SyntheticSpec, FULL_SIZE};
use readmission::{Error, Result};

#[derive(Parser)]
#[command(name = "readmission", version, about = "Readmission-risk pipeline for diabetic encounters")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict to these models (repeat or comma-separate).
    #[arg(long, global = true, value_delimiter = ',')]
    model: Vec<String>,
    /// Restrict to these tasks (repeat or comma-separate).
    #[arg(long, global = true, value_delimiter = ',')]
    task: Vec<String>,
    /// Encounter table (CSV).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// ID-mapping file.
    #[arg(long, global = true)]
    mappings: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, extract and encode; write the preprocessing report.
    Preprocess,
    /// Train the selected models and write PR curves and the AUPRC table.
    TrainEval,
    /// Forest out-of-bag ablation importance.
    Ablation,
    /// Class-sensitive association rules.
    Rules,
    /// Cost-sensitive threshold selection.
    Cost,
    /// Every stage above, in order.
    Reproduce,
    /// Write a synthetic encounter table and ID mapping file to `--out`.
    Synth {
        #[arg(long, default_value_t = FULL_SIZE)]
        rows: usize,
    },
}

fn build_config(c: &Common, command: &Command) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output = out.clone();
    }
    if let Some(data) = &c.data {
        cfg.data.dataset = data.clone();
    }
    if let Some(m) = &c.mappings {
        cfg.data.mappings = Some(m.clone());
    }
    if !c.model.is_empty() {
        cfg.models = c.model.iter().map(|m| m.parse::<ModelKind>()).collect::<Result<_>>()?;
    }
    if !c.task.is_empty() {
        let tasks: Vec<Task> = c.task.iter().map(|t| t.parse()).collect::<Result<_>>()?;
        match command {
            Command::Ablation => cfg.ablation.tasks = tasks,
            _ => cfg.tasks = tasks,
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(cfg: &RunConfig, rows: usize) -> Result<()> {
    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let create = |name: &str| {
        let p = dir.join(name);
        File::create(&p).map_err(|e| Error::Io { path: p, source: e })
    };
    let spec = SyntheticSpec { rows, seed: cfg.seed };
    synthetic::write_csv(create("diabetic_data.csv")?, &spec)?;
    synthetic::write_id_mappings(create("IDs_mapping.csv")?)?;
    log::info!("wrote {rows} synthetic encounters to {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.common, &cli.command)?;
    if let Command::Synth { rows } = cli.command {
        return synth(&cfg, rows);
    }
    log::info!("config hash {} seed {}", cfg.hash(), cfg.seed);
    let started = SystemTime::now();
    let mut p = Pipeline::new(cfg)?;
    let name = match cli.command {
        Command::Preprocess => {
            p.cmd_preprocess()?;
            "preprocess"
        }
        Command::TrainEval => {
            p.cmd_train_eval()?;
            "train-eval"
        }
        Command::Ablation => {
            p.cmd_ablation()?;
            "ablation"
        }
        Command::Rules => {
            p.cmd_rules()?;
            "rules"
        }
        Command::Cost => {
            p.cmd_cost()?;
            "cost"
        }
        Command::Reproduce => return p.cmd_reproduce(),
        Command::Synth { .. } => unreachable!("handled above"),
    };
    p.write_manifest(name, started)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
