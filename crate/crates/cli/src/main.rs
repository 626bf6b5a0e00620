mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::Summary;
use config::{parse_modes, parse_seed_list, PipelineConfig};

/// CT to DRR dataset toolkit for coronary calcium.
#[derive(Parser)]
#[command(name = "cacforge", version)]
struct Cli {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output root.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Input directory of per-patient folders.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// original, clahe, calc_focused, a comma list, or all.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// pa, la or both.
    #[arg(long, global = true)]
    view: Option<String>,
    /// Comma-separated split seeds.
    #[arg(long, global = true)]
    seed_list: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Agatston score and slice gate per patient.
    Score,
    /// Render DRRs.
    Project {
        /// Also write a 16-bit PNG next to each raster.
        #[arg(long)]
        preview: bool,
    },
    /// Apply enhancement modes to rendered DRRs.
    Enhance,
    /// Manifest, split files, curriculum and augmentation tables.
    Dataset,
    /// Paired Wilcoxon report from run logs.
    Stats {
        /// TSV with columns name, run_set_a, run_set_b.
        #[arg(long)]
        spec: PathBuf,
        /// Effective sample size up to which p-values are exact.
        #[arg(long)]
        exact_cutoff: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// score, project, enhance and dataset in sequence.
    Run,
    /// Print the effective configuration and its hash.
    Config,
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.output {
        cfg.paths.output = o.clone();
    }
    if let Some(i) = &cli.input {
        cfg.paths.input = i.clone();
    }
    if let Some(m) = &cli.mode {
        cfg.enhance.modes = parse_modes(m)?;
    }
    if let Some(v) = &cli.view {
        cfg.views = v.clone();
    }
    if let Some(s) = &cli.seed_list {
        cfg.dataset.seeds = parse_seed_list(s)?;
    }
    if let Command::Stats { exact_cutoff, alpha, .. } = &cli.command {
        if let Some(c) = exact_cutoff {
            cfg.stats.exact_cutoff = *c;
        }
        if let Some(a) = alpha {
            cfg.stats.alpha = *a;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, cfg: &PipelineConfig) -> Result<Summary> {
    let mut summary = Summary::default();
    let mut stage = |s: Summary| {
        summary.lines.extend(s.lines);
        summary.failures.extend(s.failures);
    };
    match &cli.command {
        Command::Score => {
            let (rows, s) = commands::cmd_score(cfg)?;
            print!("{}", commands::render_scores(&rows, cfg));
            stage(s);
        }
        Command::Project { preview } => stage(commands::cmd_project(cfg, *preview)?),
        Command::Enhance => stage(commands::cmd_enhance(cfg)?),
        Command::Dataset => stage(commands::cmd_dataset(cfg)?),
        Command::Stats { spec, .. } => {
            let seeds = cli.seed_list.as_ref().map(|_| cfg.dataset.seeds.as_slice());
            let (table, s) = commands::cmd_stats(cfg, spec, seeds)?;
            print!("{table}");
            stage(s);
        }
        Command::Run => {
            stage(commands::cmd_score(cfg)?.1);
            stage(commands::cmd_project(cfg, false)?);
            stage(commands::cmd_enhance(cfg)?);
            stage(commands::cmd_dataset(cfg)?);
        }
        Command::Config => {
            print!("# config_hash={}\n{}", cfg.hash(), cfg.to_toml());
        }
    }
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match cacforge::with_workers(cfg.workers, || execute(&cli, &cfg)) {
        Ok(summary) => {
            for line in &summary.lines {
                eprintln!("{line}");
            }
            for f in &summary.failures {
                eprintln!("failed: {f}");
            }
            if summary.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
