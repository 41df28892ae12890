mod commands;
mod config;
mod error;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stcausal::data::SeriesKey;

use crate::config::Settings;
use crate::error::CliResult;

/// Spatiotemporal causal pathway discovery for air-quality sensor networks.
///
/// Stages communicate through files in the output directory: `ingest`
/// writes the dataset, `mine` the patterns, `candidates` the candidate
/// causers, `train` the models.
#[derive(Debug, Parser)]
#[command(name = "stcausal", version)]
struct Cli {
    /// Flat `key = value` settings file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting; may be repeated.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Artifact directory (setting `out`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip pattern mining; every sensor in range is a candidate.
    #[arg(long, global = true)]
    no_patterns: bool,
    /// One cluster, no meteorological confounder.
    #[arg(long, global = true)]
    no_confounders: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read the air-quality, sensor and meteorology CSVs.
    Ingest {
        #[arg(long)]
        aq: Option<PathBuf>,
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long)]
        meteo: Option<PathBuf>,
    },
    /// Mine frequent evolving patterns per series on the training split.
    Mine,
    /// Select candidate causers per target.
    Candidates,
    /// Train per-target causal models; `sweep_k`/`sweep_n` settings select K and N.
    Train {
        #[arg(long = "target", value_name = "CATEGORY@SENSOR")]
        targets: Vec<SeriesKey>,
    },
    /// Held-out accuracy of the trained models.
    Evaluate {
        #[arg(long = "target", value_name = "CATEGORY@SENSOR")]
        targets: Vec<SeriesKey>,
        /// Retrain full, no-patterns and no-confounders variants and compare.
        #[arg(long)]
        ablation: bool,
    },
    /// Expand the multi-hop causal pathway of a root series.
    Pathway {
        #[arg(long, value_name = "CATEGORY@SENSOR")]
        root: SeriesKey,
        #[arg(long)]
        hops: Option<usize>,
    },
    /// Structure recovery benchmark on synthetic confounded systems.
    SynthBench {
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Project the meteorology onto its principal components.
    Pca {
        #[arg(long, default_value_t = 2)]
        dims: usize,
        /// Label rows with this model's most likely cluster.
        #[arg(long, value_name = "CATEGORY@SENSOR")]
        model: Option<SeriesKey>,
    },
    /// Write the regime-switching example dataset as input CSVs.
    SynthData {
        #[arg(long)]
        days: Option<usize>,
    },
}

fn settings(cli: &Cli) -> CliResult<Settings> {
    let mut s = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    for pair in &cli.set {
        s.set_pair(pair)?;
    }
    let path = |p: &PathBuf| p.display().to_string();
    if let Some(o) = &cli.out {
        s.set("out", path(o))?;
    }
    if let Some(seed) = cli.seed {
        s.set("seed", seed.to_string())?;
    }
    if cli.no_patterns {
        s.set("no_patterns", "true")?;
    }
    if cli.no_confounders {
        s.set("no_confounders", "true")?;
    }
    let join = |keys: &[SeriesKey]| keys.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    match &cli.command {
        Command::Ingest { aq, meta, meteo } => {
            for (key, v) in [("aq", aq), ("meta", meta), ("meteo", meteo)] {
                if let Some(p) = v {
                    s.set(key, path(p))?;
                }
            }
        }
        Command::Train { targets } | Command::Evaluate { targets, .. } if !targets.is_empty() => s.set("targets", join(targets))?,
        Command::Pathway { hops: Some(h), .. } => s.set("hops", h.to_string())?,
        Command::SynthBench { seeds: Some(n) } => s.set("seeds", n.to_string())?,
        Command::SynthData { days: Some(d) } => s.set("days", d.to_string())?,
        _ => {}
    }
    Ok(s)
}

fn run(cli: &Cli) -> CliResult<()> {
    let s = settings(cli)?;
    match &cli.command {
        Command::Ingest { .. } => commands::ingest(&s),
        Command::Mine => commands::mine(&s),
        Command::Candidates => commands::candidates(&s),
        Command::Train { .. } => commands::train(&s),
        Command::Evaluate { ablation, .. } => commands::evaluate_models(&s, *ablation),
        Command::Pathway { root, .. } => commands::pathway(&s, root),
        Command::SynthBench { .. } => commands::synth_bench(&s),
        Command::Pca { dims, model } => commands::pca(&s, *dims, model.as_ref()),
        Command::SynthData { .. } => commands::synth_data(&s),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
