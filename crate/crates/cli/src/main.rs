use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use dynspatial::scene::LoadOptions;
use dynspatial_cli::commands::{
    cmd_curate, cmd_generate, cmd_score, cmd_stats, cmd_synth, cmd_synth_random, cmd_validate, read_captions,
    write_json, write_records,
};
use dynspatial_cli::config::RunConfig;
use dynspatial_cli::llm::build_client;

#[derive(Parser)]
#[command(name = "dynspatial", version, about = "Procedural spatio-temporal QA generation and scoring")]
struct Cli {
    /// Overrides `master_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; overrides `worker_count`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file (directory for `synth`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log more; repeat for trace output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a QA dataset from a directory of scene annotations.
    Generate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        items_per_video: Option<usize>,
    },
    /// Write scene annotations from synthetic motion specs.
    Synth {
        /// Directory of spec files.
        #[arg(long, conflicts_with = "random", required_unless_present = "random")]
        specs: Option<PathBuf>,
        /// Number of random scenes to write instead.
        #[arg(long)]
        random: Option<usize>,
    },
    /// Check every annotation file and list violations.
    Validate {
        #[arg(long)]
        annotations: PathBuf,
        /// Accept videos outside the curated duration range.
        #[arg(long)]
        no_curation: bool,
    },
    /// Score a predictions file against a dataset.
    Score {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Subtask proportions and per-video counts of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Screen captions and classify agent categories with the LLM endpoint.
    Curate {
        /// JSON Lines of {video_id, caption}.
        #[arg(long)]
        captions: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.master_seed = s;
    }
    if let Some(w) = cli.workers {
        config.worker_count = w;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Generate {
            annotations,
            items_per_video,
        } => {
            if let Some(n) = items_per_video {
                config.items_per_video = n;
            }
            config.validate()?;
            let out = out.context("generate needs --out")?;
            let client = config.llm.as_ref().map(build_client).transpose()?;
            let summary = cmd_generate(&config, &annotations, out, client.as_deref())?;
            for (tag, n) in &summary.per_subtask {
                println!("{tag:<14} {n}");
            }
            println!(
                "{} items from {} videos ({} files skipped, {} draws failed)",
                summary.items, summary.videos, summary.skipped_files, summary.failed_items
            );
            Ok(summary.items > 0)
        }
        Command::Synth { specs, random } => {
            let out = out.context("synth needs --out <directory>")?;
            let summary = match (specs, random) {
                (Some(dir), None) => cmd_synth(&dir, out)?,
                (None, Some(n)) => cmd_synth_random(n, &config, out)?,
                _ => bail!("pass exactly one of --specs or --random"),
            };
            println!("{} scenes written, {} failed", summary.written, summary.failed);
            Ok(summary.failed == 0)
        }
        Command::Validate {
            annotations,
            no_curation,
        } => {
            let opts = LoadOptions {
                enforce_curation: config.enforce_curation && !no_curation,
            };
            let report = cmd_validate(&annotations, &opts)?;
            for v in &report.violations {
                eprintln!("{}: {}: {}", v.file, v.path, v.message);
            }
            write_json(&report, out)?;
            Ok(report.violations.is_empty())
        }
        Command::Score { dataset, predictions } => {
            write_json(&cmd_score(&dataset, &predictions)?, out)?;
            Ok(true)
        }
        Command::Stats { dataset } => {
            write_json(&cmd_stats(&dataset)?, out)?;
            Ok(true)
        }
        Command::Curate { captions } => {
            let llm = config.llm.as_ref().context("curate needs an [llm] section in the config")?;
            let client = build_client(llm)?;
            let captions = read_captions(&captions)?;
            let records = cmd_curate(&captions, &config, client.as_ref(), config.worker_count)?;
            write_records(&records, out)?;
            Ok(captions.is_empty() || !records.is_empty())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
