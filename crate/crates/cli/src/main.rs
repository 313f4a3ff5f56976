//! `seqconf` — batch confidence-estimation runs against a simulated or HTTP
//! generation backend.
//!
//! Subcommands: `construct` builds training data from questions, `estimate`
//! emits confidence records for sequences, `evaluate` computes calibration
//! metrics from records, `cost` prints the generation-cost table, and
//! `simulate-world` fabricates a deterministic test world.

mod commands;
mod config;
mod error;
mod io;
mod manifest;
mod world_gen;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::{
    cmd_construct, cmd_cost, cmd_estimate, cmd_evaluate, cmd_simulate_world, load_config,
    parse_list, resolve_out_dir,
};
use config::{PositionStrategy, RunConfig};
use error::CliError;
use seqconf::pipeline::Strategy;

#[derive(Parser)]
#[command(name = "seqconf", version, about = "Fine-grained confidence estimation runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build training data (answer trees + JSONL examples) from a questions file.
    Construct {
        /// JSON run configuration; flags override file values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Simulated-world spec (simulated backend only).
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Samples per expansion.
        #[arg(long)]
        k: Option<u32>,
        /// Cluster count.
        #[arg(long)]
        m: Option<u32>,
        /// Maximum truncation levels.
        #[arg(long)]
        t: Option<u32>,
        /// Expansion strategy: full_tree | clustered | linear.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Emit confidence records for question/prefix sequences.
    Estimate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Input sequences (JSONL: question fields + optional prefix/kind).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<u32>,
        /// Position strategy: none | paragraph | periodic | entropy.
        #[arg(long)]
        positions: Option<String>,
        #[arg(long)]
        bci_alpha: Option<f64>,
        #[arg(long)]
        bci_width: Option<u32>,
        #[arg(long)]
        bci_depth: Option<u32>,
    },
    /// Compute calibration metrics from emitted records.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        records: Option<PathBuf>,
        /// Correctness labels (JSONL: question_id, correct); defaults to
        /// labels carried on final records.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Print the predicted generation-cost table.
    Cost {
        /// Comma-separated k values.
        #[arg(long, default_value = "2,3,5,30")]
        k: String,
        #[arg(long, default_value = "1,2,3")]
        m: String,
        #[arg(long, default_value = "0,1,2,3")]
        t: String,
    },
    /// Generate a deterministic simulated world plus its questions file.
    SimulateWorld {
        #[arg(long)]
        questions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_world: PathBuf,
        #[arg(long)]
        out_questions: PathBuf,
        /// Comma-separated correctness probabilities cycled over questions.
        #[arg(long)]
        p_grid: Option<String>,
        #[arg(long, default_value_t = 3)]
        paragraphs: u32,
        #[arg(long, default_value_t = 2)]
        sentences: u32,
    },
}

fn parse_strategy(raw: &str) -> Result<Strategy, CliError> {
    match raw {
        "full_tree" => Ok(Strategy::FullTree),
        "clustered" => Ok(Strategy::Clustered),
        "linear" => Ok(Strategy::Linear),
        other => Err(CliError::Input(format!(
            "unknown strategy {other:?}; expected full_tree, clustered or linear"
        ))),
    }
}

fn parse_positions(raw: &str) -> Result<PositionStrategy, CliError> {
    match raw {
        "none" => Ok(PositionStrategy::None),
        "paragraph" => Ok(PositionStrategy::Paragraph),
        "periodic" => Ok(PositionStrategy::Periodic),
        "entropy" => Ok(PositionStrategy::Entropy),
        other => Err(CliError::Input(format!(
            "unknown position strategy {other:?}; expected none, paragraph, periodic or entropy"
        ))),
    }
}

fn apply_world_override(config: &mut RunConfig, world: Option<PathBuf>) {
    if let Some(path) = world {
        config.generator = config::GeneratorConfig::Simulated { world_path: path };
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Construct {
            config,
            out,
            questions,
            world,
            seed,
            k,
            m,
            t,
            strategy,
            workers,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(q) = questions {
                cfg.io.questions = Some(q);
            }
            apply_world_override(&mut cfg, world);
            if let Some(s) = seed {
                cfg.seed = Some(s);
            }
            if let Some(k) = k {
                cfg.sampling.k = k;
            }
            if let Some(m) = m {
                cfg.pipeline.m = m;
            }
            if let Some(t) = t {
                cfg.pipeline.t = t;
            }
            if let Some(s) = strategy {
                cfg.pipeline.strategy = parse_strategy(&s)?;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let out_dir = resolve_out_dir(&out)?;
            cmd_construct(&cfg, &out_dir)
        }
        Command::Estimate {
            config,
            out,
            input,
            world,
            seed,
            k,
            positions,
            bci_alpha,
            bci_width,
            bci_depth,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            apply_world_override(&mut cfg, world);
            if let Some(s) = seed {
                cfg.seed = Some(s);
            }
            if let Some(k) = k {
                cfg.sampling.k = k;
            }
            if let Some(p) = positions {
                cfg.positions.strategy = parse_positions(&p)?;
            }
            if let Some(a) = bci_alpha {
                cfg.bci.alpha = a;
            }
            if let Some(w) = bci_width {
                cfg.bci.width = w;
            }
            if let Some(d) = bci_depth {
                cfg.bci.depth = d;
            }
            let out_dir = resolve_out_dir(&out)?;
            cmd_estimate(&cfg, &input, &out_dir)
        }
        Command::Evaluate {
            config,
            out,
            records,
            labels,
            bins,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(b) = bins {
                cfg.metrics.num_bins = b;
            }
            if let Some(r) = records {
                cfg.io.records = Some(r);
            }
            if let Some(l) = labels {
                cfg.io.labels = Some(l);
            }
            let records_path = cfg
                .io
                .records
                .clone()
                .ok_or_else(|| CliError::Input("no records file configured".into()))?;
            let labels_path = cfg.io.labels.clone();
            let out_dir = resolve_out_dir(&out)?;
            cmd_evaluate(&cfg, &records_path, labels_path.as_deref(), &out_dir)
        }
        Command::Cost { k, m, t } => {
            let ks: Vec<u32> = parse_list(&k, "k")?;
            let ms: Vec<u32> = parse_list(&m, "m")?;
            let ts: Vec<u32> = parse_list(&t, "t")?;
            cmd_cost(&ks, &ms, &ts)
        }
        Command::SimulateWorld {
            questions,
            seed,
            out_world,
            out_questions,
            p_grid,
            paragraphs,
            sentences,
        } => {
            let grid: Vec<f64> = match p_grid {
                Some(raw) => parse_list(&raw, "p_grid")?,
                None => Vec::new(),
            };
            cmd_simulate_world(
                questions,
                seed,
                &grid,
                paragraphs,
                sentences,
                &out_world,
                &out_questions,
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1, // usage problems are input errors
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
