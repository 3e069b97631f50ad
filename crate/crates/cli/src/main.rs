//! `cdistill`: data preparation, teacher and student training, evaluation,
//! latency benchmarks and sweeps for collaborative distillation.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use cdistill::config::{RunConfig, SweepConfig};
use cdistill::data::synthetic::BlockSpec;
use cdistill::data::TextFormat;
use cdistill::distill::Variant;
use clap::{Args, Parser, Subcommand};

use manifest::{input_digests, Invocation, RunManifest};

/// Default output root when `--out` is not given.
const OUT_ENV: &str = "CDISTILL_OUT";
const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Parser)]
#[command(name = "cdistill", version, about = "Collaborative distillation for top-N recommendation")]
struct Cli {
    /// Log filter such as `warn` or `cdistill=debug` (default: info, or RUST_LOG).
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration file (TOML); built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $CDISTILL_OUT/<command>, else runs/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, filter and split interactions into a dataset snapshot.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Raw `user, item, [rating,] timestamp` file.
        #[arg(long, conflicts_with = "synthetic")]
        dataset: Option<PathBuf>,
        /// tsv or csv (default: from the file extension).
        #[arg(long, value_parser = parse_format)]
        format: Option<TextFormat>,
        /// Skip the first line of the input.
        #[arg(long)]
        header: bool,
        /// Generate the seeded block-preference dataset instead of reading a file.
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        min_user: Option<usize>,
        #[arg(long)]
        min_item: Option<usize>,
    },
    /// Train the teacher on hard labels.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        /// Snapshot written by `prepare`.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train a student variant.
    TrainStudent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// plain, cd-base, cd-tg, cd-sg, rd or rd-rank.
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        /// Teacher checkpoint (overrides student.teacher_checkpoint).
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Leave-one-out HR@N / NDCG@N of a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Cutoff N (default 50).
        #[arg(short = 'n', long = "top-n")]
        top_n: Option<usize>,
        /// Also record latency with this many repetitions.
        #[arg(long)]
        latency_reps: Option<usize>,
        /// Write per-user ranks of the held-out items.
        #[arg(long)]
        dump_ranks: bool,
    },
    /// Single-threaded per-user scoring latency of one or more checkpoints.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = cdistill::eval::DEFAULT_WARMUP)]
        warmup: usize,
        /// Users scored per repetition (default: all test users).
        #[arg(long)]
        users: Option<usize>,
    },
    /// Train and evaluate every cell of a hyperparameter grid (`--config` is the grid file).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Re-run a command from its manifest.json.
    Replay {
        manifest: PathBuf,
        /// Output directory (default: the manifest's own).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Bad flag combinations found after parsing; mapped to exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_format(s: &str) -> std::result::Result<TextFormat, String> {
    s.parse().map_err(|e: cdistill::Error| e.to_string())
}

fn existing(path: &Path, what: &str) -> Result<PathBuf> {
    std::fs::canonicalize(path).with_context(|| format!("{what} {} not found", path.display()))
}

fn run_config(common: &Common) -> Result<RunConfig> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| UsageError(e.to_string()))?,
        None => RunConfig::default(),
    };
    let seed = common.seed.unwrap_or(cfg.seed);
    Ok(cfg.with_seed(seed))
}

fn out_dir(common_out: Option<&PathBuf>, default_name: &str) -> PathBuf {
    match common_out {
        Some(p) => p.clone(),
        None => {
            let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
            root.join(default_name)
        }
    }
}

/// Turns parsed arguments into a resolved invocation and output directory.
fn resolve(command: Command) -> Result<(Invocation, PathBuf)> {
    Ok(match command {
        Command::Prepare { common, dataset, format, header, synthetic, min_user, min_item } => {
            let mut cfg = run_config(&common)?;
            let data = &mut cfg.data;
            if let Some(p) = dataset {
                data.input = Some(existing(&p, "input file")?);
                data.synthetic = None;
            } else if let Some(p) = data.input.take() {
                data.input = Some(existing(&p, "input file")?);
            }
            if synthetic && data.synthetic.is_none() {
                data.synthetic = Some(BlockSpec { seed: cfg.seed, ..BlockSpec::default() });
            }
            if data.synthetic.is_none() && data.input.is_none() {
                return Err(UsageError("prepare needs --dataset <file>, --synthetic, or data.input in the config".into()).into());
            }
            data.format = format.or(data.format);
            data.has_header |= header;
            data.min_user = min_user.unwrap_or(data.min_user);
            data.min_item = min_item.unwrap_or(data.min_item);
            let out = out_dir(common.out.as_ref(), "prepare");
            (Invocation::Prepare { seed: cfg.seed, data: cfg.data }, out)
        }
        Command::TrainTeacher { common, dataset } => {
            let config = run_config(&common)?;
            let dataset = existing(&dataset, "dataset snapshot")?;
            (Invocation::TrainTeacher { config, dataset }, out_dir(common.out.as_ref(), "teacher"))
        }
        Command::TrainStudent { common, dataset, variant, teacher } => {
            let config = run_config(&common)?;
            let dataset = existing(&dataset, "dataset snapshot")?;
            let teacher = match teacher.or_else(|| config.student.teacher_checkpoint.clone()) {
                Some(p) if variant.needs_teacher() => Some(existing(&p, "teacher checkpoint")?),
                _ => None,
            };
            let out = out_dir(common.out.as_ref(), &format!("student-{variant}"));
            (Invocation::TrainStudent { config, dataset, variant, teacher }, out)
        }
        Command::Evaluate { common, dataset, checkpoint, top_n, latency_reps, dump_ranks } => {
            let mut config = run_config(&common)?;
            config.eval.cutoff = top_n.unwrap_or(config.eval.cutoff);
            config.eval.latency_reps = latency_reps.unwrap_or(config.eval.latency_reps);
            if config.eval.cutoff == 0 {
                return Err(UsageError("--top-n must be at least 1".into()).into());
            }
            let dataset = existing(&dataset, "dataset snapshot")?;
            let checkpoint = existing(&checkpoint, "checkpoint")?;
            (Invocation::Evaluate { config, dataset, checkpoint, dump_ranks }, out_dir(common.out.as_ref(), "evaluate"))
        }
        Command::Bench { common, dataset, checkpoint, reps, warmup, users } => {
            if reps == 0 {
                return Err(UsageError("--reps must be at least 1".into()).into());
            }
            let seed = run_config(&common)?.seed;
            let dataset = existing(&dataset, "dataset snapshot")?;
            let checkpoints = checkpoint.iter().map(|c| existing(c, "checkpoint")).collect::<Result<Vec<_>>>()?;
            let inv = Invocation::Bench { seed, dataset, checkpoints, repetitions: reps, warmup, users };
            (inv, out_dir(common.out.as_ref(), "bench"))
        }
        Command::Sweep { common, dataset, teacher } => {
            let mut grid = match &common.config {
                Some(p) => SweepConfig::load(p).map_err(|e| UsageError(e.to_string()))?,
                None => return Err(UsageError("sweep needs a grid file: --config <grid.toml>".into()).into()),
            };
            let seed = common.seed.unwrap_or(grid.base.seed);
            grid.base = grid.base.with_seed(seed);
            let dataset = existing(&dataset, "dataset snapshot")?;
            let teacher = match teacher.or_else(|| grid.base.student.teacher_checkpoint.clone()) {
                Some(p) => Some(existing(&p, "teacher checkpoint")?),
                None => None,
            };
            (Invocation::Sweep { grid, dataset, teacher }, out_dir(common.out.as_ref(), "sweep"))
        }
        Command::Replay { .. } => unreachable!("handled by the caller"),
    })
}

fn run(invocation: Invocation, out: PathBuf) -> Result<()> {
    let input_digests = input_digests(&invocation)?;
    let (outputs, dataset_fingerprint) = commands::execute(&invocation, &out)?;
    let out_dir = std::fs::canonicalize(&out).unwrap_or(out);
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: invocation.seed(),
        invocation,
        dataset_fingerprint,
        input_digests,
        out_dir: out_dir.clone(),
        outputs,
    };
    manifest.write(&out_dir)?;
    log::info!("{} finished; outputs in {}", manifest.invocation.name(), out_dir.display());
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    if let Command::Replay { manifest, out } = command {
        let m = RunManifest::load(&manifest)?;
        m.verify_inputs()?;
        let out = out.unwrap_or_else(|| m.out_dir.clone());
        return run(m.invocation, out);
    }
    let (invocation, out) = resolve(command)?;
    run(invocation, out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if let Some(filter) = &cli.log {
        logger.parse_filters(filter);
    }
    logger.init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
