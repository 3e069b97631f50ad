//! Command implementations. Every command takes a fully resolved
//! [`Invocation`] and an output directory, and returns the files it wrote.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use cdistill::config::{Precision, RunConfig, SweepCell, SweepConfig};
use cdistill::data::{
    filter_dataset, leave_one_out_split, load_dataset_with, read_snapshot, write_snapshot, SplitDataset, TextFormat,
};
use cdistill::distill::{train_student, train_teacher, Variant};
use cdistill::eval::{bench_latency, evaluate, LatencyStats};
use cdistill::models::{load_checkpoint, read_width, save_checkpoint, AnyModel, CfModel};
use cdistill::Scalar;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::Invocation;

pub const SNAPSHOT_FILE: &str = "dataset.snap";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TEACHER_FILE: &str = "teacher.ckpt";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const RANKS_FILE: &str = "ranks.jsonl";
pub const BENCH_FILE: &str = "bench.json";
pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_TSV: &str = "results.tsv";

pub fn student_file(v: Variant) -> String {
    format!("student-{v}.ckpt")
}

pub fn student_trace_file(v: Variant) -> String {
    format!("trace-{v}.jsonl")
}

/// Runs `inv`, writing into `out`. Returns (output files, dataset fingerprint).
pub fn execute(inv: &Invocation, out: &Path) -> Result<(Vec<String>, Option<String>)> {
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    match inv {
        Invocation::Prepare { data, .. } => prepare(data, out),
        Invocation::TrainTeacher { config, dataset } => {
            let split = load_split(dataset)?;
            let files = match config.precision {
                Precision::F32 => teacher_run::<f32>(config, &split, out)?,
                Precision::F64 => teacher_run::<f64>(config, &split, out)?,
            };
            Ok((files, Some(split.fingerprint())))
        }
        Invocation::TrainStudent { config, dataset, variant, teacher } => {
            let split = load_split(dataset)?;
            let teacher = match (variant.needs_teacher(), teacher) {
                (true, None) => bail!(
                    "variant {variant} needs a teacher checkpoint: pass --teacher or set student.teacher_checkpoint"
                ),
                (true, Some(p)) => Some(p.as_path()),
                (false, _) => None,
            };
            let files = match config.precision {
                Precision::F32 => student_run::<f32>(config, &split, *variant, teacher, out)?,
                Precision::F64 => student_run::<f64>(config, &split, *variant, teacher, out)?,
            };
            Ok((files, Some(split.fingerprint())))
        }
        Invocation::Evaluate { config, dataset, checkpoint, dump_ranks } => {
            let split = load_split(dataset)?;
            let files = match read_width(checkpoint)? {
                4 => evaluate_run::<f32>(config, &split, checkpoint, *dump_ranks, out)?,
                _ => evaluate_run::<f64>(config, &split, checkpoint, *dump_ranks, out)?,
            };
            Ok((files, Some(split.fingerprint())))
        }
        Invocation::Bench { dataset, checkpoints, repetitions, warmup, users, .. } => {
            let split = load_split(dataset)?;
            bench_run(&split, checkpoints, *repetitions, *warmup, *users, out)?;
            Ok((vec![BENCH_FILE.into()], Some(split.fingerprint())))
        }
        Invocation::Sweep { grid, dataset, teacher } => {
            let split = load_split(dataset)?;
            let files = match grid.base.precision {
                Precision::F32 => sweep_run::<f32>(grid, &split, teacher.as_deref(), out)?,
                Precision::F64 => sweep_run::<f64>(grid, &split, teacher.as_deref(), out)?,
            };
            Ok((files, Some(split.fingerprint())))
        }
    }
}

fn load_split(path: &Path) -> Result<SplitDataset> {
    read_snapshot(path).with_context(|| format!("cannot load dataset snapshot {}", path.display()))
}

fn load_model<S: Scalar>(path: &Path, split: &SplitDataset) -> Result<AnyModel<S>> {
    let (model, _) = load_checkpoint::<S>(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    if model.num_users() != split.train.num_users() || model.num_items() != split.train.num_items() {
        bail!(
            "checkpoint {} is {}x{} but the dataset is {}x{}",
            path.display(),
            model.num_users(),
            model.num_items(),
            split.train.num_users(),
            split.train.num_items()
        );
    }
    Ok(model)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    raw_users: usize,
    raw_items: usize,
    raw_interactions: usize,
    users: usize,
    items: usize,
    interactions: usize,
    train_interactions: usize,
    fingerprint: String,
}

fn prepare(data: &cdistill::config::DataConfig, out: &Path) -> Result<(Vec<String>, Option<String>)> {
    let raw = match (&data.synthetic, &data.input) {
        (Some(spec), _) => spec.generate()?,
        (None, Some(input)) => {
            let format = data.format.unwrap_or_else(|| TextFormat::from_path(input));
            load_dataset_with(input, format, data.has_header)?
        }
        (None, None) => bail!("prepare needs an input file (--dataset) or --synthetic"),
    };
    let filtered = filter_dataset(&raw, data.min_user, data.min_item)?;
    let split = leave_one_out_split(&filtered)?;
    write_snapshot(&out.join(SNAPSHOT_FILE), &split)?;
    let summary = Summary {
        raw_users: raw.num_users(),
        raw_items: raw.num_items(),
        raw_interactions: raw.num_interactions(),
        users: filtered.num_users(),
        items: filtered.num_items(),
        interactions: filtered.num_interactions(),
        train_interactions: split.train.num_interactions(),
        fingerprint: split.fingerprint(),
    };
    log::info!(
        "prepared {} users, {} items, {} interactions ({} before filtering)",
        summary.users,
        summary.items,
        summary.interactions,
        summary.raw_interactions
    );
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok((vec![SNAPSHOT_FILE.into(), SUMMARY_FILE.into()], Some(split.fingerprint())))
}

fn teacher_run<S: Scalar>(cfg: &RunConfig, split: &SplitDataset, out: &Path) -> Result<Vec<String>> {
    let d = &split.train;
    let mut model = cfg.teacher.model.build::<S>(d.num_users(), d.num_items(), cfg.seed)?;
    let trace = train_teacher(&mut model, d, &cfg.teacher.train)?;
    save_checkpoint(&out.join(TEACHER_FILE), &model, cfg.seed)?;
    write_jsonl(&out.join(TRACE_FILE), &trace)?;
    Ok(vec![TEACHER_FILE.into(), TRACE_FILE.into()])
}

fn student_run<S: Scalar>(
    cfg: &RunConfig,
    split: &SplitDataset,
    variant: Variant,
    teacher: Option<&Path>,
    out: &Path,
) -> Result<Vec<String>> {
    let d = &split.train;
    let teacher = teacher.map(|p| load_model::<S>(p, split)).transpose()?;
    let mut model = cfg.student.model.build::<S>(d.num_users(), d.num_items(), cfg.seed)?;
    let mut train = cfg.student.train.clone();
    train.distill = variant.configure(&train.distill);
    let trace = train_student(&mut model, teacher.as_ref(), d, &train)?;
    let (ckpt, trace_file) = (student_file(variant), student_trace_file(variant));
    save_checkpoint(&out.join(&ckpt), &model, cfg.seed)?;
    write_jsonl(&out.join(&trace_file), &trace)?;
    Ok(vec![ckpt, trace_file])
}

/// First `limit` users with a test item, in index order.
fn latency_users(split: &SplitDataset, limit: Option<usize>) -> Vec<usize> {
    let users = split.test_pairs().map(|(u, _)| u);
    match limit {
        Some(k) => users.take(k).collect(),
        None => users.collect(),
    }
}

fn model_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Serialize)]
struct RankLine<'a> {
    user: &'a str,
    index: usize,
    rank: usize,
}

fn evaluate_run<S: Scalar>(
    cfg: &RunConfig,
    split: &SplitDataset,
    checkpoint: &Path,
    dump_ranks: bool,
    out: &Path,
) -> Result<Vec<String>> {
    let model = load_model::<S>(checkpoint, split)?;
    let mut report = evaluate(&model, split, cfg.eval.cutoff)?;
    if cfg.eval.latency_reps > 0 {
        let users = latency_users(split, cfg.eval.latency_users);
        report.latency = Some(bench_latency(&model, split, &users, cfg.eval.latency_reps, cfg.eval.warmup)?);
    }
    log::info!("HR@{n} {:.4}  NDCG@{n} {:.4}", report.hr, report.ndcg, n = report.n_cutoff);
    write_json(&out.join(REPORT_FILE), &report.record(&model_id(checkpoint)))?;
    let mut files = vec![REPORT_FILE.to_string()];
    if dump_ranks {
        let ids = split.train.user_ids();
        let lines: Vec<RankLine> =
            report.ranks.iter().map(|&(u, rank)| RankLine { user: &ids[u], index: u, rank }).collect();
        write_jsonl(&out.join(RANKS_FILE), &lines)?;
        files.push(RANKS_FILE.into());
    }
    Ok(files)
}

#[derive(Serialize)]
struct BenchRow {
    model_id: String,
    checkpoint: String,
    param_count: usize,
    #[serde(flatten)]
    latency: LatencyStats,
    /// Mean latency relative to the first checkpoint.
    relative: f64,
}

fn bench_one<S: Scalar>(
    path: &Path,
    split: &SplitDataset,
    users: &[usize],
    reps: usize,
    warmup: usize,
) -> Result<(usize, LatencyStats)> {
    let model = load_model::<S>(path, split)?;
    Ok((model.param_count(), bench_latency(&model, split, users, reps, warmup)?))
}

fn bench_run(
    split: &SplitDataset,
    checkpoints: &[std::path::PathBuf],
    reps: usize,
    warmup: usize,
    limit: Option<usize>,
    out: &Path,
) -> Result<()> {
    let users = latency_users(split, limit);
    let mut rows: Vec<BenchRow> = Vec::new();
    for path in checkpoints {
        let (param_count, latency) = match read_width(path)? {
            4 => bench_one::<f32>(path, split, &users, reps, warmup)?,
            _ => bench_one::<f64>(path, split, &users, reps, warmup)?,
        };
        let relative = rows.first().map_or(1.0, |r| latency.mean_s / r.latency.mean_s);
        log::info!("{}: {:.3e} s/user ({relative:.3}x)", path.display(), latency.mean_s);
        rows.push(BenchRow { model_id: model_id(path), checkpoint: path.display().to_string(), param_count, latency, relative });
    }
    write_json(&out.join(BENCH_FILE), &rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub label: String,
    #[serde(flatten)]
    pub cell: SweepCell,
    pub dim: Option<usize>,
    pub param_count: Option<usize>,
    pub hr: Option<f64>,
    pub ndcg: Option<f64>,
    pub latency_mean_s: Option<f64>,
    pub latency_p95_s: Option<f64>,
    pub error: Option<String>,
}

fn sweep_cell<S: Scalar>(
    grid: &SweepConfig,
    cell: &SweepCell,
    split: &SplitDataset,
    teacher: Option<&AnyModel<S>>,
) -> Result<(usize, usize, cdistill::eval::EvalReport)> {
    let d = &split.train;
    let base = &grid.base;
    let (spec, train) = cell.apply(base, d.num_users(), d.num_items())?;
    let mut model = spec.build::<S>(d.num_users(), d.num_items(), base.seed)?;
    train_student(&mut model, teacher.filter(|_| cell.variant.needs_teacher()), d, &train)?;
    let mut report = evaluate(&model, split, base.eval.cutoff)?;
    if grid.latency_reps > 0 {
        let users = latency_users(split, base.eval.latency_users);
        report.latency = Some(bench_latency(&model, split, &users, grid.latency_reps, base.eval.warmup)?);
    }
    Ok((spec.dim, model.param_count(), report))
}

fn sweep_run<S: Scalar>(
    grid: &SweepConfig,
    split: &SplitDataset,
    teacher_path: Option<&Path>,
    out: &Path,
) -> Result<Vec<String>> {
    let base = &grid.base;
    let d = &split.train;
    let mut files = Vec::new();
    let needs_teacher = grid.variants.iter().any(|v| v.needs_teacher());
    let teacher = match (needs_teacher, teacher_path) {
        (false, _) => None,
        (true, Some(p)) => Some(load_model::<S>(p, split)?),
        (true, None) => {
            log::info!("no teacher checkpoint given; training one");
            let mut t = base.teacher.model.build::<S>(d.num_users(), d.num_items(), base.seed)?;
            let trace = train_teacher(&mut t, d, &base.teacher.train)?;
            save_checkpoint(&out.join(TEACHER_FILE), &t, base.seed)?;
            write_jsonl(&out.join(TRACE_FILE), &trace)?;
            files.extend([TEACHER_FILE.to_string(), TRACE_FILE.to_string()]);
            Some(t)
        }
    };
    let cells = grid.cells();
    log::info!("sweeping {} cells", cells.len());
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|cell| {
            let label = cell.label();
            let mut row = SweepRow {
                label: label.clone(),
                cell: cell.clone(),
                dim: None,
                param_count: None,
                hr: None,
                ndcg: None,
                latency_mean_s: None,
                latency_p95_s: None,
                error: None,
            };
            match sweep_cell(grid, cell, split, teacher.as_ref()) {
                Ok((dim, params, r)) => {
                    row.dim = Some(dim);
                    row.param_count = Some(params);
                    row.hr = Some(r.hr);
                    row.ndcg = Some(r.ndcg);
                    row.latency_mean_s = r.latency.as_ref().map(|l| l.mean_s);
                    row.latency_p95_s = r.latency.as_ref().and_then(|l| l.p95_s);
                }
                Err(e) => {
                    log::warn!("cell {label} failed: {e:#}");
                    row.error = Some(format!("{e:#}"));
                }
            }
            row
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &SweepRow| r.ndcg.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then_with(|| a.label.cmp(&b.label))
    });
    write_json(&out.join(RESULTS_JSON), &rows)?;
    fs::write(out.join(RESULTS_TSV), results_table(&rows, base.eval.cutoff))
        .with_context(|| format!("cannot write {}", out.join(RESULTS_TSV).display()))?;
    files.extend([RESULTS_JSON.to_string(), RESULTS_TSV.to_string()]);
    if rows.iter().all(|r| r.error.is_some()) {
        return Err(anyhow!("every sweep cell failed; see {}", out.join(RESULTS_JSON).display()));
    }
    Ok(files)
}

fn results_table(rows: &[SweepRow], n: usize) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    let mut s = format!("label\tdim\tparams\thr@{n}\tndcg@{n}\tlatency_mean_s\tlatency_p95_s\terror\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.label,
            r.dim.map_or("-".into(), |d| d.to_string()),
            r.param_count.map_or("-".into(), |d| d.to_string()),
            opt(r.hr),
            opt(r.ndcg),
            r.latency_mean_s.map_or("-".into(), |x| format!("{x:.3e}")),
            r.latency_p95_s.map_or("-".into(), |x| format!("{x:.3e}")),
            r.error.as_deref().unwrap_or("")
        ));
    }
    s
}
