//! `satcalc eval`: score a checkpoint on one split of a built dataset.
//!
//! The report is a TSV with one row per (sample, task) and a pooled ALL row
//! per task. PSNR uses a set-level peak (max minus min of the masked ground
//! truth across the whole split), so per-sample rows are comparable.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use satcalc_core::dataset::{load_sample, Manifest, Sample, Split, TaskId, TaskMap, MANIFEST_NAME};
use satcalc_core::grid::Grid2D;
use satcalc_core::metrics::{evaluate_task, evaluation_mask, EvalMaskSpec, MetricReport};
use satcalc_core::model::{checkpoint, forward_all, ModelParams};
use satcalc_core::CoreError;

use crate::util::{cell, opt_cell, parse_tasks, write_text_atomic, CmdResult, Ctx, Fail};

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint directory.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory (as produced by `dataset build`).
    #[arg(long)]
    data: PathBuf,
    /// Split to score: train, val, or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Tasks to score: "all" or a comma list like NDVI,H,AGB.
    #[arg(long, default_value = "all")]
    tasks: String,
    /// Report TSV path.
    #[arg(long)]
    report: PathBuf,
}

pub fn run(ctx: &Ctx, a: &EvalArgs) -> CmdResult {
    let m = checkpoint::load(&a.ckpt)?;
    let split = Split::parse(&a.split)?;
    let tasks = parse_tasks(&a.tasks)?;

    let samples = load_split(&a.data, split)?;
    if samples.is_empty() {
        return Err(Fail::user(format!(
            "dataset {} has no samples in the {} split",
            a.data.display(),
            split.name()
        )));
    }
    ctx.note(format!("scoring {} samples on {} tasks", samples.len(), tasks.len()));

    let predictions = forward_samples(&m, &samples, &tasks)?;
    let text = report_text(&samples, &predictions, &tasks, |task, pooled| {
        println!("{}: {}", task.name(), summary_line(pooled));
    })?;
    write_text_atomic(&a.report, &text)?;
    println!("report written to {}", a.report.display());
    Ok(())
}

/// Load every sample of one split, in manifest order.
pub fn load_split(data: &Path, split: Split) -> Result<Vec<Sample>, Fail> {
    let manifest = Manifest::read(&data.join(MANIFEST_NAME))?;
    manifest.validate_files(data)?;
    load_split_from(data, &manifest, split)
}

/// As `load_split`, for an already-read manifest.
pub fn load_split_from(data: &Path, manifest: &Manifest, split: Split) -> Result<Vec<Sample>, Fail> {
    let records = manifest.split_records(split);
    let samples = records
        .par_iter()
        .map(|rec| load_sample(data, rec))
        .collect::<Result<Vec<_>, CoreError>>()?;
    Ok(samples)
}

/// Per-sample forward passes for the requested tasks, in sample order.
pub fn forward_samples(
    m: &ModelParams,
    samples: &[Sample],
    tasks: &BTreeSet<TaskId>,
) -> Result<Vec<TaskMap>, Fail> {
    samples
        .par_iter()
        .map(|s| forward_all(m, s.x(), tasks))
        .collect::<Result<Vec<_>, CoreError>>()
        .map_err(Fail::from)
}

/// Pool the masked (prediction, truth) pixels of one task across samples
/// into a pair of row grids, so the pooled pair scores through the same
/// code path as a single sample.
fn pooled_pair(
    predictions: &[TaskMap],
    samples: &[Sample],
    task: TaskId,
    spec: &EvalMaskSpec,
    height_like: bool,
) -> Result<Option<(Grid2D, Grid2D)>, Fail> {
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    for (p, s) in predictions.iter().zip(samples) {
        let pg = prediction(p, task)?;
        let gg = s.target(task);
        let mask = evaluation_mask(pg, gg, spec, height_like)?;
        for (i, &keep) in mask.iter().enumerate() {
            if keep {
                pred.push(pg.values()[i]);
                gt.push(gg.values()[i]);
            }
        }
    }
    if pred.is_empty() {
        return Ok(None);
    }
    let n = pred.len();
    let all = vec![true; n];
    Ok(Some((Grid2D::new(1, n, pred, all.clone())?, Grid2D::new(1, n, gt, all)?)))
}

/// Score one task pooled over all samples. Returns the evaluation spec
/// (with the set-level PSNR peak filled in) alongside the pooled report;
/// the report is absent when no pixel survives the mask or the pooled pair
/// is degenerate.
pub fn task_pooled(
    samples: &[Sample],
    predictions: &[TaskMap],
    task: TaskId,
) -> Result<(EvalMaskSpec, Option<MetricReport>), Fail> {
    let mut spec = EvalMaskSpec::default();
    let height_like = task == TaskId::Height;
    let pair = pooled_pair(predictions, samples, task, &spec, height_like)?;
    let report = match &pair {
        Some((pred, gt)) => {
            let mx = gt.values().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mn = gt.values().iter().cloned().fold(f32::INFINITY, f32::min);
            spec.psnr_peak = Some((mx - mn) as f64);
            evaluate_task(pred, gt, &spec, height_like).ok()
        }
        None => None,
    };
    Ok((spec, report))
}

/// Build the full report text. `on_pooled` sees each task's pooled report
/// as it is produced (the eval command prints these as a summary).
pub fn report_text(
    samples: &[Sample],
    predictions: &[TaskMap],
    tasks: &BTreeSet<TaskId>,
    mut on_pooled: impl FnMut(TaskId, Option<&MetricReport>),
) -> Result<String, Fail> {
    let mut text = String::from(
        "sample\ttask\tn_pixels\tmae\trmse\tbias\tr2\tpsnr_db\tnmae_pct\ttree_cover_iou\n",
    );

    let mut pooled: Vec<(TaskId, EvalMaskSpec, Option<MetricReport>)> = Vec::new();
    for &task in tasks {
        let (spec, report) = task_pooled(samples, predictions, task)?;
        pooled.push((task, spec, report));
    }

    for (i, sample) in samples.iter().enumerate() {
        for (task, spec, _) in &pooled {
            let height_like = *task == TaskId::Height;
            let report =
                evaluate_task(prediction(&predictions[i], *task)?, sample.target(*task), spec, height_like);
            text.push_str(&row(sample.id(), *task, report.as_ref().ok()));
        }
    }
    for (task, _, report) in &pooled {
        on_pooled(*task, report.as_ref());
        text.push_str(&row("ALL", *task, report.as_ref()));
    }
    Ok(text)
}

/// A task's map out of one forward pass; absence is a broken contract, not
/// a user mistake.
fn prediction(maps: &TaskMap, task: TaskId) -> Result<&Grid2D, Fail> {
    maps.get(&task)
        .ok_or_else(|| Fail::internal(format!("forward pass produced no {} map", task.name())))
}

/// One TSV row; a missing report (degenerate or empty support) is dashes.
fn row(sample: &str, task: TaskId, r: Option<&MetricReport>) -> String {
    match r {
        Some(r) => format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            sample,
            task.name(),
            r.n_pixels,
            cell(r.mae),
            cell(r.rmse),
            cell(r.bias),
            cell(r.r2),
            cell(r.psnr_db),
            opt_cell(r.nmae_pct),
            opt_cell(r.tree_cover_iou),
        ),
        None => format!("{}\t{}\t-\t-\t-\t-\t-\t-\t-\t-\n", sample, task.name()),
    }
}

/// Human summary of a pooled report for stdout.
fn summary_line(r: Option<&MetricReport>) -> String {
    match r {
        Some(r) => format!(
            "mae {} rmse {} r2 {} ({} px)",
            cell(r.mae),
            cell(r.rmse),
            cell(r.r2),
            r.n_pixels
        ),
        None => "no scoreable pixels".into(),
    }
}
