//! `satcalc train`: fit the trainable parameters on a built dataset, or
//! sweep decoder depth 1-10 and report height metrics per depth.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use satcalc_core::dataset::{AugmentSpec, Manifest, Sample, Split, TaskId, MANIFEST_NAME};
use satcalc_core::metrics::MetricReport;
use satcalc_core::model::{checkpoint, ModelConfig, ModelParams};
use satcalc_core::train::{train_loop, LossWeights, TrainReport, TrainSettings};

use super::ModelArgs;
use crate::util::{cell, parse_tasks, write_text_atomic, CmdResult, Ctx, Fail};

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory (as produced by `dataset build`).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Epoch budget.
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Samples per optimizer step.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Tasks to train: "all" or a comma list like NDVI,H,AGB.
    #[arg(long, default_value = "all")]
    tasks: String,
    /// Rotation/scale augmentation, redrawn per presentation.
    #[arg(long)]
    augment: bool,
    /// Learning-rate factor applied when validation loss plateaus.
    #[arg(long, default_value_t = 0.5)]
    plateau_factor: f64,
    /// Non-improving epochs tolerated before the rate drops.
    #[arg(long, default_value_t = 1)]
    plateau_patience: u32,
    /// Non-improving epochs tolerated before training stops.
    #[arg(long, default_value_t = 3)]
    early_stop_patience: u32,
    /// Write per-epoch losses to this TSV.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Instead of one fit: train at decoder depth 1-10 and write this TSV
    /// of height metrics per depth.
    #[arg(long)]
    depth_ablation: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

pub fn run(ctx: &Ctx, a: &TrainArgs) -> CmdResult {
    if a.out.is_none() && a.depth_ablation.is_none() {
        return Err(Fail::user("pass --out for a fit, or --depth-ablation for the sweep"));
    }

    let manifest = Manifest::read(&a.data.join(MANIFEST_NAME))?;
    manifest.validate_files(&a.data)?;
    let train_samples = super::eval::load_split_from(&a.data, &manifest, Split::Train)?;
    if train_samples.is_empty() {
        return Err(Fail::user(format!("dataset {} has no training split", a.data.display())));
    }
    let val_samples = super::eval::load_split_from(&a.data, &manifest, Split::Val)?;
    if val_samples.is_empty() {
        ctx.note("no validation split; validating on the training set");
    }

    let mut base = ModelConfig::default();
    base.input_hw = manifest.patch_size as usize;
    let config = a.model.resolve(base)?;

    let tasks = parse_tasks(&a.tasks)?;
    let settings = TrainSettings {
        tasks,
        weights: LossWeights::default(),
        lr: a.lr,
        batch_size: a.batch,
        max_epochs: a.epochs,
        plateau_factor: a.plateau_factor,
        plateau_patience: a.plateau_patience,
        early_stop_patience: a.early_stop_patience,
        augment: AugmentSpec { enabled: a.augment, ..AugmentSpec::default() },
        target_params: manifest.target_params()?,
        seed: ctx.seed,
        ..TrainSettings::default()
    };

    let val_ref: &[Sample] = if val_samples.is_empty() { &train_samples } else { &val_samples };
    match &a.depth_ablation {
        Some(path) => depth_ablation(ctx, a, path, &config, &train_samples, val_ref, &settings),
        None => single_fit(ctx, a, &config, &train_samples, val_ref, &settings),
    }
}

fn single_fit(
    ctx: &Ctx,
    a: &TrainArgs,
    config: &ModelConfig,
    train_samples: &[Sample],
    val_samples: &[Sample],
    settings: &TrainSettings,
) -> CmdResult {
    let out = a.out.as_ref().expect("checked by run");
    let mut m = ModelParams::init(config.clone(), ctx.seed)?;
    ctx.note(format!(
        "{} trainable parameters, {} train / {} val samples",
        m.theta.len(),
        train_samples.len(),
        val_samples.len()
    ));

    let report = train_loop(&mut m, train_samples, val_samples, settings)?;
    for rec in &report.history {
        ctx.note(format!(
            "epoch {}: train {:.6} val {:.6} lr {:e}",
            rec.epoch, rec.train_loss, rec.val_loss, rec.lr
        ));
    }

    checkpoint::save(out, &m)?;
    if let Some(path) = &a.history {
        write_text_atomic(path, &history_text(&report, &settings.tasks))?;
    }

    let last = report.history.last().expect("train_loop yields at least one epoch");
    println!(
        "trained {} epochs{}; train loss {:.6}, val loss {:.6}, final lr {:e}",
        report.history.len(),
        if report.stopped_early { " (stopped early)" } else { "" },
        last.train_loss,
        last.val_loss,
        report.final_lr
    );
    println!("checkpoint written to {}", out.display());
    Ok(())
}

/// Per-epoch record in full precision, one column per trained task.
fn history_text(report: &TrainReport, tasks: &BTreeSet<TaskId>) -> String {
    let mut text = String::from("epoch\ttrain_loss\tval_loss\tlr");
    for t in tasks {
        text.push('\t');
        text.push_str(t.name());
    }
    text.push('\n');
    for rec in &report.history {
        text.push_str(&format!("{}\t{}\t{}\t{}", rec.epoch, rec.train_loss, rec.val_loss, rec.lr));
        for t in tasks {
            text.push_str(&format!("\t{}", rec.per_task[t]));
        }
        text.push('\n');
    }
    text
}

fn depth_ablation(
    ctx: &Ctx,
    a: &TrainArgs,
    path: &Path,
    config: &ModelConfig,
    train_samples: &[Sample],
    val_samples: &[Sample],
    settings: &TrainSettings,
) -> CmdResult {
    if !settings.tasks.contains(&TaskId::Height) {
        return Err(Fail::user("the depth ablation scores H; include it in --tasks"));
    }
    if a.out.is_some() {
        return Err(Fail::user("--out and --depth-ablation are mutually exclusive"));
    }

    let height_only: BTreeSet<TaskId> = [TaskId::Height].into_iter().collect();
    let mut text = String::from("decoder_layers\tmae\tpsnr_db\tr2\trmse\n");
    for depth in 1..=10usize {
        let mut c = config.clone();
        c.decoder_layers = depth;
        c.validate()?;
        let mut m = ModelParams::init(c, ctx.seed)?;
        train_loop(&mut m, train_samples, val_samples, settings)?;

        let predictions = super::eval::forward_samples(&m, val_samples, &height_only)?;
        let (_, pooled) = super::eval::task_pooled(val_samples, &predictions, TaskId::Height)?;
        text.push_str(&ablation_row(depth, pooled.as_ref()));
        ctx.note(format!("depth {depth} done"));
    }
    write_text_atomic(path, &text)?;
    println!("depth-ablation report written to {}", path.display());
    Ok(())
}

fn ablation_row(depth: usize, r: Option<&MetricReport>) -> String {
    match r {
        Some(r) => format!(
            "{}\t{}\t{}\t{}\t{}\n",
            depth,
            cell(r.mae),
            cell(r.psnr_db),
            cell(r.r2),
            cell(r.rmse)
        ),
        None => format!("{depth}\t-\t-\t-\t-\n"),
    }
}
