//! `satcalc gradcheck`: analytic gradients vs central finite differences
//! at every trainable coordinate, on synthetic probe samples.

use satcalc_core::dataset::{build_targets, synth_scene, Sample, TargetParams};
use satcalc_core::model::{ModelConfig, ModelParams};
use satcalc_core::rng::mix;
use satcalc_core::train::{grad_check, LossWeights};

use super::ModelArgs;
use crate::util::{parse_tasks, CmdResult, Ctx, Fail};

#[derive(clap::Args, Debug)]
pub struct GradcheckArgs {
    /// Use the compact preset exactly, ignoring the model flags.
    #[arg(long)]
    tiny: bool,
    /// Tasks to include in the loss.
    #[arg(long, default_value = "ndvi,h")]
    tasks: String,
    /// Synthetic probe samples to average the loss over.
    #[arg(long, default_value_t = 2)]
    samples: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Exit 1 if the max relative error exceeds this.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    model: ModelArgs,
}

pub fn run(ctx: &Ctx, a: &GradcheckArgs) -> CmdResult {
    // Finite differences cost two forwards per coordinate, so this command
    // starts from the compact preset; the model flags can still grow it.
    let config = if a.tiny {
        ModelConfig::tiny()
    } else {
        a.model.resolve(ModelConfig::tiny())?
    };
    let tasks = parse_tasks(&a.tasks)?;
    if a.samples == 0 {
        return Err(Fail::user("--samples must be at least 1"));
    }

    let params = TargetParams::default();
    let hw = config.input_hw;
    let mut samples = Vec::with_capacity(a.samples);
    for i in 0..a.samples {
        let (x, h) = synth_scene(mix(ctx.seed, i as u64), hw, hw)?;
        let y = build_targets(&x, &h, &params.index, &params.coeffs, &params.carbon)?;
        samples.push(Sample::new(format!("probe{i:02}"), x, y)?);
    }

    let mut m = ModelParams::init(config, ctx.seed)?;
    ctx.note(format!("{} trainable coordinates", m.theta.len()));
    let report = grad_check(&mut m, &samples, &tasks, &LossWeights::default(), a.step)?;
    println!(
        "checked {} coordinates; max relative error {:.3e} ({}[{}])",
        report.n_checked, report.max_rel_err, report.worst_group, report.worst_index
    );
    if let Some(tol) = a.tol {
        if report.max_rel_err > tol {
            return Err(Fail::user(format!(
                "max relative error {:.3e} exceeds --tol {:e}",
                report.max_rel_err, tol
            )));
        }
    }
    Ok(())
}
