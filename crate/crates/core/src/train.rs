//! Training: weighted masked-L1 loss, manual reverse-mode gradients, Adam,
//! learning-rate scheduling, early stopping, and a finite-difference
//! gradient check.
//!
//! Only the prompts, adapters, and decoders receive gradients; the backbone
//! is frozen and only runs forward. The whole loop is single-threaded and
//! seeded, so a given (model seed, data, config) triple reproduces the same
//! parameter trajectory bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::{augment, AugmentSpec, Sample, TargetParams, TaskId};
use crate::error::{CoreError, Result};
use crate::model::adapter::adapter_backward;
use crate::model::decoder::decoder_backward;
use crate::model::linalg::Mat;
use crate::model::{forward_cached, forward_task, ForwardPass, ModelParams};
use crate::rng::{chacha, mix3};
use rand::seq::SliceRandom;

/// Everything a training run needs besides the model and the data.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    /// Tasks to train (and to include in the loss). Must be non-empty.
    pub tasks: BTreeSet<TaskId>,
    pub weights: LossWeights,
    /// Initial learning rate; the plateau scheduler may reduce it.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: u32,
    pub early_stop_patience: u32,
    /// Per-presentation augmentation; disabled by default.
    pub augment: AugmentSpec,
    /// Parameters used to rebuild targets for augmented presentations.
    pub target_params: TargetParams,
    /// Seed for the shuffle and augmentation streams.
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> TrainSettings {
        TrainSettings {
            tasks: TaskId::ALL.into_iter().collect(),
            weights: LossWeights::default(),
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 8,
            max_epochs: 100,
            plateau_factor: 0.5,
            plateau_patience: 1,
            early_stop_patience: 3,
            augment: AugmentSpec::default(),
            target_params: TargetParams::default(),
            seed: 0,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CoreError::InvalidArgument(msg));
        if self.tasks.is_empty() {
            return fail("training requires at least one task".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return fail(format!("{name} {beta} outside [0, 1)"));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return fail(format!("eps {} must be positive", self.eps));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return fail("batch_size and max_epochs must be positive".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail(format!(
                "plateau factor {} outside (0, 1)",
                self.plateau_factor
            ));
        }
        self.augment.validate()
    }
}

/// Per-task loss weights. The defaults balance the eight tasks by their
/// observed error scales, so no single task dominates the summed objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    weights: [f64; 8],
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights {
            weights: [
                0.0386, // NDVI
                0.0440, // GNDVI
                0.0501, // SAVI
                0.1700, // EVI
                0.0418, // NDWI
                0.2052, // H
                0.2121, // AGB
                0.2381, // CS
            ],
        }
    }
}

impl LossWeights {
    pub fn uniform() -> LossWeights {
        LossWeights { weights: [1.0; 8] }
    }

    pub fn new(weights: [f64; 8]) -> Result<LossWeights> {
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(CoreError::InvalidArgument(
                "loss weights must be finite and positive".into(),
            ));
        }
        Ok(LossWeights { weights })
    }

    pub fn get(&self, t: TaskId) -> f64 {
        self.weights[t.ordinal()]
    }
}

/// Mean absolute error over masked pixels. Errors if the mask selects none.
pub fn masked_l1(pred: &[f64], target: &[f32], mask: &[bool]) -> Result<f64> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "loss inputs disagree: pred {}, target {}, mask {}",
            pred.len(),
            target.len(),
            mask.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((&p, &t), &m) in pred.iter().zip(target).zip(mask) {
        if m {
            sum += (p - t as f64).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(CoreError::EmptySupport("loss mask selects no pixels".into()));
    }
    Ok(sum / n as f64)
}

/// Per-task and total weighted loss of one forward pass against a sample.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_task: BTreeMap<TaskId, f64>,
}

/// Weighted sum over tasks of the per-task masked L1 means.
pub fn weighted_loss(
    pass: &ForwardPass,
    sample: &Sample,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let mask = sample.loss_mask();
    let mut total = 0.0;
    let mut per_task = BTreeMap::new();
    for (&task, tf) in &pass.per_task {
        let l1 = masked_l1(&tf.pred, sample.target(task).values(), mask)?;
        per_task.insert(task, l1);
        total += weights.get(task) * l1;
    }
    Ok(LossBreakdown { total, per_task })
}

/// Accumulate `data` into the gradient slice of the named layout group.
fn acc_group(grad: &mut [f64], m: &ModelParams, name: &str, data: &[f64]) {
    let range = m
        .layout
        .range(name)
        .unwrap_or_else(|| panic!("gradient for unknown group '{name}'"));
    debug_assert_eq!(range.len(), data.len());
    for (g, &d) in grad[range].iter_mut().zip(data) {
        *g += d;
    }
}

/// Accumulate the gradient of one sample's weighted loss (divided by
/// `batch_size`, so summing over a batch yields the batch-mean gradient)
/// into `grad`. The forward pass must have been run with caches kept.
pub fn backward_sample(
    m: &ModelParams,
    pass: &ForwardPass,
    sample: &Sample,
    weights: &LossWeights,
    batch_size: usize,
    grad: &mut [f64],
) -> Result<()> {
    assert_eq!(grad.len(), m.theta.len());
    let mask = sample.loss_mask();
    let n_px = m.config.input_hw * m.config.input_hw;
    for (&task, tf) in &pass.per_task {
        let a_cache = tf.adapter.as_ref().ok_or_else(|| {
            CoreError::InvalidArgument("backward requires a cached forward pass".into())
        })?;
        let d_cache = tf.decoder.as_ref().ok_or_else(|| {
            CoreError::InvalidArgument("backward requires a cached forward pass".into())
        })?;

        let target = sample.target(task).values();
        let n_masked = mask.iter().filter(|&&b| b).count();
        if n_masked == 0 {
            return Err(CoreError::EmptySupport("loss mask selects no pixels".into()));
        }
        // d loss / d pred for weighted masked L1, with the subgradient at
        // zero error taken as 0.
        let coeff = weights.get(task) / (n_masked as f64 * batch_size as f64);
        let mut d_pred = vec![0.0; n_px];
        for i in 0..n_px {
            if mask[i] {
                let e = tf.pred[i] - target[i] as f64;
                d_pred[i] = if e > 0.0 {
                    coeff
                } else if e < 0.0 {
                    -coeff
                } else {
                    0.0
                };
            }
        }

        let dv = m.decoder(task);
        let (dec_grads, d_f_t) = decoder_backward(&dv, &m.config, d_cache, &d_pred);
        for (i, (dw, db)) in dec_grads.layers.iter().enumerate() {
            acc_group(grad, m, &format!("decoder.{}.l{i}.w", task.name()), &dw.data);
            acc_group(grad, m, &format!("decoder.{}.l{i}.b", task.name()), db);
        }

        let av = m.adapter(task);
        let ad = adapter_backward(&av, a_cache, m.config.n_heads, d_f_t.as_ref());
        let t = task.name();
        acc_group(grad, m, &format!("adapter.{t}.wq"), &ad.wq.data);
        acc_group(grad, m, &format!("adapter.{t}.wk"), &ad.wk.data);
        acc_group(grad, m, &format!("adapter.{t}.wv"), &ad.wv.data);
        acc_group(grad, m, &format!("adapter.{t}.wo"), &ad.wo.data);
        acc_group(grad, m, &format!("adapter.{t}.mlp_w1"), &ad.mlp_w1.data);
        acc_group(grad, m, &format!("adapter.{t}.mlp_b1"), &ad.mlp_b1);
        acc_group(grad, m, &format!("adapter.{t}.mlp_w2"), &ad.mlp_w2.data);
        acc_group(grad, m, &format!("adapter.{t}.mlp_b2"), &ad.mlp_b2);

        // Prompt row for this task.
        let prompt_range = m.layout.range("prompt").expect("prompt group exists");
        let d = m.config.embed_d;
        let row = prompt_range.start + task.ordinal() * d;
        for (g, &v) in grad[row..row + d].iter_mut().zip(&ad.prompt) {
            *g += v;
        }
    }
    Ok(())
}

/// Adam optimizer state (first and second moment estimates).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> AdamState {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update: `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(
    state: &mut AdamState,
    theta: &mut [f64],
    grad: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    assert_eq!(theta.len(), grad.len());
    assert_eq!(theta.len(), state.m.len());
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Learning-rate scheduler: halve after the validation loss fails to set a
/// new strict best for more than `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct PlateauState {
    pub lr: f64,
    pub best: f64,
    pub bad_epochs: u32,
}

impl PlateauState {
    pub fn new(lr: f64) -> PlateauState {
        PlateauState { lr, best: f64::INFINITY, bad_epochs: 0 }
    }
}

/// Feed one validation loss; returns true when the rate was just reduced.
pub fn plateau_step(state: &mut PlateauState, val_loss: f64, factor: f64, patience: u32) -> bool {
    if val_loss < state.best {
        state.best = val_loss;
        state.bad_epochs = 0;
        return false;
    }
    state.bad_epochs += 1;
    if state.bad_epochs > patience {
        state.lr *= factor;
        state.bad_epochs = 0;
        return true;
    }
    false
}

/// Early stopping on the validation loss, same strict-improvement rule.
#[derive(Debug, Clone)]
pub struct EarlyStopState {
    pub best: f64,
    pub bad_epochs: u32,
}

impl EarlyStopState {
    pub fn new() -> EarlyStopState {
        EarlyStopState { best: f64::INFINITY, bad_epochs: 0 }
    }
}

impl Default for EarlyStopState {
    fn default() -> Self {
        EarlyStopState::new()
    }
}

/// Feed one validation loss; returns true when training should stop (more
/// than `patience` consecutive epochs without a new best).
pub fn early_stop_step(state: &mut EarlyStopState, val_loss: f64, patience: u32) -> bool {
    if val_loss < state.best {
        state.best = val_loss;
        state.bad_epochs = 0;
        return false;
    }
    state.bad_epochs += 1;
    state.bad_epochs > patience
}

/// One epoch's summary row.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch's sample presentations.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate in effect during this epoch's updates.
    pub lr: f64,
    /// Unweighted per-task training L1 means for the trained tasks.
    pub per_task: BTreeMap<TaskId, f64>,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub final_lr: f64,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.train_loss)
    }
}

/// Train the model's prompts, adapters, and decoders in place.
///
/// Each epoch shuffles the training set with an epoch-keyed stream, walks it
/// in batches (batch-mean gradient, one Adam step per batch), evaluates the
/// validation loss, and feeds the schedulers. When augmentation is enabled,
/// each presentation perturbs the sample with a draw keyed by (seed, epoch,
/// sample index); the stored sample is never modified.
pub fn train_loop(
    m: &mut ModelParams,
    train: &[Sample],
    val: &[Sample],
    settings: &TrainSettings,
) -> Result<TrainReport> {
    settings.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(CoreError::InvalidArgument(
            "training requires non-empty train and validation sets".into(),
        ));
    }
    let hw = m.config.input_hw;
    for s in train.iter().chain(val) {
        if s.shape() != (hw, hw) {
            return Err(CoreError::ShapeMismatch(format!(
                "sample '{}' is {}x{}, model expects {hw}x{hw}",
                s.id(),
                s.shape().0,
                s.shape().1
            )));
        }
    }

    let tasks = &settings.tasks;
    let mut adam = AdamState::new(m.theta.len());
    let mut plateau = PlateauState::new(settings.lr);
    let mut early = EarlyStopState::new();
    let mut grad = vec![0.0; m.theta.len()];
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..settings.max_epochs {
        let lr_in_effect = plateau.lr;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut chacha(mix3(settings.seed, 0x6570, epoch as u64)));

        let mut loss_sum = 0.0;
        let mut task_sums: BTreeMap<TaskId, f64> = BTreeMap::new();
        for batch in order.chunks(settings.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                let presented;
                let sample = if settings.augment.enabled {
                    presented = augment(
                        &train[idx],
                        &settings.augment,
                        mix3(settings.seed, epoch as u64, idx as u64),
                        &settings.target_params,
                    )?;
                    &presented
                } else {
                    &train[idx]
                };
                let pass = forward_cached(m, sample.x(), tasks, true)?;
                let breakdown = weighted_loss(&pass, sample, &settings.weights)?;
                loss_sum += breakdown.total;
                for (&t, &l) in &breakdown.per_task {
                    *task_sums.entry(t).or_insert(0.0) += l;
                }
                backward_sample(m, &pass, sample, &settings.weights, batch.len(), &mut grad)?;
            }
            adam_step(
                &mut adam,
                &mut m.theta,
                &grad,
                lr_in_effect,
                settings.beta1,
                settings.beta2,
                settings.eps,
            );
        }

        let mut val_sum = 0.0;
        for s in val {
            let pass = forward_cached(m, s.x(), tasks, false)?;
            val_sum += weighted_loss(&pass, s, &settings.weights)?.total;
        }
        let val_loss = val_sum / val.len() as f64;
        let n = train.len() as f64;
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            val_loss,
            lr: lr_in_effect,
            per_task: task_sums.into_iter().map(|(t, s)| (t, s / n)).collect(),
        });

        plateau_step(&mut plateau, val_loss, settings.plateau_factor, settings.plateau_patience);
        if early_stop_step(&mut early, val_loss, settings.early_stop_patience) {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainReport { history, stopped_early, final_lr: plateau.lr })
}

/// Batch-mean loss over `samples` given precomputed backbone tokens, used by
/// the finite-difference side of the gradient check (the tokens do not
/// depend on the trainable vector, so they are computed once and reused).
pub fn loss_from_tokens(
    m: &ModelParams,
    tokens: &[Mat],
    samples: &[Sample],
    tasks: &BTreeSet<TaskId>,
    weights: &LossWeights,
) -> Result<f64> {
    assert_eq!(tokens.len(), samples.len());
    let mut total = 0.0;
    for (toks, sample) in tokens.iter().zip(samples) {
        for &task in tasks {
            let tf = forward_task(m, task, toks, false);
            let l1 = masked_l1(&tf.pred, sample.target(task).values(), sample.loss_mask())?;
            total += weights.get(task) * l1;
        }
    }
    Ok(total / samples.len() as f64)
}

/// Result of a full-coordinate gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub n_checked: usize,
    pub max_rel_err: f64,
    /// Layout group and flat index where the worst disagreement occurred.
    pub worst_group: String,
    pub worst_index: usize,
}

/// Compare the analytic gradient against central finite differences at every
/// trainable coordinate. Relative error uses `|a - fd| / max(|a|, |fd|,
/// 1e-6)`, so coordinates with zero gradient on both sides agree exactly.
pub fn grad_check(
    m: &mut ModelParams,
    samples: &[Sample],
    tasks: &BTreeSet<TaskId>,
    weights: &LossWeights,
    fd_step: f64,
) -> Result<GradCheckReport> {
    if samples.is_empty() || tasks.is_empty() {
        return Err(CoreError::InvalidArgument(
            "gradient check needs at least one sample and one task".into(),
        ));
    }

    // Analytic gradient of the batch-mean loss.
    let mut grad = vec![0.0; m.theta.len()];
    let mut tokens = Vec::with_capacity(samples.len());
    for s in samples {
        let pass = forward_cached(m, s.x(), tasks, true)?;
        backward_sample(m, &pass, s, weights, samples.len(), &mut grad)?;
        tokens.push(pass.tokens);
    }

    let mut report = GradCheckReport {
        n_checked: m.theta.len(),
        max_rel_err: 0.0,
        worst_group: String::new(),
        worst_index: 0,
    };
    for i in 0..m.theta.len() {
        let orig = m.theta[i];
        m.theta[i] = orig + fd_step;
        let up = loss_from_tokens(m, &tokens, samples, tasks, weights)?;
        m.theta[i] = orig - fd_step;
        let down = loss_from_tokens(m, &tokens, samples, tasks, weights)?;
        m.theta[i] = orig;
        let fd = (up - down) / (2.0 * fd_step);
        let a = grad[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
            report.worst_group = m
                .layout
                .group_of(i)
                .map(|g| g.name.clone())
                .unwrap_or_else(|| "?".into());
        }
    }
    Ok(report)
}
