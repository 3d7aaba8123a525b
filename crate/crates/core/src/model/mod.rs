//! Multi-task inversion model.
//!
//! The model maps a four-band reflectance patch to one raster per requested
//! task. A frozen, seed-initialized windowed-attention backbone encodes the
//! patch into tokens once; each task then owns a learned prompt row, a
//! cross-attentive adapter that specializes the shared tokens, and an MLP
//! decoder that regresses the output raster. Only the prompts, adapters, and
//! decoders train, and they live in a single flat `f64` vector addressed
//! through a [`ParamLayout`] of named groups so the optimizer and gradient
//! checks can treat the whole trainable state as one coordinate vector.
//!
//! All model math is f64 with fixed loop orders; rasters enter and leave as
//! f32 grids.

pub mod adapter;
pub mod attention;
pub mod backbone;
pub mod checkpoint;
pub mod decoder;
pub mod linalg;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use crate::dataset::{TaskId, TaskMap};
use crate::error::{CoreError, Result};
use crate::grid::{BandStack, Grid2D};
use crate::rng::{chacha, mix};
use backbone::BackboneParams;
use linalg::{Mat, MatRef};
use rand::Rng;

/// How the per-task decoder produces pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderMode {
    /// Mean-pool the task tokens, then regress the full raster at once.
    Global,
    /// Regress one patch of pixels from each token, then unshuffle.
    Tokenwise,
}

impl DecoderMode {
    pub fn name(self) -> &'static str {
        match self {
            DecoderMode::Global => "global",
            DecoderMode::Tokenwise => "tokenwise",
        }
    }

    pub fn parse(s: &str) -> Result<DecoderMode> {
        match s {
            "global" => Ok(DecoderMode::Global),
            "tokenwise" => Ok(DecoderMode::Tokenwise),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown decoder mode '{other}' (expected 'global' or 'tokenwise')"
            ))),
        }
    }
}

/// Model hyperparameters. `validate` enforces the divisibility constraints
/// the attention windows and patch embedding rely on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Input patch side in pixels (inputs are square).
    pub input_hw: usize,
    /// Input channels; the four reflectance bands.
    pub in_channels: usize,
    /// Patch-embedding side: each p x p pixel block becomes one token.
    pub patch_p: usize,
    /// Token embedding width.
    pub embed_d: usize,
    /// Attention heads (backbone and adapters).
    pub n_heads: usize,
    /// Attention window side, in tokens.
    pub window: usize,
    /// Number of backbone blocks; odd-indexed blocks use shifted windows.
    pub n_backbone_blocks: usize,
    /// Decoder hidden width.
    pub decoder_hidden: usize,
    /// Decoder depth (total linear layers, 1..=10).
    pub decoder_layers: usize,
    pub decoder_mode: DecoderMode,
    /// Seed that fully determines the frozen backbone weights.
    pub backbone_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            input_hw: 32,
            in_channels: 4,
            patch_p: 4,
            embed_d: 64,
            n_heads: 4,
            window: 4,
            n_backbone_blocks: 2,
            decoder_hidden: 1024,
            decoder_layers: 4,
            decoder_mode: DecoderMode::Global,
            backbone_seed: 42,
        }
    }
}

impl ModelConfig {
    /// Small configuration for gradient checks and fast tests.
    pub fn tiny() -> ModelConfig {
        ModelConfig {
            input_hw: 8,
            in_channels: 4,
            patch_p: 2,
            embed_d: 8,
            n_heads: 2,
            window: 2,
            n_backbone_blocks: 2,
            decoder_hidden: 16,
            decoder_layers: 2,
            decoder_mode: DecoderMode::Global,
            backbone_seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CoreError::InvalidArgument(msg));
        if self.in_channels != 4 {
            return fail(format!("in_channels must be 4 (got {})", self.in_channels));
        }
        if self.input_hw == 0 || self.patch_p == 0 {
            return fail("input_hw and patch_p must be positive".into());
        }
        if self.input_hw % self.patch_p != 0 {
            return fail(format!(
                "patch size {} must divide input side {}",
                self.patch_p, self.input_hw
            ));
        }
        let side = self.input_hw / self.patch_p;
        if self.window == 0 || side % self.window != 0 {
            return fail(format!(
                "window {} must divide the token grid side {}",
                self.window, side
            ));
        }
        if self.n_heads == 0 || self.embed_d % self.n_heads != 0 {
            return fail(format!(
                "heads {} must divide embedding width {}",
                self.n_heads, self.embed_d
            ));
        }
        if self.n_backbone_blocks == 0 {
            return fail("need at least one backbone block".into());
        }
        if !(1..=10).contains(&self.decoder_layers) {
            return fail(format!(
                "decoder_layers {} outside supported range 1..=10",
                self.decoder_layers
            ));
        }
        if self.decoder_hidden == 0 {
            return fail("decoder_hidden must be positive".into());
        }
        Ok(())
    }

    /// Token grid side (tokens per row/column).
    pub fn token_side(&self) -> usize {
        self.input_hw / self.patch_p
    }

    /// Number of tokens per image.
    pub fn n_tokens(&self) -> usize {
        self.token_side() * self.token_side()
    }

    pub fn head_dim(&self) -> usize {
        self.embed_d / self.n_heads
    }

    /// Decoder output width: whole raster in global mode, one pixel block
    /// per token in tokenwise mode.
    pub fn decoder_out_dim(&self) -> usize {
        match self.decoder_mode {
            DecoderMode::Global => self.input_hw * self.input_hw,
            DecoderMode::Tokenwise => self.patch_p * self.patch_p,
        }
    }

    /// Serialize as sorted `key=value` lines (used by checkpoints).
    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("backbone_seed".into(), self.backbone_seed.to_string()),
            ("decoder_hidden".into(), self.decoder_hidden.to_string()),
            ("decoder_layers".into(), self.decoder_layers.to_string()),
            ("decoder_mode".into(), self.decoder_mode.name().into()),
            ("embed_d".into(), self.embed_d.to_string()),
            ("in_channels".into(), self.in_channels.to_string()),
            ("input_hw".into(), self.input_hw.to_string()),
            ("n_backbone_blocks".into(), self.n_backbone_blocks.to_string()),
            ("n_heads".into(), self.n_heads.to_string()),
            ("patch_p".into(), self.patch_p.to_string()),
            ("window".into(), self.window.to_string()),
        ]
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<ModelConfig> {
        fn get_usize(kv: &BTreeMap<String, String>, key: &str) -> Result<usize> {
            let raw = kv.get(key).ok_or_else(|| {
                CoreError::InvalidArgument(format!("missing config key '{key}'"))
            })?;
            raw.parse().map_err(|_| {
                CoreError::InvalidArgument(format!("config key '{key}' has bad value '{raw}'"))
            })
        }
        let seed_raw = kv.get("backbone_seed").ok_or_else(|| {
            CoreError::InvalidArgument("missing config key 'backbone_seed'".into())
        })?;
        let backbone_seed = seed_raw.parse().map_err(|_| {
            CoreError::InvalidArgument(format!("bad backbone_seed '{seed_raw}'"))
        })?;
        let mode_raw = kv.get("decoder_mode").ok_or_else(|| {
            CoreError::InvalidArgument("missing config key 'decoder_mode'".into())
        })?;
        let config = ModelConfig {
            input_hw: get_usize(kv, "input_hw")?,
            in_channels: get_usize(kv, "in_channels")?,
            patch_p: get_usize(kv, "patch_p")?,
            embed_d: get_usize(kv, "embed_d")?,
            n_heads: get_usize(kv, "n_heads")?,
            window: get_usize(kv, "window")?,
            n_backbone_blocks: get_usize(kv, "n_backbone_blocks")?,
            decoder_hidden: get_usize(kv, "decoder_hidden")?,
            decoder_layers: get_usize(kv, "decoder_layers")?,
            decoder_mode: DecoderMode::parse(mode_raw)?,
            backbone_seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// One named block of trainable parameters inside the flat vector.
#[derive(Debug, Clone)]
pub struct ParamGroup {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    /// Bias groups initialize to zero instead of a fan-scaled draw.
    pub is_bias: bool,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Fixed addressing scheme for the trainable vector: the prompt table first,
/// then for each task (in task order) its adapter groups, then its decoder
/// layers. Group order also fixes the initialization draw order.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    groups: Vec<ParamGroup>,
    index: BTreeMap<String, usize>,
    total: usize,
}

/// Adapter group suffixes in layout order.
const ADAPTER_SLOTS: [(&str, bool); 8] = [
    ("wq", false),
    ("wk", false),
    ("wv", false),
    ("wo", false),
    ("mlp_w1", false),
    ("mlp_b1", true),
    ("mlp_w2", false),
    ("mlp_b2", true),
];

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> ParamLayout {
        let d = config.embed_d;
        let mut layout = ParamLayout { groups: Vec::new(), index: BTreeMap::new(), total: 0 };
        layout.push("prompt", TaskId::ALL.len(), d, false);
        for t in TaskId::ALL {
            for (slot, is_bias) in ADAPTER_SLOTS {
                let (rows, cols) = match slot {
                    "wq" | "wk" | "wv" | "wo" => (d, d),
                    "mlp_w1" => (d, 4 * d),
                    "mlp_b1" => (1, 4 * d),
                    "mlp_w2" => (4 * d, d),
                    "mlp_b2" => (1, d),
                    _ => unreachable!(),
                };
                layout.push(&format!("adapter.{}.{slot}", t.name()), rows, cols, is_bias);
            }
        }
        for t in TaskId::ALL {
            for i in 0..config.decoder_layers {
                let (rows, cols) = decoder_layer_shape(config, i);
                layout.push(&format!("decoder.{}.l{i}.w", t.name()), rows, cols, false);
                layout.push(&format!("decoder.{}.l{i}.b", t.name()), 1, cols, true);
            }
        }
        layout
    }

    fn push(&mut self, name: &str, rows: usize, cols: usize, is_bias: bool) {
        let group = ParamGroup { name: name.to_string(), rows, cols, offset: self.total, is_bias };
        self.total += group.len();
        self.index.insert(group.name.clone(), self.groups.len());
        self.groups.push(group);
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.index.get(name).map(|&i| &self.groups[i])
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.group(name).map(|g| g.range())
    }

    /// Name of the group containing flat index `i`.
    pub fn group_of(&self, i: usize) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.range().contains(&i))
    }

    pub fn view<'a>(&self, theta: &'a [f64], name: &str) -> Option<MatRef<'a>> {
        self.group(name).map(|g| MatRef::new(g.rows, g.cols, &theta[g.range()]))
    }
}

/// Shape of decoder layer `i` (of `config.decoder_layers` total).
fn decoder_layer_shape(config: &ModelConfig, i: usize) -> (usize, usize) {
    let input = if i == 0 { config.embed_d } else { config.decoder_hidden };
    let output = if i == config.decoder_layers - 1 {
        config.decoder_out_dim()
    } else {
        config.decoder_hidden
    };
    (input, output)
}

/// Borrowed adapter weights for one task.
pub struct AdapterView<'a> {
    pub wq: MatRef<'a>,
    pub wk: MatRef<'a>,
    pub wv: MatRef<'a>,
    pub wo: MatRef<'a>,
    pub mlp_w1: MatRef<'a>,
    pub mlp_b1: &'a [f64],
    pub mlp_w2: MatRef<'a>,
    pub mlp_b2: &'a [f64],
}

/// Borrowed decoder weights for one task, in layer order.
pub struct DecoderView<'a> {
    pub layers: Vec<(MatRef<'a>, &'a [f64])>,
}

/// Full model state: config, frozen backbone, and the flat trainable vector.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub backbone: BackboneParams,
    pub layout: ParamLayout,
    pub theta: Vec<f64>,
}

impl ModelParams {
    /// Build a model with a backbone drawn from `config.backbone_seed` and
    /// trainable parameters drawn from `seed`. Weight matrices use
    /// fan-balanced uniform draws (bound sqrt(6 / (fan_in + fan_out))),
    /// biases start at zero, and the draw order is the layout order, so a
    /// given (config, seed) pair always produces identical parameters.
    pub fn init(config: ModelConfig, seed: u64) -> Result<ModelParams> {
        config.validate()?;
        let backbone = BackboneParams::init(&config);
        let layout = ParamLayout::new(&config);
        let mut theta = vec![0.0; layout.total_len()];
        let mut rng = chacha(mix(seed, 0x7468_6574));
        for g in layout.groups() {
            if g.is_bias {
                continue; // already zero
            }
            let bound = (6.0 / (g.rows + g.cols) as f64).sqrt();
            for v in &mut theta[g.range()] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(ModelParams { config, backbone, layout, theta })
    }

    /// The 8 x d prompt table.
    pub fn prompt(&self) -> MatRef<'_> {
        self.layout.view(&self.theta, "prompt").expect("layout always has a prompt group")
    }

    pub fn adapter(&self, task: TaskId) -> AdapterView<'_> {
        let get = |slot: &str| {
            self.layout
                .view(&self.theta, &format!("adapter.{}.{slot}", task.name()))
                .expect("layout covers every adapter slot")
        };
        AdapterView {
            wq: get("wq"),
            wk: get("wk"),
            wv: get("wv"),
            wo: get("wo"),
            mlp_w1: get("mlp_w1"),
            mlp_b1: get("mlp_b1").data,
            mlp_w2: get("mlp_w2"),
            mlp_b2: get("mlp_b2").data,
        }
    }

    pub fn decoder(&self, task: TaskId) -> DecoderView<'_> {
        let layers = (0..self.config.decoder_layers)
            .map(|i| {
                let w = self
                    .layout
                    .view(&self.theta, &format!("decoder.{}.l{i}.w", task.name()))
                    .expect("layout covers every decoder layer");
                let b = self
                    .layout
                    .view(&self.theta, &format!("decoder.{}.l{i}.b", task.name()))
                    .expect("layout covers every decoder bias");
                (w, b.data)
            })
            .collect();
        DecoderView { layers }
    }
}

/// Copy of the prompt row for `task` (length d).
pub fn prompt_embed(m: &ModelParams, task: TaskId) -> Vec<f64> {
    m.prompt().row(task.ordinal()).to_vec()
}

/// Cross-attention between prompt-shifted queries and the shared tokens:
/// queries come from `f` with `q` added to every row, keys and values from
/// `f` unchanged. No residual connection.
pub fn cross_attend(m: &ModelParams, task: TaskId, f: &Mat, q: &[f64]) -> Mat {
    let av = m.adapter(task);
    adapter::cross_attend_views(&av, f.as_ref(), q, m.config.n_heads, false).0
}

/// Full adapter: cross-attention followed by a residual MLP refinement.
pub fn adapter_forward(m: &ModelParams, task: TaskId, f: &Mat, q: &[f64]) -> Mat {
    let av = m.adapter(task);
    adapter::adapter_forward_views(&av, f.as_ref(), q, m.config.n_heads, false).0
}

/// Decode task tokens to a full raster (all pixels valid).
pub fn decode(m: &ModelParams, task: TaskId, f_t: &Mat) -> Result<Grid2D> {
    let dv = m.decoder(task);
    let out = decoder::decode_views(&dv, &m.config, f_t.as_ref(), false).0;
    let hw = m.config.input_hw;
    Grid2D::new(hw, hw, out.iter().map(|&v| v as f32).collect(), vec![true; hw * hw])
}

/// Per-task forward state retained for the backward pass.
pub struct TaskForward {
    /// Raster prediction, row-major f64, length input_hw^2.
    pub pred: Vec<f64>,
    pub adapter: Option<adapter::AdapterCache>,
    pub decoder: Option<decoder::DecoderCache>,
}

/// One full forward pass: shared backbone tokens plus per-task outputs.
pub struct ForwardPass {
    pub tokens: Mat,
    pub per_task: BTreeMap<TaskId, TaskForward>,
}

/// Run the backbone once and every requested task head, optionally keeping
/// the intermediates the backward pass needs.
pub fn forward_cached(
    m: &ModelParams,
    x: &BandStack,
    tasks: &BTreeSet<TaskId>,
    keep_cache: bool,
) -> Result<ForwardPass> {
    if tasks.is_empty() {
        return Err(CoreError::InvalidArgument(
            "forward pass requires at least one task".into(),
        ));
    }
    let tokens = backbone::backbone_forward(&m.backbone, &m.config, x)?;
    let mut per_task = BTreeMap::new();
    for &task in tasks {
        per_task.insert(task, forward_task(m, task, &tokens, keep_cache));
    }
    Ok(ForwardPass { tokens, per_task })
}

/// Run one task head on precomputed backbone tokens.
pub fn forward_task(m: &ModelParams, task: TaskId, tokens: &Mat, keep_cache: bool) -> TaskForward {
    let q = prompt_embed(m, task);
    let av = m.adapter(task);
    let (f_t, a_cache) =
        adapter::adapter_forward_views(&av, tokens.as_ref(), &q, m.config.n_heads, keep_cache);
    let dv = m.decoder(task);
    let (pred, d_cache) = decoder::decode_views(&dv, &m.config, f_t.as_ref(), keep_cache);
    TaskForward { pred, adapter: a_cache, decoder: d_cache }
}

/// Predict rasters for the requested tasks. Every output pixel is valid;
/// masking is an evaluation concern, not a model one.
pub fn forward_all(m: &ModelParams, x: &BandStack, tasks: &BTreeSet<TaskId>) -> Result<TaskMap> {
    let pass = forward_cached(m, x, tasks, false)?;
    let hw = m.config.input_hw;
    let mut out = TaskMap::new();
    for (task, tf) in pass.per_task {
        let grid = Grid2D::new(
            hw,
            hw,
            tf.pred.iter().map(|&v| v as f32).collect(),
            vec![true; hw * hw],
        )?;
        out.insert(task, grid);
    }
    Ok(out)
}
