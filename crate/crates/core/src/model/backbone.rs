//! Frozen token backbone: patch embedding plus windowed-attention blocks.
//!
//! The backbone is drawn once from a seed and never trains. Blocks follow a
//! pre-norm layout — `x += attn(norm(x))` then `x += ffn(norm(x))` — with
//! attention restricted to square token windows. Odd-indexed blocks shift the
//! window partition by half a window with wrap-around, so neighboring windows
//! exchange information across blocks. There are no positional embeddings;
//! window geometry is the only source of spatial structure.

use sha2::{Digest, Sha256};

use super::attention::mha_forward;
use super::linalg::{add_row_vec, layernorm_rows, matmul, relu_inplace, Mat};
use super::ModelConfig;
use crate::error::{CoreError, Result};
use crate::grid::BandStack;
use crate::rng::chacha;
use rand::Rng;

/// Layer-normalization epsilon used throughout the model.
pub const LN_EPS: f64 = 1e-5;

/// One backbone block.
#[derive(Debug, Clone)]
pub struct BackboneBlock {
    pub ln1_g: Vec<f64>,
    pub ln1_b: Vec<f64>,
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub ln2_g: Vec<f64>,
    pub ln2_b: Vec<f64>,
    pub ff_w1: Mat,
    pub ff_b1: Vec<f64>,
    pub ff_w2: Mat,
    pub ff_b2: Vec<f64>,
}

/// Frozen backbone weights.
#[derive(Debug, Clone)]
pub struct BackboneParams {
    pub patch_w: Mat,
    pub patch_b: Vec<f64>,
    pub blocks: Vec<BackboneBlock>,
}

impl BackboneParams {
    /// Draw the backbone from `config.backbone_seed`. Weight matrices use
    /// fan-balanced uniform draws in a fixed order; biases are zero and
    /// normalization gains are one, so the same config always yields the
    /// same backbone.
    pub fn init(config: &ModelConfig) -> BackboneParams {
        let d = config.embed_d;
        let mut rng = chacha(config.backbone_seed);
        let mut glorot = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Mat::from_vec(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
            )
        };
        let patch_dim = config.patch_p * config.patch_p * config.in_channels;
        let patch_w = glorot(patch_dim, d);
        let blocks = (0..config.n_backbone_blocks)
            .map(|_| BackboneBlock {
                ln1_g: vec![1.0; d],
                ln1_b: vec![0.0; d],
                wq: glorot(d, d),
                wk: glorot(d, d),
                wv: glorot(d, d),
                wo: glorot(d, d),
                ln2_g: vec![1.0; d],
                ln2_b: vec![0.0; d],
                ff_w1: glorot(d, 4 * d),
                ff_b1: vec![0.0; 4 * d],
                ff_w2: glorot(4 * d, d),
                ff_b2: vec![0.0; d],
            })
            .collect();
        BackboneParams { patch_w, patch_b: vec![0.0; d], blocks }
    }

    /// All tensors as `(name, rows, cols, data)` in a fixed order. Vectors
    /// report as single-row matrices. Used by hashing and checkpoints.
    pub fn tensors(&self) -> Vec<(String, usize, usize, &[f64])> {
        let mut out: Vec<(String, usize, usize, &[f64])> = vec![
            (
                "backbone.patch_w".into(),
                self.patch_w.rows,
                self.patch_w.cols,
                &self.patch_w.data,
            ),
            ("backbone.patch_b".into(), 1, self.patch_b.len(), &self.patch_b),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let entries: [(&str, usize, usize, &[f64]); 12] = [
                ("ln1_g", 1, b.ln1_g.len(), &b.ln1_g),
                ("ln1_b", 1, b.ln1_b.len(), &b.ln1_b),
                ("wq", b.wq.rows, b.wq.cols, &b.wq.data),
                ("wk", b.wk.rows, b.wk.cols, &b.wk.data),
                ("wv", b.wv.rows, b.wv.cols, &b.wv.data),
                ("wo", b.wo.rows, b.wo.cols, &b.wo.data),
                ("ln2_g", 1, b.ln2_g.len(), &b.ln2_g),
                ("ln2_b", 1, b.ln2_b.len(), &b.ln2_b),
                ("ff_w1", b.ff_w1.rows, b.ff_w1.cols, &b.ff_w1.data),
                ("ff_b1", 1, b.ff_b1.len(), &b.ff_b1),
                ("ff_w2", b.ff_w2.rows, b.ff_w2.cols, &b.ff_w2.data),
                ("ff_b2", 1, b.ff_b2.len(), &b.ff_b2),
            ];
            for (slot, rows, cols, data) in entries {
                out.push((format!("backbone.b{i}.{slot}"), rows, cols, data));
            }
        }
        out
    }

    /// Rebuild from tensors listed in [`BackboneParams::tensors`] order.
    pub fn from_tensor_list(config: &ModelConfig, values: &[Vec<f64>]) -> Result<BackboneParams> {
        let reference = BackboneParams::init(config);
        let specs = reference.tensors();
        if specs.len() != values.len() {
            return Err(CoreError::InvalidArgument(format!(
                "backbone tensor count mismatch: expected {}, got {}",
                specs.len(),
                values.len()
            )));
        }
        for ((name, rows, cols, _), v) in specs.iter().zip(values) {
            if v.len() != rows * cols {
                return Err(CoreError::InvalidArgument(format!(
                    "backbone tensor '{name}' has {} values, expected {}",
                    v.len(),
                    rows * cols
                )));
            }
        }
        let mut it = values.iter().cloned();
        let mut next = || it.next().expect("length checked above");
        let d = config.embed_d;
        let patch_dim = config.patch_p * config.patch_p * config.in_channels;
        let patch_w = Mat::from_vec(patch_dim, d, next());
        let patch_b = next();
        let blocks = (0..config.n_backbone_blocks)
            .map(|_| BackboneBlock {
                ln1_g: next(),
                ln1_b: next(),
                wq: Mat::from_vec(d, d, next()),
                wk: Mat::from_vec(d, d, next()),
                wv: Mat::from_vec(d, d, next()),
                wo: Mat::from_vec(d, d, next()),
                ln2_g: next(),
                ln2_b: next(),
                ff_w1: Mat::from_vec(d, 4 * d, next()),
                ff_b1: next(),
                ff_w2: Mat::from_vec(4 * d, d, next()),
                ff_b2: next(),
            })
            .collect();
        Ok(BackboneParams { patch_w, patch_b, blocks })
    }
}

/// SHA-256 over every backbone tensor (name, shape, and little-endian f64
/// payload), as lowercase hex. Training must leave this unchanged.
pub fn backbone_hash(b: &BackboneParams) -> String {
    let mut hasher = Sha256::new();
    for (name, rows, cols, data) in b.tensors() {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        hasher.update((rows as u64).to_le_bytes());
        hasher.update((cols as u64).to_le_bytes());
        for v in data {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Flatten a band stack into per-token feature rows: tokens scan the patch
/// grid row-major, and within a token the features scan pixels row-major
/// with the four bands innermost. Invalid pixels contribute zeros (band
/// grids store zeros at invalid pixels by construction).
pub fn patchify(config: &ModelConfig, x: &BandStack) -> Result<Mat> {
    let (h, w) = x.shape();
    if (h, w) != (config.input_hw, config.input_hw) {
        return Err(CoreError::ShapeMismatch(format!(
            "model expects {0}x{0} inputs, got {h}x{w}",
            config.input_hw
        )));
    }
    let p = config.patch_p;
    let side = config.token_side();
    let bands = x.bands();
    let mut out = Mat::zeros(side * side, p * p * config.in_channels);
    for tr in 0..side {
        for tc in 0..side {
            let row = out.row_mut(tr * side + tc);
            for pr in 0..p {
                for pc in 0..p {
                    let (r, c) = (tr * p + pr, tc * p + pc);
                    let base = (pr * p + pc) * 4;
                    for (bi, band) in bands.iter().enumerate() {
                        row[base + bi] = band.values()[r * w + c] as f64;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Token indices gathered by each attention window, optionally with a cyclic
/// half-window shift. Every token appears in exactly one window.
fn window_index_sets(side: usize, window: usize, shift: usize) -> Vec<Vec<usize>> {
    let per_axis = side / window;
    let mut sets = Vec::with_capacity(per_axis * per_axis);
    for wr in 0..per_axis {
        for wc in 0..per_axis {
            let mut idx = Vec::with_capacity(window * window);
            for i in 0..window {
                for j in 0..window {
                    let r = (wr * window + i + shift) % side;
                    let c = (wc * window + j + shift) % side;
                    idx.push(r * side + c);
                }
            }
            sets.push(idx);
        }
    }
    sets
}

/// Encode a band stack into `n_tokens x embed_d` tokens.
pub fn backbone_forward(b: &BackboneParams, config: &ModelConfig, x: &BandStack) -> Result<Mat> {
    let features = patchify(config, x)?;
    let mut tokens = matmul(features.as_ref(), b.patch_w.as_ref());
    add_row_vec(&mut tokens, &b.patch_b);

    let side = config.token_side();
    for (bi, block) in b.blocks.iter().enumerate() {
        let shift = if bi % 2 == 1 { config.window / 2 } else { 0 };
        let windows = window_index_sets(side, config.window, shift);

        // x += windowed_attention(norm(x))
        let normed = layernorm_rows(tokens.as_ref(), &block.ln1_g, &block.ln1_b, LN_EPS);
        let mut attn = Mat::zeros(tokens.rows, tokens.cols);
        for idx in &windows {
            let mut xw = Mat::zeros(idx.len(), tokens.cols);
            for (k, &i) in idx.iter().enumerate() {
                xw.row_mut(k).copy_from_slice(normed.row(i));
            }
            let (yw, _) = mha_forward(
                xw.as_ref(),
                xw.as_ref(),
                block.wq.as_ref(),
                block.wk.as_ref(),
                block.wv.as_ref(),
                block.wo.as_ref(),
                config.n_heads,
                false,
            );
            for (k, &i) in idx.iter().enumerate() {
                attn.row_mut(i).copy_from_slice(yw.row(k));
            }
        }
        tokens.add_assign(&attn);

        // x += ffn(norm(x))
        let normed = layernorm_rows(tokens.as_ref(), &block.ln2_g, &block.ln2_b, LN_EPS);
        let mut hidden = matmul(normed.as_ref(), block.ff_w1.as_ref());
        add_row_vec(&mut hidden, &block.ff_b1);
        relu_inplace(&mut hidden);
        let mut ff = matmul(hidden.as_ref(), block.ff_w2.as_ref());
        add_row_vec(&mut ff, &block.ff_b2);
        tokens.add_assign(&ff);
    }
    Ok(tokens)
}
