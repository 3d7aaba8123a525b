//! Per-task MLP decoders mapping adapted tokens to a raster.
//!
//! Global mode mean-pools the tokens and regresses the whole raster from the
//! pooled vector in one shot. Tokenwise mode regresses a p x p block of
//! pixels from each token independently and reassembles the raster by
//! placing each block at its token's position (a pixel unshuffle). Hidden
//! layers are rectified; the final layer is linear.

use super::linalg::{
    add_row_vec, matmul, matmul_transa, matmul_transb, relu_backward_inplace, relu_inplace, Mat,
    MatRef,
};
use super::{DecoderMode, DecoderView, ModelConfig};

/// Layer inputs kept for the backward pass: `acts[i]` is the input of layer
/// `i` (so `acts[0]` is pooled tokens or the tokens themselves).
pub struct DecoderCache {
    pub acts: Vec<Mat>,
}

/// Per-layer weight and bias gradients, in layer order.
pub struct DecoderGrads {
    pub layers: Vec<(Mat, Vec<f64>)>,
}

/// Decode tokens to a row-major raster of length `input_hw^2`.
pub fn decode_views(
    dv: &DecoderView,
    config: &ModelConfig,
    f_t: MatRef,
    keep_cache: bool,
) -> (Vec<f64>, Option<DecoderCache>) {
    let n_layers = dv.layers.len();
    let mut a = match config.decoder_mode {
        DecoderMode::Global => {
            // Mean-pool over tokens.
            let mut pooled = Mat::zeros(1, f_t.cols);
            for r in 0..f_t.rows {
                for (p, &v) in pooled.row_mut(0).iter_mut().zip(f_t.row(r)) {
                    *p += v;
                }
            }
            let inv = 1.0 / f_t.rows as f64;
            for v in &mut pooled.data {
                *v *= inv;
            }
            pooled
        }
        DecoderMode::Tokenwise => f_t.to_mat(),
    };

    let mut acts = Vec::with_capacity(n_layers);
    for (i, (w, b)) in dv.layers.iter().enumerate() {
        if keep_cache {
            acts.push(a.clone());
        }
        let mut z = matmul(a.as_ref(), *w);
        add_row_vec(&mut z, b);
        if i + 1 < n_layers {
            relu_inplace(&mut z);
        }
        a = z;
    }

    let out = match config.decoder_mode {
        DecoderMode::Global => a.data.clone(),
        DecoderMode::Tokenwise => unshuffle(config, &a),
    };
    (out, keep_cache.then(|| DecoderCache { acts }))
}

/// Reassemble per-token pixel blocks into a raster: token (tr, tc) fills the
/// p x p block at (tr*p, tc*p), its outputs scanning the block row-major.
fn unshuffle(config: &ModelConfig, token_out: &Mat) -> Vec<f64> {
    let p = config.patch_p;
    let side = config.token_side();
    let hw = config.input_hw;
    let mut out = vec![0.0; hw * hw];
    for r in 0..hw {
        for c in 0..hw {
            let token = (r / p) * side + (c / p);
            let within = (r % p) * p + (c % p);
            out[r * hw + c] = token_out.get(token, within);
        }
    }
    out
}

/// Scatter a raster gradient back onto per-token pixel blocks (inverse of
/// [`unshuffle`]).
fn shuffle(config: &ModelConfig, d_out: &[f64]) -> Mat {
    let p = config.patch_p;
    let side = config.token_side();
    let hw = config.input_hw;
    let mut m = Mat::zeros(side * side, p * p);
    for r in 0..hw {
        for c in 0..hw {
            let token = (r / p) * side + (c / p);
            let within = (r % p) * p + (c % p);
            m.set(token, within, d_out[r * hw + c]);
        }
    }
    m
}

/// Backward from a raster gradient. Returns per-layer gradients and the
/// gradient with respect to the token input (n_tokens x d).
pub fn decoder_backward(
    dv: &DecoderView,
    config: &ModelConfig,
    cache: &DecoderCache,
    d_out: &[f64],
) -> (DecoderGrads, Mat) {
    let n_layers = dv.layers.len();
    assert_eq!(cache.acts.len(), n_layers, "cache must hold every layer input");
    let mut delta = match config.decoder_mode {
        DecoderMode::Global => Mat::from_vec(1, d_out.len(), d_out.to_vec()),
        DecoderMode::Tokenwise => shuffle(config, d_out),
    };

    let mut layers: Vec<(Mat, Vec<f64>)> = Vec::with_capacity(n_layers);
    for i in (0..n_layers).rev() {
        let (w, _) = dv.layers[i];
        let a = &cache.acts[i];
        let d_w = matmul_transa(a.as_ref(), delta.as_ref());
        let mut d_b = vec![0.0; delta.cols];
        for r in 0..delta.rows {
            for (s, &v) in d_b.iter_mut().zip(delta.row(r)) {
                *s += v;
            }
        }
        layers.push((d_w, d_b));
        let mut d_a = matmul_transb(delta.as_ref(), w);
        if i > 0 {
            // Hidden activations are post-rectifier layer inputs.
            relu_backward_inplace(&mut d_a, a);
        }
        delta = d_a;
    }
    layers.reverse();

    let d_f_t = match config.decoder_mode {
        DecoderMode::Global => {
            // The pool averaged n_tokens rows, so each token receives an
            // equal share of the pooled gradient.
            let n = config.n_tokens();
            let inv = 1.0 / n as f64;
            let mut m = Mat::zeros(n, delta.cols);
            for r in 0..n {
                for (dst, &v) in m.row_mut(r).iter_mut().zip(delta.row(0)) {
                    *dst = v * inv;
                }
            }
            m
        }
        DecoderMode::Tokenwise => delta,
    };
    (DecoderGrads { layers }, d_f_t)
}
