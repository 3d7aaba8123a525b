//! Multi-head scaled dot-product attention over token matrices.
//!
//! One forward routine serves both users: the backbone calls it per window
//! with queries and keys/values drawn from the same tokens, and the task
//! adapters call it once per image with prompt-shifted queries against the
//! frozen backbone tokens. The backward pass is only needed by the adapters
//! (the backbone is frozen), so it propagates gradients to the projection
//! weights and to the query-side input but not to the key/value input.

use super::linalg::{matmul, matmul_transa, matmul_transb, softmax_rows, Mat, MatRef};

/// Intermediate state kept for the backward pass.
pub struct MhaCache {
    /// Query-side input (after any prompt shift), n x d.
    pub q_in: Mat,
    /// Key/value-side input, n x d.
    pub kv_in: Mat,
    /// Projected queries, keys, values, each n x d.
    pub qm: Mat,
    pub km: Mat,
    pub vm: Mat,
    /// Per-head attention probabilities, each n x n, rows sum to 1.
    pub probs: Vec<Mat>,
    /// Concatenated per-head outputs before the output projection, n x d.
    pub concat: Mat,
}

/// Gradients of an attention call with respect to its weights and the
/// query-side input.
pub struct MhaGrads {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub q_in: Mat,
}

/// Attention forward. `wq/wk/wv/wo` are d x d; `q_in` and `kv_in` are n x d.
/// Returns the projected output (n x d) and, when `keep_cache` is set, the
/// intermediates needed by [`mha_backward`].
pub fn mha_forward(
    q_in: MatRef,
    kv_in: MatRef,
    wq: MatRef,
    wk: MatRef,
    wv: MatRef,
    wo: MatRef,
    n_heads: usize,
    keep_cache: bool,
) -> (Mat, Option<MhaCache>) {
    let d = q_in.cols;
    assert_eq!(kv_in.cols, d);
    assert_eq!(d % n_heads, 0, "head count must divide the embedding width");
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let qm = matmul(q_in, wq);
    let km = matmul(kv_in, wk);
    let vm = matmul(kv_in, wv);

    let n = q_in.rows;
    let mut concat = Mat::zeros(n, d);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (c0, c1) = (h * dh, (h + 1) * dh);
        let qh = qm.col_block(c0, c1);
        let kh = km.col_block(c0, c1);
        let vh = vm.col_block(c0, c1);
        let mut scores = matmul_transb(qh.as_ref(), kh.as_ref());
        for v in &mut scores.data {
            *v *= scale;
        }
        softmax_rows(&mut scores);
        let oh = matmul(scores.as_ref(), vh.as_ref());
        concat.set_col_block(c0, &oh);
        if keep_cache {
            probs.push(scores);
        }
    }

    let out = matmul(concat.as_ref(), wo);
    let cache = keep_cache.then(|| MhaCache {
        q_in: q_in.to_mat(),
        kv_in: kv_in.to_mat(),
        qm,
        km,
        vm,
        probs,
        concat,
    });
    (out, cache)
}

/// Attention backward from `d_out` (n x d, gradient of the projected output).
/// Only `wq` and `wo` are consulted: the key/value projections receive weight
/// gradients but their input never does, so those weights are not needed here.
pub fn mha_backward(cache: &MhaCache, wq: MatRef, wo: MatRef, n_heads: usize, d_out: MatRef) -> MhaGrads {
    let d = cache.q_in.cols;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let n = cache.q_in.rows;

    // Output projection: out = concat * wo.
    let d_wo = matmul_transa(cache.concat.as_ref(), d_out);
    let d_concat = matmul_transb(d_out, wo);

    let mut d_qm = Mat::zeros(n, d);
    let mut d_km = Mat::zeros(n, d);
    let mut d_vm = Mat::zeros(n, d);
    for h in 0..n_heads {
        let (c0, c1) = (h * dh, (h + 1) * dh);
        let d_oh = d_concat.col_block(c0, c1);
        let qh = cache.qm.col_block(c0, c1);
        let kh = cache.km.col_block(c0, c1);
        let vh = cache.vm.col_block(c0, c1);
        let probs = &cache.probs[h];

        // oh = probs * vh.
        let d_probs = matmul_transb(d_oh.as_ref(), vh.as_ref());
        let d_vh = matmul_transa(probs.as_ref(), d_oh.as_ref());

        // Softmax backward per row: ds = a * (da - sum(da * a)).
        let mut d_scores = Mat::zeros(n, n);
        for r in 0..n {
            let a = probs.row(r);
            let da = d_probs.row(r);
            let inner: f64 = a.iter().zip(da).map(|(&ai, &di)| ai * di).sum();
            let ds = d_scores.row_mut(r);
            for j in 0..n {
                ds[j] = a[j] * (da[j] - inner);
            }
        }
        for v in &mut d_scores.data {
            *v *= scale;
        }

        // scores = (qh * kh^T) * scale.
        let d_qh = matmul(d_scores.as_ref(), kh.as_ref());
        let d_kh = matmul_transa(d_scores.as_ref(), qh.as_ref());

        d_qm.set_col_block(c0, &d_qh);
        d_km.set_col_block(c0, &d_kh);
        d_vm.set_col_block(c0, &d_vh);
    }

    let d_wq = matmul_transa(cache.q_in.as_ref(), d_qm.as_ref());
    let d_wk = matmul_transa(cache.kv_in.as_ref(), d_km.as_ref());
    let d_wv = matmul_transa(cache.kv_in.as_ref(), d_vm.as_ref());
    let d_q_in = matmul_transb(d_qm.as_ref(), wq);

    MhaGrads { wq: d_wq, wk: d_wk, wv: d_wv, wo: d_wo, q_in: d_q_in }
}
