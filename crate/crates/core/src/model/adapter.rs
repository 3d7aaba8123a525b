//! Per-task adapters: prompt-conditioned cross-attention over the shared
//! backbone tokens, followed by a residual MLP refinement.
//!
//! The task prompt is added to every token to form the queries; keys and
//! values come from the unmodified tokens. The attention output is taken as
//! is (no residual around the attention), then refined as `y + mlp(y)`. The
//! backward pass produces gradients for all adapter weights and for the
//! prompt row; the token input is frozen upstream, so no gradient flows to
//! it.

use super::attention::{mha_backward, mha_forward, MhaCache};
use super::linalg::{
    acc_col_sums, add_row_vec, matmul, matmul_transa, matmul_transb, relu_backward_inplace,
    relu_inplace, Mat, MatRef,
};
use super::AdapterView;

/// Forward intermediates for one adapter application.
pub struct AdapterCache {
    pub mha: MhaCache,
    /// Cross-attention output `y` (the MLP input and residual), n x d.
    pub attn_out: Mat,
    /// Post-rectifier MLP hidden state, n x 4d.
    pub hidden: Mat,
    /// Adapter output, n x d.
    pub out: Mat,
}

/// Gradients of one adapter application.
pub struct AdapterGrads {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub mlp_w1: Mat,
    pub mlp_b1: Vec<f64>,
    pub mlp_w2: Mat,
    pub mlp_b2: Vec<f64>,
    /// Gradient of the prompt row (length d).
    pub prompt: Vec<f64>,
}

/// Cross-attention with prompt-shifted queries. Returns the attention
/// output; no residual is added.
pub fn cross_attend_views(
    av: &AdapterView,
    f: MatRef,
    q: &[f64],
    n_heads: usize,
    keep_cache: bool,
) -> (Mat, Option<MhaCache>) {
    assert_eq!(q.len(), f.cols, "prompt width must match the token width");
    let mut shifted = f.to_mat();
    add_row_vec(&mut shifted, q);
    mha_forward(shifted.as_ref(), f, av.wq, av.wk, av.wv, av.wo, n_heads, keep_cache)
}

/// Full adapter: `y = cross_attend(f, q)`, output `y + mlp(y)`.
pub fn adapter_forward_views(
    av: &AdapterView,
    f: MatRef,
    q: &[f64],
    n_heads: usize,
    keep_cache: bool,
) -> (Mat, Option<AdapterCache>) {
    let (attn_out, mha) = cross_attend_views(av, f, q, n_heads, keep_cache);
    let mut hidden = matmul(attn_out.as_ref(), av.mlp_w1);
    add_row_vec(&mut hidden, av.mlp_b1);
    relu_inplace(&mut hidden);
    let mut out = matmul(hidden.as_ref(), av.mlp_w2);
    add_row_vec(&mut out, av.mlp_b2);
    out.add_assign(&attn_out);
    let cache = keep_cache.then(|| AdapterCache {
        mha: mha.expect("cache requested from attention"),
        attn_out: attn_out.clone(),
        hidden,
        out: out.clone(),
    });
    (out, cache)
}

/// Backward through the adapter from `d_out` (n x d).
pub fn adapter_backward(
    av: &AdapterView,
    cache: &AdapterCache,
    n_heads: usize,
    d_out: MatRef,
) -> AdapterGrads {
    // out = y + hidden * w2 + b2, hidden = relu(y * w1 + b1).
    let d_w2 = matmul_transa(cache.hidden.as_ref(), d_out);
    let mut d_b2 = vec![0.0; av.mlp_b2.len()];
    acc_col_sums(&mut d_b2, d_out);

    let mut d_hidden = matmul_transb(d_out, av.mlp_w2);
    relu_backward_inplace(&mut d_hidden, &cache.hidden);

    let d_w1 = matmul_transa(cache.attn_out.as_ref(), d_hidden.as_ref());
    let mut d_b1 = vec![0.0; av.mlp_b1.len()];
    acc_col_sums(&mut d_b1, d_hidden.as_ref());

    // d_y collects the residual branch and the MLP branch.
    let mut d_y = matmul_transb(d_hidden.as_ref(), av.mlp_w1);
    d_y.add_assign(&d_out.to_mat());

    let mha_grads = mha_backward(&cache.mha, av.wq, av.wo, n_heads, d_y.as_ref());

    // Queries were f + q broadcast per row, so the prompt gradient is the
    // column sum of the query-input gradient.
    let mut prompt = vec![0.0; q_width(av)];
    acc_col_sums(&mut prompt, mha_grads.q_in.as_ref());

    AdapterGrads {
        wq: mha_grads.wq,
        wk: mha_grads.wk,
        wv: mha_grads.wv,
        wo: mha_grads.wo,
        mlp_w1: d_w1,
        mlp_b1: d_b1,
        mlp_w2: d_w2,
        mlp_b2: d_b2,
        prompt,
    }
}

fn q_width(av: &AdapterView) -> usize {
    av.wq.rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chacha;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
        Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn identity(d: usize) -> Mat {
        let mut m = Mat::zeros(d, d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        m
    }

    struct Weights {
        wq: Mat,
        wk: Mat,
        wv: Mat,
        wo: Mat,
        w1: Mat,
        b1: Vec<f64>,
        w2: Mat,
        b2: Vec<f64>,
    }

    impl Weights {
        fn random(rng: &mut impl Rng, d: usize) -> Weights {
            Weights {
                wq: random_mat(rng, d, d),
                wk: random_mat(rng, d, d),
                wv: random_mat(rng, d, d),
                wo: random_mat(rng, d, d),
                w1: random_mat(rng, d, 4 * d),
                b1: (0..4 * d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                w2: random_mat(rng, 4 * d, d),
                b2: (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            }
        }

        fn view(&self) -> AdapterView<'_> {
            AdapterView {
                wq: self.wq.as_ref(),
                wk: self.wk.as_ref(),
                wv: self.wv.as_ref(),
                wo: self.wo.as_ref(),
                mlp_w1: self.w1.as_ref(),
                mlp_b1: &self.b1,
                mlp_w2: self.w2.as_ref(),
                mlp_b2: &self.b2,
            }
        }
    }

    #[test]
    fn single_token_identity_projections_return_the_value() {
        // One token: attention weight is exactly 1, so with identity value
        // and output projections the result is the token itself, whatever
        // the prompt does to the query.
        let mut rng = chacha(31);
        let d = 4;
        let mut w = Weights::random(&mut rng, d);
        w.wv = identity(d);
        w.wo = identity(d);
        let f = random_mat(&mut rng, 1, d);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (out, _) = cross_attend_views(&w.view(), f.as_ref(), &q, 2, false);
        for (a, b) in out.data.iter().zip(&f.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_prompt_reduces_to_self_attention() {
        // With q = 0 the queries equal the tokens, so cross-attention must
        // match a plain self-attention computed here by direct loops.
        let mut rng = chacha(32);
        let (n, d, heads) = (5, 8, 2);
        let w = Weights::random(&mut rng, d);
        let f = random_mat(&mut rng, n, d);
        let (out, _) = cross_attend_views(&w.view(), f.as_ref(), &vec![0.0; d], heads, false);

        // Reference: per-head scaled dot-product attention, written naively.
        let dh = d / heads;
        let proj = |x: &Mat, m: &Mat| -> Mat {
            let mut out = Mat::zeros(x.rows, d);
            for r in 0..x.rows {
                for c in 0..d {
                    let mut s = 0.0;
                    for k in 0..d {
                        s += x.get(r, k) * m.get(k, c);
                    }
                    out.set(r, c, s);
                }
            }
            out
        };
        let (qm, km, vm) = (proj(&f, &w.wq), proj(&f, &w.wk), proj(&f, &w.wv));
        let mut concat = Mat::zeros(n, d);
        for h in 0..heads {
            for i in 0..n {
                let mut logits = vec![0.0; n];
                for (j, l) in logits.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for k in 0..dh {
                        s += qm.get(i, h * dh + k) * km.get(j, h * dh + k);
                    }
                    *l = s / (dh as f64).sqrt();
                }
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
                let z: f64 = exps.iter().sum();
                for k in 0..dh {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += exps[j] / z * vm.get(j, h * dh + k);
                    }
                    concat.set(i, h * dh + k, acc);
                }
            }
        }
        let expected = proj(&concat, &w.wo);
        for (a, b) in out.data.iter().zip(&expected.data) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cross_attend_is_permutation_equivariant() {
        // Attention has no positional signal, so permuting the token rows
        // permutes the output rows the same way.
        let mut rng = chacha(33);
        let (n, d, heads) = (6, 8, 4);
        let w = Weights::random(&mut rng, d);
        let f = random_mat(&mut rng, n, d);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (base, _) = cross_attend_views(&w.view(), f.as_ref(), &q, heads, false);

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut fp = Mat::zeros(n, d);
        for (dst, &src) in perm.iter().enumerate() {
            fp.row_mut(dst).copy_from_slice(f.row(src));
        }
        let (permuted, _) = cross_attend_views(&w.view(), fp.as_ref(), &q, heads, false);
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..d {
                assert!((permuted.get(dst, c) - base.get(src, c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_mlp_makes_adapter_an_identity_over_attention() {
        let mut rng = chacha(34);
        let (n, d, heads) = (4, 8, 2);
        let mut w = Weights::random(&mut rng, d);
        w.w1 = Mat::zeros(d, 4 * d);
        w.b1 = vec![0.0; 4 * d];
        w.w2 = Mat::zeros(4 * d, d);
        w.b2 = vec![0.0; d];
        let f = random_mat(&mut rng, n, d);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (attn, _) = cross_attend_views(&w.view(), f.as_ref(), &q, heads, false);
        let (full, _) = adapter_forward_views(&w.view(), f.as_ref(), &q, heads, false);
        assert_eq!(attn.data, full.data);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = chacha(35);
        let (n, d, heads) = (3, 4, 2);
        let w = Weights::random(&mut rng, d);
        let f = random_mat(&mut rng, n, d);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coef = random_mat(&mut rng, n, d);

        let loss = |w: &Weights, q: &[f64]| -> f64 {
            let (out, _) = adapter_forward_views(&w.view(), f.as_ref(), q, heads, false);
            out.data.iter().zip(&coef.data).map(|(&o, &c)| o * c).sum()
        };

        let (_, cache) = adapter_forward_views(&w.view(), f.as_ref(), &q, heads, true);
        let grads = adapter_backward(&w.view(), &cache.unwrap(), heads, coef.as_ref());

        let h = 1e-6;
        let check = |analytic: f64, fd: f64, what: &str| {
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            assert!(
                (analytic - fd).abs() / denom < 1e-4,
                "{what}: analytic {analytic} vs fd {fd}"
            );
        };

        // Prompt gradient.
        let mut qv = q.clone();
        for e in 0..d {
            let orig = qv[e];
            qv[e] = orig + h;
            let up = loss(&w, &qv);
            qv[e] = orig - h;
            let dn = loss(&w, &qv);
            qv[e] = orig;
            check(grads.prompt[e], (up - dn) / (2.0 * h), &format!("prompt[{e}]"));
        }

        // One representative entry per weight tensor (the attention weights
        // are exhaustively checked in the attention module).
        fn slot<'a>(w: &'a mut Weights, name: &str, d: usize) -> &'a mut f64 {
            match name {
                "wq" => &mut w.wq.data[d + 2],
                "wk" => &mut w.wk.data[2 * d + 1],
                "wv" => &mut w.wv.data[3],
                "wo" => &mut w.wo.data[3 * d],
                "w1" => &mut w.w1.data[2 * 4 * d + 5],
                "b1" => &mut w.b1[5],
                "w2" => &mut w.w2.data[5 * d + 2],
                "b2" => &mut w.b2[2],
                _ => unreachable!(),
            }
        }
        let mut wv = Weights {
            wq: w.wq.clone(),
            wk: w.wk.clone(),
            wv: w.wv.clone(),
            wo: w.wo.clone(),
            w1: w.w1.clone(),
            b1: w.b1.clone(),
            w2: w.w2.clone(),
            b2: w.b2.clone(),
        };
        let probes: Vec<(&str, f64)> = vec![
            ("wq", grads.wq.get(1, 2)),
            ("wk", grads.wk.get(2, 1)),
            ("wv", grads.wv.get(0, 3)),
            ("wo", grads.wo.get(3, 0)),
            ("w1", grads.mlp_w1.get(2, 5)),
            ("b1", grads.mlp_b1[5]),
            ("w2", grads.mlp_w2.get(5, 2)),
            ("b2", grads.mlp_b2[2]),
        ];
        for (name, analytic) in probes {
            let orig = *slot(&mut wv, name, d);
            *slot(&mut wv, name, d) = orig + h;
            let up = loss(&wv, &q);
            *slot(&mut wv, name, d) = orig - h;
            let dn = loss(&wv, &q);
            *slot(&mut wv, name, d) = orig;
            check(analytic, (up - dn) / (2.0 * h), name);
        }
    }
}
