//! Small dense f64 linear algebra for the model: row-major matrices, a
//! borrowed view type for parameters stored in flat buffers, and the few
//! kernels the forward/backward passes need. Loop orders are fixed and
//! sequential, so every reduction is bit-deterministic.

/// Owned row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Mat {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef { rows: self.rows, cols: self.cols, data: &self.data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Copy a contiguous column block `c0..c1` into a new matrix.
    pub fn col_block(&self, c0: usize, c1: usize) -> Mat {
        let w = c1 - c0;
        let mut out = Mat::zeros(self.rows, w);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[c0..c1]);
        }
        out
    }

    /// Write `src` into the column block starting at `c0`.
    pub fn set_col_block(&mut self, c0: usize, src: &Mat) {
        assert_eq!(self.rows, src.rows);
        for r in 0..self.rows {
            let dst = r * self.cols + c0;
            self.data[dst..dst + src.cols].copy_from_slice(src.row(r));
        }
    }
}

/// Borrowed row-major matrix view (used for parameter slices).
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl<'a> MatRef<'a> {
    pub fn new(rows: usize, cols: usize, data: &'a [f64]) -> MatRef<'a> {
        assert_eq!(data.len(), rows * cols, "view length mismatch");
        MatRef { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_mat(&self) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.to_vec() }
    }
}

/// `y += a * x`.
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `a (n x k) * b (k x m) -> n x m`, i-k-j loop order (row-major friendly).
pub fn matmul(a: MatRef, b: MatRef) -> Mat {
    assert_eq!(a.cols, b.rows, "matmul inner dims");
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (k, &aik) in arow.iter().enumerate() {
            if aik != 0.0 {
                axpy(orow, aik, b.row(k));
            }
        }
    }
    out
}

/// `a (n x k) * b^T (m x k) -> n x m` (rows of `b` are dotted with rows of `a`).
pub fn matmul_transb(a: MatRef, b: MatRef) -> Mat {
    assert_eq!(a.cols, b.cols, "matmul_transb inner dims");
    let mut out = Mat::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for j in 0..b.rows {
            orow[j] = dot(arow, b.row(j));
        }
    }
    out
}

/// `a^T (k x n view of n x k) * b (n x m) -> k x m`.
pub fn matmul_transa(a: MatRef, b: MatRef) -> Mat {
    assert_eq!(a.rows, b.rows, "matmul_transa inner dims");
    let mut out = Mat::zeros(a.cols, b.cols);
    for n in 0..a.rows {
        let arow = a.row(n);
        let brow = b.row(n);
        for (i, &ani) in arow.iter().enumerate() {
            if ani != 0.0 {
                axpy(out.row_mut(i), ani, brow);
            }
        }
    }
    out
}

/// Accumulate `a^T * b` into a flat `k x m` buffer (gradient sink).
pub fn acc_matmul_transa(sink: &mut [f64], a: MatRef, b: MatRef) {
    assert_eq!(a.rows, b.rows);
    assert_eq!(sink.len(), a.cols * b.cols);
    let m = b.cols;
    for n in 0..a.rows {
        let arow = a.row(n);
        let brow = b.row(n);
        for (i, &ani) in arow.iter().enumerate() {
            if ani != 0.0 {
                axpy(&mut sink[i * m..(i + 1) * m], ani, brow);
            }
        }
    }
}

/// Add a row vector to every row.
pub fn add_row_vec(m: &mut Mat, v: &[f64]) {
    assert_eq!(m.cols, v.len());
    for r in 0..m.rows {
        axpy(m.row_mut(r), 1.0, v);
    }
}

/// Column sums accumulated into a flat buffer (bias-gradient sink).
pub fn acc_col_sums(sink: &mut [f64], m: MatRef) {
    assert_eq!(sink.len(), m.cols);
    for r in 0..m.rows {
        axpy(sink, 1.0, m.row(r));
    }
}

/// In-place rectifier.
pub fn relu_inplace(m: &mut Mat) {
    for v in &mut m.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zero entries of `grad` where the post-rectifier activation is zero
/// (derivative 0 at the kink, matching the forward's `max(0, x)`).
pub fn relu_backward_inplace(grad: &mut Mat, post: &Mat) {
    assert_eq!((grad.rows, grad.cols), (post.rows, post.cols));
    for (g, &a) in grad.data.iter_mut().zip(&post.data) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Row-wise layer normalization with learned gain and offset.
pub fn layernorm_rows(x: MatRef, gain: &[f64], offset: &[f64], eps: f64) -> Mat {
    assert_eq!(x.cols, gain.len());
    assert_eq!(x.cols, offset.len());
    let d = x.cols as f64;
    let mut out = Mat::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + eps).sqrt();
        let orow = out.row_mut(r);
        for (o, (&v, (&g, &b))) in orow.iter_mut().zip(row.iter().zip(gain.iter().zip(offset))) {
            *o = (v - mean) * inv * g + b;
        }
    }
    out
}

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax_rows(m: &mut Mat) {
    for r in 0..m.rows {
        let row = m.row_mut(r);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// `x (len k) * w (k x m) -> len m` (row vector times matrix).
pub fn vec_mat(x: &[f64], w: MatRef) -> Vec<f64> {
    assert_eq!(x.len(), w.rows);
    let mut out = vec![0.0; w.cols];
    for (k, &xk) in x.iter().enumerate() {
        if xk != 0.0 {
            axpy(&mut out, xk, w.row(k));
        }
    }
    out
}

/// `w (k x m) * d (len m) -> len k` (matrix times column vector).
pub fn mat_vec(w: MatRef, d: &[f64]) -> Vec<f64> {
    assert_eq!(w.cols, d.len());
    (0..w.rows).map(|r| dot(w.row(r), d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_known_product() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Mat::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(matmul(a.as_ref(), b.as_ref()).data, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Mat::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]);
        let b = Mat::from_vec(2, 3, vec![2.0, 0.0, 1.0, -1.0, 5.0, 0.25]);
        // a * b^T
        let ab_t = matmul_transb(a.as_ref(), b.as_ref());
        let mut bt = Mat::zeros(3, 2);
        for r in 0..2 {
            for c in 0..3 {
                bt.set(c, r, b.get(r, c));
            }
        }
        assert_eq!(ab_t, matmul(a.as_ref(), bt.as_ref()));
        // a^T * b
        let at_b = matmul_transa(a.as_ref(), b.as_ref());
        let mut at = Mat::zeros(3, 2);
        for r in 0..2 {
            for c in 0..3 {
                at.set(c, r, a.get(r, c));
            }
        }
        assert_eq!(at_b, matmul(at.as_ref(), b.as_ref()));
    }

    #[test]
    fn softmax_rows_are_stochastic() {
        let mut m = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1000.0, 0.0, 1000.0]);
        softmax_rows(&mut m);
        for r in 0..2 {
            let s: f64 = m.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(m.row(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        // Extreme logits stay finite.
        assert!(m.get(1, 2) > 0.999);
    }

    #[test]
    fn layernorm_rows_normalizes() {
        let x = Mat::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let out = layernorm_rows(x.as_ref(), &[1.0; 4], &[0.0; 4], 1e-5);
        let mean: f64 = out.row(0).iter().sum::<f64>() / 4.0;
        let var: f64 = out.row(0).iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4); // eps keeps it just below 1
        // Gain and offset apply affinely.
        let scaled = layernorm_rows(x.as_ref(), &[2.0; 4], &[1.0; 4], 1e-5);
        for c in 0..4 {
            assert!((scaled.get(0, c) - (2.0 * out.get(0, c) + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_and_backward_mask() {
        let mut m = Mat::from_vec(1, 4, vec![-1.0, 0.0, 0.5, 2.0]);
        relu_inplace(&mut m);
        assert_eq!(m.data, vec![0.0, 0.0, 0.5, 2.0]);
        let mut g = Mat::from_vec(1, 4, vec![1.0, 1.0, 1.0, 1.0]);
        relu_backward_inplace(&mut g, &m);
        assert_eq!(g.data, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn vec_mat_and_mat_vec() {
        let w = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(vec_mat(&[1.0, 1.0], w.as_ref()), vec![5.0, 7.0, 9.0]);
        assert_eq!(mat_vec(w.as_ref(), &[1.0, 0.0, 1.0]), vec![4.0, 10.0]);
    }

    #[test]
    fn col_block_round_trip() {
        let m = Mat::from_vec(2, 4, (0..8).map(|i| i as f64).collect());
        let b = m.col_block(1, 3);
        assert_eq!(b.data, vec![1.0, 2.0, 5.0, 6.0]);
        let mut n = Mat::zeros(2, 4);
        n.set_col_block(1, &b);
        assert_eq!(n.data, vec![0.0, 1.0, 2.0, 0.0, 0.0, 5.0, 6.0, 0.0]);
    }
}
