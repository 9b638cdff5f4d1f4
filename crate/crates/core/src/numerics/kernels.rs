//! Slice-level kernels shared by the tape's forward and backward passes.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// `a[m×p] · b[p×n]`. Zero entries of `a` are skipped, which pays off for
/// sparse attention weights and post-relu activations.
pub fn matmul(a: &[f64], b: &[f64], m: usize, p: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * p..(i + 1) * p];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[k * n..(k + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// `dc[m×n] · bᵀ` where `b` is `p×n`.
pub fn matmul_grad_lhs(dc: &[f64], b: &[f64], m: usize, p: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let dc_row = &dc[i * n..(i + 1) * n];
        for k in 0..p {
            let b_row = &b[k * n..(k + 1) * n];
            out[i * p + k] = dc_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · dc[m×n]` where `a` is `m×p`.
pub fn matmul_grad_rhs(a: &[f64], dc: &[f64], m: usize, p: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * n];
    for i in 0..m {
        let dc_row = &dc[i * n..(i + 1) * n];
        for k in 0..p {
            let aik = a[i * p + k];
            if aik == 0.0 {
                continue;
            }
            let out_row = &mut out[k * n..(k + 1) * n];
            for (o, &g) in out_row.iter_mut().zip(dc_row) {
                *o += aik * g;
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// Row-wise softmax with max subtraction. `-inf` entries map to exactly 0.
pub fn softmax_rows(x: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    for (r, (row, out_row)) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateRow { row: r });
        }
        let mut total = 0.0;
        for (o, &v) in out_row.iter_mut().zip(row) {
            if v != f64::NEG_INFINITY {
                *o = (v - max).exp();
                total += *o;
            }
        }
        for o in out_row.iter_mut() {
            *o /= total;
        }
    }
    Ok(out)
}

/// LayerNorm over rows of length `gamma.len()`, returning the output, the
/// normalized rows and each row's `1/√(var + eps)`.
pub fn layer_norm_rows(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = gamma.len();
    let rows = x.len() / d;
    let mut normalized = Vec::with_capacity(rows * d);
    let mut inv_std = Vec::with_capacity(rows);
    let mut out = Vec::with_capacity(rows * d);
    for row in x.chunks_exact(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + eps).sqrt();
        inv_std.push(s);
        for j in 0..d {
            let xh = (row[j] - mean) * s;
            normalized.push(xh);
            out.push(gamma[j] * xh + beta[j]);
        }
    }
    (out, normalized, inv_std)
}

/// Adds `bias` to every row of `x` in place.
pub fn add_bias_rows(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_exact_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
}

/// Orders column indices by value descending, lowest index first among ties.
fn rank_desc(row: &[f64], a: usize, b: usize) -> Ordering {
    row[b].total_cmp(&row[a]).then(a.cmp(&b))
}

/// Indicator of the `k` largest entries of `row`.
///
/// Ties at the k-th value go to the lowest column index.
pub fn topk_keep(row: &[f64], k: usize) -> Vec<bool> {
    let n = row.len();
    if k >= n {
        return vec![true; n];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.select_nth_unstable_by(k - 1, |&a, &b| rank_desc(row, a, b));
    let mut keep = vec![false; n];
    for &i in &idx[..k] {
        keep[i] = true;
    }
    keep
}

/// Splits a shape around `axis` into (outer, axis length, inner) strides.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_breaks_ties_by_lowest_index() {
        assert_eq!(topk_keep(&[5.0, 5.0, 5.0], 1), vec![true, false, false]);
        assert_eq!(
            topk_keep(&[1.0, 3.0, 3.0, 3.0], 2),
            vec![false, true, true, false]
        );
    }

    #[test]
    fn topk_keeps_largest() {
        assert_eq!(
            topk_keep(&[3.0, 1.0, 2.0, 0.0], 2),
            vec![true, false, true, false]
        );
        assert_eq!(topk_keep(&[3.0, 1.0], 5), vec![true, true]);
    }

    #[test]
    fn matmul_gradients_agree_with_explicit_transposes() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [0.5, -1.0, 2.0, 0.0, 1.0, 3.0]; // 3×2
        let dc = [1.0, -2.0, 0.5, 4.0]; // 2×2
        let bt = transpose(&b, 3, 2);
        assert_eq!(matmul_grad_lhs(&dc, &b, 2, 3, 2), matmul(&dc, &bt, 2, 2, 3));
        let at = transpose(&a, 2, 3);
        assert_eq!(matmul_grad_rhs(&a, &dc, 2, 3, 2), matmul(&at, &dc, 3, 2, 2));
    }
}
