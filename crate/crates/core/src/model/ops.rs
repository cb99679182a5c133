//! Dense kernels shared by every forward path. Plain loops, f32 accumulation,
//! fixed summation order so that identical inputs give bitwise-identical outputs.

use crate::model::TokenId;

pub(crate) const NORM_EPS: f32 = 1e-5;

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// RMS norm of every `dim`-wide row of `x`.
pub(crate) fn rms_norm(x: &[f32], gain: &[f32], dim: usize) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    for (row, dst) in x.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        let ms = row.iter().map(|v| v * v).sum::<f32>() / dim as f32;
        let inv = 1.0 / (ms + NORM_EPS).sqrt();
        for ((o, v), g) in dst.iter_mut().zip(row).zip(gain) {
            *o = v * inv * g;
        }
    }
    out
}

/// `x (rows × inner) · w (inner × cols)`.
pub(crate) fn matmul(x: &[f32], w: &[f32], inner: usize, cols: usize) -> Vec<f32> {
    let rows = x.len() / inner;
    let mut out = vec![0.0; rows * cols];
    for (xr, or) in x.chunks_exact(inner).zip(out.chunks_exact_mut(cols)) {
        for (k, &a) in xr.iter().enumerate() {
            let wr = &w[k * cols..(k + 1) * cols];
            for (o, b) in or.iter_mut().zip(wr) {
                *o += a * b;
            }
        }
    }
    out
}

#[inline]
pub(crate) fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// Rotates consecutive pairs `(2i, 2i+1)` of every head in `row` by
/// `position * base^(-2i/head_dim)`.
pub fn apply_rotary(row: &mut [f32], head_dim: usize, position: usize, base: f32) {
    let half = head_dim / 2;
    for head in row.chunks_exact_mut(head_dim) {
        for i in 0..half {
            let inv_freq = (base as f64).powf(-(2.0 * i as f64) / head_dim as f64);
            let angle = position as f64 * inv_freq;
            let (sin, cos) = (angle.sin() as f32, angle.cos() as f32);
            let (a, b) = (head[2 * i], head[2 * i + 1]);
            head[2 * i] = a * cos - b * sin;
            head[2 * i + 1] = a * sin + b * cos;
        }
    }
}

/// In-place numerically stable softmax.
pub(crate) fn softmax_in_place(scores: &mut [f32]) {
    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Greedy choice; ties go to the lowest id.
pub fn argmax(logits: &[f32]) -> TokenId {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as TokenId
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.5, 2.0, 2.0, -1.0]), 1);
    }

    #[test]
    fn rotary_at_zero_is_identity() {
        let mut row = vec![0.3, -1.2, 0.7, 2.0];
        let orig = row.clone();
        apply_rotary(&mut row, 4, 0, 10_000.0);
        assert_eq!(row, orig);
    }

    #[test]
    fn matmul_small() {
        // [1 2] · [[1 0 1],[0 1 1]] = [1 2 3]
        assert_eq!(matmul(&[1.0, 2.0], &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0], 2, 3), vec![1.0, 2.0, 3.0]);
    }

    proptest! {
        #[test]
        fn rotary_preserves_pair_norms(
            vals in proptest::collection::vec(-10.0f32..10.0, 16),
            pos in 0usize..100_000,
        ) {
            let mut row = vals.clone();
            apply_rotary(&mut row, 8, pos, 10_000.0);
            for (a, b) in vals.chunks(2).zip(row.chunks(2)) {
                let before = (a[0] * a[0] + a[1] * a[1]).sqrt();
                let after = (b[0] * b[0] + b[1] * b[1]).sqrt();
                prop_assert!((before - after).abs() <= 1e-6 * before.max(1.0),
                    "{before} vs {after}");
            }
        }

        #[test]
        fn softmax_sums_to_one(vals in proptest::collection::vec(-30.0f32..30.0, 1..64)) {
            let mut s = vals.clone();
            softmax_in_place(&mut s);
            let total: f32 = s.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-5);
        }
    }
}
