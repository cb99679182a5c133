use serde::{Deserialize, Serialize};

/// Per-request measurements. Times are seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMetrics {
    /// Assembled prompt length N.
    pub n_tokens: usize,
    /// Rows recomputed in the deepest layer.
    pub k_prime: usize,
    pub ttft_s: f64,
    pub queue_wait_s: f64,
    pub recomputed_tokens_per_layer: Vec<usize>,
    pub attention_flops: u64,
    pub attention_flops_per_layer: Vec<u64>,
    pub decode_tokens: usize,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert_eq!(s, 2.0);
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }
}
