use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::model::ModelConfig;

/// Parameters of one transformer block. Matrices are row-major `in × out`,
/// applied as `x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Vec<f32>,
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub mlp_norm: Vec<f32>,
    pub w_up: Vec<f32>,
    pub w_down: Vec<f32>,
}

/// Immutable model parameters, shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    config: ModelConfig,
    fingerprint: u64,
    pub embedding: Vec<f32>,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vec<f32>,
    pub unembedding: Vec<f32>,
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f32> {
    let scale = 1.0 / (fan_in as f32).sqrt();
    (0..len)
        .map(|_| {
            let z: f32 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

/// Seeded Gaussian initialisation scaled by `1/sqrt(fan_in)`; norm gains are one.
pub fn init_model(config: &ModelConfig) -> Result<Weights> {
    config.validate()?;
    let d = config.hidden_dim;
    let f = config.mlp_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let embedding = gaussian(&mut rng, config.vocab_size * d, d);
    let layers = (0..config.num_layers)
        .map(|_| LayerWeights {
            attn_norm: vec![1.0; d],
            wq: gaussian(&mut rng, d * d, d),
            wk: gaussian(&mut rng, d * d, d),
            wv: gaussian(&mut rng, d * d, d),
            wo: gaussian(&mut rng, d * d, d),
            mlp_norm: vec![1.0; d],
            w_up: gaussian(&mut rng, d * f, d),
            w_down: gaussian(&mut rng, f * d, f),
        })
        .collect();
    let final_norm = vec![1.0; d];
    let unembedding = gaussian(&mut rng, d * config.vocab_size, d);
    Ok(Weights::from_parts(config.clone(), embedding, layers, final_norm, unembedding))
}

impl Weights {
    pub(crate) fn from_parts(
        config: ModelConfig,
        embedding: Vec<f32>,
        layers: Vec<LayerWeights>,
        final_norm: Vec<f32>,
        unembedding: Vec<f32>,
    ) -> Self {
        let fingerprint = config.fingerprint();
        Self { config, fingerprint, embedding, layers, final_norm, unembedding }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Fingerprint of the config (which includes the seed).
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub(crate) fn embedding_row(&self, token: usize) -> &[f32] {
        let d = self.config.hidden_dim;
        &self.embedding[token * d..(token + 1) * d]
    }

    /// Every tensor in declaration order.
    pub fn tensors(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = vec![&self.embedding];
        for l in &self.layers {
            out.extend([
                &l.attn_norm[..],
                &l.wq,
                &l.wk,
                &l.wv,
                &l.wo,
                &l.mlp_norm,
                &l.w_up,
                &l.w_down,
            ]);
        }
        out.push(&self.final_norm);
        out.push(&self.unembedding);
        out
    }

    /// SHA-256 over all parameters (little-endian f32), truncated to 64 bits.
    pub fn checksum(&self) -> u64 {
        let mut hasher = Sha256::new();
        for t in self.tensors() {
            for v in t {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_checksum() {
        let cfg = ModelConfig::new(4, 64, 4, 7);
        assert_eq!(init_model(&cfg).unwrap().checksum(), init_model(&cfg).unwrap().checksum());
    }

    #[test]
    fn different_seed_different_checksum() {
        let a = init_model(&ModelConfig::new(4, 64, 4, 7)).unwrap();
        let b = init_model(&ModelConfig::new(4, 64, 4, 8)).unwrap();
        assert_ne!(a.checksum(), b.checksum());
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(init_model(&ModelConfig::new(4, 64, 3, 7)).is_err());
    }

    #[test]
    fn all_entries_finite() {
        let w = init_model(&ModelConfig::new(2, 32, 2, 1)).unwrap();
        assert!(w.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())));
    }
}
