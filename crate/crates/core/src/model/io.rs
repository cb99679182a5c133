//! Weight dump: `PICMDL01`, config header, then every tensor in declaration
//! order as little-endian f32.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{PicError, Result};
use crate::model::{LayerWeights, ModelConfig, Weights};

const MAGIC: &[u8; 8] = b"PICMDL01";

pub fn save_weights(weights: &Weights, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let cfg = weights.config();
    out.write_all(MAGIC)?;
    for v in [cfg.num_layers, cfg.hidden_dim, cfg.num_heads, cfg.head_dim, cfg.vocab_size, cfg.max_position] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    out.write_all(&cfg.rope_base.to_le_bytes())?;
    out.write_all(&cfg.seed.to_le_bytes())?;
    for t in weights.tensors() {
        for v in t {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Weights> {
    let format_err = |reason: String| PicError::Format { path: path.to_owned(), reason };
    let mut input = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_err("bad magic".into()));
    }
    let mut u32s = [0usize; 6];
    for v in &mut u32s {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        *v = u32::from_le_bytes(b) as usize;
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let config = ModelConfig {
        num_layers: u32s[0],
        hidden_dim: u32s[1],
        num_heads: u32s[2],
        head_dim: u32s[3],
        vocab_size: u32s[4],
        max_position: u32s[5],
        rope_base: f32::from_le_bytes(b4),
        seed: u64::from_le_bytes(b8),
    };
    config.validate()?;

    let mut read = |len: usize| -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; len * 4];
        input.read_exact(&mut bytes)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let (d, f, vocab) = (config.hidden_dim, config.mlp_dim(), config.vocab_size);
    let embedding = read(vocab * d)?;
    let mut layers = Vec::with_capacity(config.num_layers);
    for _ in 0..config.num_layers {
        layers.push(LayerWeights {
            attn_norm: read(d)?,
            wq: read(d * d)?,
            wk: read(d * d)?,
            wv: read(d * d)?,
            wo: read(d * d)?,
            mlp_norm: read(d)?,
            w_up: read(d * f)?,
            w_down: read(f * d)?,
        });
    }
    let final_norm = read(d)?;
    let unembedding = read(d * vocab)?;
    let weights = Weights::from_parts(config, embedding, layers, final_norm, unembedding);
    if !weights.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) {
        return Err(format_err("non-finite weight".into()));
    }
    Ok(weights)
}
