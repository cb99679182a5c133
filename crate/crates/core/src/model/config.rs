use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{PicError, Result};
use crate::model::tokenizer::VOCAB_SIZE;

/// Shape and seed of the toy transformer. Identical configs give identical weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub vocab_size: usize,
    pub max_position: usize,
    pub rope_base: f32,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 4,
            hidden_dim: 64,
            num_heads: 4,
            head_dim: 16,
            vocab_size: VOCAB_SIZE,
            max_position: 32_768,
            rope_base: 10_000.0,
            seed: 7,
        }
    }
}

impl ModelConfig {
    /// Convenience constructor deriving `head_dim` from `hidden_dim / num_heads`.
    /// The result still has to pass [`ModelConfig::validate`].
    pub fn new(num_layers: usize, hidden_dim: usize, num_heads: usize, seed: u64) -> Self {
        Self {
            num_layers,
            hidden_dim,
            num_heads,
            head_dim: hidden_dim.checked_div(num_heads).unwrap_or(0),
            seed,
            ..Self::default()
        }
    }

    pub fn with_max_position(mut self, max_position: usize) -> Self {
        self.max_position = max_position;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(PicError::Config(msg));
        if self.num_layers == 0 {
            return err("num_layers must be at least 1".into());
        }
        if self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return err(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.head_dim * self.num_heads != self.hidden_dim {
            return err(format!(
                "head_dim {} x num_heads {} != hidden_dim {}",
                self.head_dim, self.num_heads, self.hidden_dim
            ));
        }
        if self.head_dim == 0 || !self.head_dim.is_multiple_of(2) {
            return err(format!("head_dim {} must be even and non-zero", self.head_dim));
        }
        if self.vocab_size < VOCAB_SIZE {
            return err(format!(
                "vocab_size {} is smaller than the byte tokenizer ({VOCAB_SIZE})",
                self.vocab_size
            ));
        }
        if self.max_position == 0 {
            return err("max_position must be at least 1".into());
        }
        if !(self.rope_base.is_finite() && self.rope_base > 0.0) {
            return err(format!("rope_base {} must be positive", self.rope_base));
        }
        Ok(())
    }

    pub fn mlp_dim(&self) -> usize {
        4 * self.hidden_dim
    }

    /// Stable 64-bit identity of this config; embedded in every compiled chunk.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_config_string().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }

    /// Flat `key=value` text, one key per line.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "layers={}", self.num_layers);
        let _ = writeln!(out, "d={}", self.hidden_dim);
        let _ = writeln!(out, "heads={}", self.num_heads);
        let _ = writeln!(out, "head_dim={}", self.head_dim);
        let _ = writeln!(out, "vocab={}", self.vocab_size);
        let _ = writeln!(out, "max_position={}", self.max_position);
        let _ = writeln!(out, "rope_base={}", self.rope_base);
        let _ = writeln!(out, "seed={}", self.seed);
        out
    }

    /// Parses the `key=value` format. Missing keys keep their defaults; when `d`
    /// or `heads` is given without `head_dim`, `head_dim` is derived.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut explicit_head_dim = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PicError::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |_| PicError::Config(format!("line {}: bad value for {key}: {value:?}", lineno + 1));
            match key {
                "layers" => cfg.num_layers = value.parse().map_err(bad)?,
                "d" => cfg.hidden_dim = value.parse().map_err(bad)?,
                "heads" => cfg.num_heads = value.parse().map_err(bad)?,
                "head_dim" => {
                    cfg.head_dim = value.parse().map_err(bad)?;
                    explicit_head_dim = true;
                }
                "vocab" => cfg.vocab_size = value.parse().map_err(bad)?,
                "max_position" => cfg.max_position = value.parse().map_err(bad)?,
                "rope_base" => {
                    cfg.rope_base = value
                        .parse()
                        .map_err(|_| PicError::Config(format!("line {}: bad rope_base {value:?}", lineno + 1)))?
                }
                "seed" => cfg.seed = value.parse().map_err(bad)?,
                other => {
                    return Err(PicError::Config(format!("line {}: unknown key {other:?}", lineno + 1)))
                }
            }
        }
        if !explicit_head_dim && cfg.num_heads > 0 {
            cfg.head_dim = cfg.hidden_dim / cfg.num_heads;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
