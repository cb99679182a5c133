//! Splits an immutable token stream into compile units.

use std::fmt;
use std::str::FromStr;

use crate::error::{PicError, Result};
use crate::model::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkSpec {
    /// Chunks of exactly `n` tokens, the last one possibly shorter.
    Fixed(usize),
    /// Each chunk ends with (and includes) the delimiter token.
    Delimiter(TokenId),
}

impl ChunkSpec {
    pub fn fixed(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(PicError::InvalidChunkSpec("fixed:0".into()));
        }
        Ok(Self::Fixed(size))
    }
}

impl FromStr for ChunkSpec {
    type Err = PicError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || PicError::InvalidChunkSpec(s.to_owned());
        let (mode, arg) = s.split_once(':').ok_or_else(bad)?;
        match mode {
            "fixed" => Self::fixed(arg.parse().map_err(|_| bad())?),
            "delimiter" | "delim" => Ok(Self::Delimiter(arg.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ChunkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(n) => write!(f, "fixed:{n}"),
            Self::Delimiter(t) => write!(f, "delimiter:{t}"),
        }
    }
}

pub fn split(tokens: &[TokenId], spec: ChunkSpec) -> Result<Vec<Vec<TokenId>>> {
    if tokens.is_empty() {
        return Err(PicError::EmptyInput("nothing to split"));
    }
    Ok(match spec {
        ChunkSpec::Fixed(0) => return Err(PicError::InvalidChunkSpec("fixed:0".into())),
        ChunkSpec::Fixed(n) => tokens.chunks(n).map(<[TokenId]>::to_vec).collect(),
        ChunkSpec::Delimiter(delim) => tokens
            .split_inclusive(|&t| t == delim)
            .map(<[TokenId]>::to_vec)
            .collect(),
    })
}
