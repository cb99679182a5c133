use std::fmt;
use std::str::FromStr;

use crate::error::{PicError, Result};

/// Which KV rows the link step recomputes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkAlgorithm {
    /// Reuse cached rows as-is; only uncached tokens are computed.
    Naive,
    /// Recompute every token.
    FullRecompute,
    /// Recompute everything at layer 0, then the `ratio_percent`% most
    /// deviating cached tokens in deeper layers.
    CacheBlend { ratio_percent: u32 },
    /// Recompute the first `k` tokens of every cached chunk except one that
    /// starts the prompt.
    LegoLink { k: usize },
    /// Nothing cached is recomputed; chunks must be compiled with a dummy prefix.
    LegoLink0,
}

impl FromStr for LinkAlgorithm {
    type Err = PicError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || PicError::InvalidAlgorithm(s.to_owned());
        match s.split_once(':') {
            None => match s {
                "naive" => Ok(Self::Naive),
                "fr" => Ok(Self::FullRecompute),
                "legolink0" => Ok(Self::LegoLink0),
                _ => Err(bad()),
            },
            Some(("cacheblend", r)) => {
                let ratio_percent: u32 = r.parse().map_err(|_| bad())?;
                if ratio_percent > 100 {
                    return Err(bad());
                }
                Ok(Self::CacheBlend { ratio_percent })
            }
            Some(("legolink", k)) => Ok(Self::LegoLink { k: k.parse().map_err(|_| bad())? }),
            Some(_) => Err(bad()),
        }
    }
}

impl fmt::Display for LinkAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Naive => f.write_str("naive"),
            Self::FullRecompute => f.write_str("fr"),
            Self::CacheBlend { ratio_percent } => write!(f, "cacheblend:{ratio_percent}"),
            Self::LegoLink { k } => write!(f, "legolink:{k}"),
            Self::LegoLink0 => f.write_str("legolink0"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        for (s, a) in [
            ("naive", LinkAlgorithm::Naive),
            ("fr", LinkAlgorithm::FullRecompute),
            ("cacheblend:15", LinkAlgorithm::CacheBlend { ratio_percent: 15 }),
            ("legolink:16", LinkAlgorithm::LegoLink { k: 16 }),
            ("legolink:0", LinkAlgorithm::LegoLink { k: 0 }),
            ("legolink0", LinkAlgorithm::LegoLink0),
        ] {
            assert_eq!(s.parse::<LinkAlgorithm>().unwrap(), a);
            assert_eq!(a.to_string(), s);
        }
    }

    #[test]
    fn rejects_malformed() {
        for s in ["legolink", "cacheblend", "cacheblend:101", "cacheblend:x", "legolink:-1", "FR", "", "naive:3"] {
            assert!(matches!(s.parse::<LinkAlgorithm>(), Err(PicError::InvalidAlgorithm(_))), "{s}");
        }
    }
}
