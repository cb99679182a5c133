//! Byte-level tokenizer: ids 0..=255 are raw bytes, followed by four specials.

use crate::model::TokenId;

pub const BOS: TokenId = 256;
pub const EOS: TokenId = 257;
pub const PAD: TokenId = 258;
pub const SEP: TokenId = 259;
pub const VOCAB_SIZE: usize = 260;

pub fn encode(text: &str) -> Vec<TokenId> {
    text.bytes().map(TokenId::from).collect()
}

/// Lossy decode; special tokens are dropped.
pub fn decode(tokens: &[TokenId]) -> String {
    let bytes: Vec<u8> = tokens
        .iter()
        .filter_map(|&t| u8::try_from(t).ok())
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_ascii_and_specials() {
        let mut toks = encode("hi there");
        toks.push(EOS);
        assert_eq!(toks.len(), 9);
        assert_eq!(decode(&toks), "hi there");
    }
}
