//! Target symbol vocabularies and label sequences.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default unit inventory size.
pub const UNIT_COUNT: usize = 100;

/// Name of the word-boundary symbol in phoneme vocabularies.
pub const SPACE: &str = "space";

/// Default phoneme inventory: 40 English phonemes plus the word separator.
pub const DEFAULT_PHONEMES: [&str; 41] = [
    "aa", "ae", "ah", "ao", "aw", "ax", "ay", "b", "ch", "d", "dh", "eh", "er", "ey", "f", "g",
    "hh", "ih", "iy", "jh", "k", "l", "m", "n", "ng", "ow", "oy", "p", "r", "s", "sh", "t", "th",
    "uh", "uw", "v", "w", "y", "z", "zh", SPACE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabKind {
    Units,
    Phonemes,
}

/// Id ↔ string table. Ids are `0..len`; the CTC blank is not part of the
/// vocabulary (model outputs reserve class 0 for it).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub kind: VocabKind,
    pub symbols: Vec<String>,
}

impl Vocab {
    pub fn units(count: usize) -> Self {
        Self {
            kind: VocabKind::Units,
            symbols: (0..count).map(|i| i.to_string()).collect(),
        }
    }

    pub fn default_phonemes() -> Self {
        Self {
            kind: VocabKind::Phonemes,
            symbols: DEFAULT_PHONEMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn phonemes(table: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for s in &table {
            if s.is_empty() || s == "<blank>" {
                return Err(Error::InvalidArgument(format!(
                    "invalid phoneme symbol {s:?}"
                )));
            }
            if !seen.insert(s) {
                return Err(Error::InvalidArgument(format!("duplicate phoneme {s:?}")));
            }
        }
        Ok(Self {
            kind: VocabKind::Phonemes,
            symbols: table,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        self.symbols.iter().position(|s| s == symbol).map(|i| i as u32)
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    /// Parses whitespace-separated symbols into a label sequence.
    pub fn encode(&self, text: &str) -> Result<LabelSequence> {
        let ids = text
            .split_whitespace()
            .map(|tok| {
                self.id(tok)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown symbol {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        LabelSequence::new(self, ids)
    }

    pub fn decode(&self, seq: &LabelSequence) -> String {
        seq.symbols()
            .iter()
            .map(|&i| self.symbol(i).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// FNV-1a over the symbol table, stored in checkpoints to catch
    /// vocabulary drift between training and decoding.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        eat(self.kind as u8);
        for s in &self.symbols {
            s.bytes().for_each(&mut eat);
            eat(0);
        }
        h
    }
}

/// Unaligned target symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSequence {
    kind: VocabKind,
    vocab_size: usize,
    symbols: Vec<u32>,
}

impl LabelSequence {
    pub fn new(vocab: &Vocab, symbols: Vec<u32>) -> Result<Self> {
        Self::with_size(vocab.kind, vocab.len(), symbols)
    }

    pub fn with_size(kind: VocabKind, vocab_size: usize, symbols: Vec<u32>) -> Result<Self> {
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= vocab_size) {
            return Err(Error::InvalidArgument(format!(
                "label id {bad} out of range for vocabulary of {vocab_size}"
            )));
        }
        Ok(Self {
            kind,
            vocab_size,
            symbols,
        })
    }

    pub fn units(symbols: Vec<u32>) -> Result<Self> {
        Self::with_size(VocabKind::Units, UNIT_COUNT, symbols)
    }

    #[inline]
    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    #[inline]
    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    #[inline]
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn same_vocab(&self, other: &Self) -> bool {
        self.kind == other.kind && self.vocab_size == other.vocab_size
    }
}

impl fmt::Display for LabelSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for s in &self.symbols {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
            first = false;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_phoneme_table() {
        let v = Vocab::default_phonemes();
        assert_eq!(v.len(), 41);
        assert_eq!(v.id(SPACE), Some(40));
        let seq = v.encode("ih t space w aa z").unwrap();
        assert_eq!(v.decode(&seq), "ih t space w aa z");
        assert!(v.encode("ih qq").is_err());
    }

    #[test]
    fn out_of_range_ids_rejected() {
        assert!(LabelSequence::units(vec![99]).is_ok());
        assert!(LabelSequence::units(vec![100]).is_err());
    }

    #[test]
    fn fingerprint_tracks_table() {
        let a = Vocab::units(100);
        let b = Vocab::units(99);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), Vocab::units(100).fingerprint());
    }
}
