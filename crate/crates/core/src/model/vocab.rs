use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::metric_tokens;

use super::ModelError;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

pub const DEFAULT_MIN_FREQ: usize = 2;
pub const DEFAULT_MAX_SIZE: usize = 30_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    min_freq: usize,
    max_size: usize,
}

/// Token/id bijection over `[0, len)`; ids 0..4 are the reserved tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_freq: usize,
    max_size: usize,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = ModelError;

    fn try_from(f: VocabFile) -> Result<Self, ModelError> {
        Self::from_tokens(f.tokens, f.min_freq, f.max_size)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            tokens: v.tokens,
            min_freq: v.min_freq,
            max_size: v.max_size,
        }
    }
}

/// A source text mapped to ids, with its out-of-vocabulary tokens numbered
/// `V, V+1, ...` in the extended vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEncoding {
    pub tokens: Vec<String>,
    /// Base ids; OOV tokens map to UNK.
    pub ids: Vec<u32>,
    /// Extended ids; OOV tokens map to `V + j`.
    pub ext_ids: Vec<u32>,
    pub oov: Vec<String>,
}

impl SourceEncoding {
    pub fn ext_size(&self, vocab_size: usize) -> usize {
        vocab_size + self.oov.len()
    }
}

impl Vocabulary {
    fn from_tokens(
        tokens: Vec<String>,
        min_freq: usize,
        max_size: usize,
    ) -> Result<Self, ModelError> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(ModelError::Checkpoint(
                "vocabulary lacks reserved tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(ModelError::Checkpoint(format!(
                    "duplicate vocabulary token {t:?}"
                )));
            }
        }
        Ok(Self {
            tokens,
            index,
            min_freq,
            max_size,
        })
    }

    /// Lowercased metric tokens occurring at least `min_freq` times, most
    /// frequent first (ties alphabetical), `max_size` ids in total.
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        min_freq: usize,
        max_size: usize,
    ) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for t in metric_tokens(text) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq.max(1) && !RESERVED.contains(&t.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(max_size.saturating_sub(RESERVED.len()));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens, min_freq, max_size).expect("distinct by construction")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokenize and encode a source, keeping at most `max_len` tokens.
    pub fn encode_source(&self, text: &str, max_len: usize) -> SourceEncoding {
        let mut tokens = metric_tokens(text);
        tokens.truncate(max_len);
        let v = self.len() as u32;
        let mut oov: Vec<String> = Vec::new();
        let mut ids = Vec::with_capacity(tokens.len());
        let mut ext_ids = Vec::with_capacity(tokens.len());
        for t in &tokens {
            match self.id(t) {
                Some(id) => {
                    ids.push(id);
                    ext_ids.push(id);
                }
                None => {
                    let j = match oov.iter().position(|o| o == t) {
                        Some(j) => j,
                        None => {
                            oov.push(t.clone());
                            oov.len() - 1
                        }
                    };
                    ids.push(UNK);
                    ext_ids.push(v + j as u32);
                }
            }
        }
        SourceEncoding {
            tokens,
            ids,
            ext_ids,
            oov,
        }
    }

    /// Extended target ids terminated by EOS, at most `max_len` ids in total.
    /// OOV tokens copyable from the source get their extended id, others UNK.
    pub fn encode_target(&self, text: &str, source: &SourceEncoding, max_len: usize) -> Vec<u32> {
        let v = self.len() as u32;
        let mut ids: Vec<u32> = metric_tokens(text)
            .iter()
            .map(|t| match self.id(t) {
                Some(id) => id,
                None => match source.oov.iter().position(|o| o == t) {
                    Some(j) => v + j as u32,
                    None => UNK,
                },
            })
            .collect();
        ids.truncate(max_len.saturating_sub(1));
        ids.push(EOS);
        ids
    }

    /// Decoder input for an extended target: BOS, then the target without its
    /// last id, extended ids replaced by UNK.
    pub fn decoder_input(&self, target_ext: &[u32]) -> Vec<u32> {
        let v = self.len() as u32;
        std::iter::once(BOS)
            .chain(
                target_ext[..target_ext.len().saturating_sub(1)]
                    .iter()
                    .map(|&id| if id >= v { UNK } else { id }),
            )
            .collect()
    }

    /// Token strings for extended ids, stopping before the first EOS.
    pub fn decode(&self, ids: &[u32], source: &SourceEncoding) -> Vec<String> {
        let v = self.len() as u32;
        ids.iter()
            .take_while(|&&id| id != EOS)
            .map(|&id| {
                if id >= v {
                    source
                        .oov
                        .get((id - v) as usize)
                        .cloned()
                        .unwrap_or_else(|| RESERVED[UNK as usize].to_string())
                } else {
                    self.tokens[id as usize].clone()
                }
            })
            .collect()
    }

    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the token list
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tokens {
            for b in t.bytes().chain(std::iter::once(0)) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}
