use candle_core::DType;
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_blocks: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub num_heads: usize,
    pub vocab_size: usize,
    pub max_source_len: usize,
    /// Includes the terminating EOS.
    pub max_target_len: usize,
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
}

impl ModelConfig {
    /// The default small configuration.
    pub fn small(vocab_size: usize) -> Self {
        Self {
            num_blocks: 2,
            d_model: 256,
            d_ff: 512,
            num_heads: 2,
            vocab_size,
            max_source_len: 400,
            max_target_len: 40,
            seed: 0,
            precision: Precision::F32,
        }
    }

    /// The base-transformer sized preset.
    pub fn large(vocab_size: usize) -> Self {
        Self {
            num_blocks: 6,
            d_model: 512,
            d_ff: 2048,
            num_heads: 8,
            ..Self::small(vocab_size)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("num_blocks", self.num_blocks),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("num_heads", self.num_heads),
            ("max_source_len", self.max_source_len),
            ("max_target_len", self.max_target_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(ModelError::Config(format!(
                "d_model {} not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.vocab_size <= super::vocab::RESERVED.len() {
            return Err(ModelError::Config(format!(
                "vocab_size {} leaves no room beside the reserved tokens",
                self.vocab_size
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }
}
