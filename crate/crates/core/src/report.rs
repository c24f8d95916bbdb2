//! Parameter and storage accounting for compressed embedding tables.

use serde::Serialize;

use crate::asg::{AsgConfig, CodebookMode};

/// Bits needed to store one ConceptID when packed: `ceil(log2 k)`.
pub fn mapping_bits_per_id(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

/// Packed size of a V×m ConceptID table in bytes.
pub fn mapping_bytes(vocab_size: usize, m: usize, k: usize) -> u64 {
    let bits = vocab_size as u64 * m as u64 * mapping_bits_per_id(k) as u64;
    bits.div_ceil(8)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    pub vocab_size: usize,
    pub dim: usize,
    pub k: usize,
    pub m: usize,
    pub mode: CodebookMode,
    /// Shape of the stacked codebook matrix (rows, segment dimension).
    pub codebook_shape: (usize, usize),
    pub original_params: u64,
    pub asg_params: u64,
    pub embedding_ratio: f64,
    pub mapping_bits_per_id: u32,
    pub mapping_bytes: u64,
    /// Packed map size relative to the original f32 table.
    pub mapping_overhead_ratio: f64,
}

impl CompressionReport {
    pub fn from_config(config: &AsgConfig) -> Self {
        let (v, d, k, m) = (config.vocab_size, config.dim, config.k, config.m);
        let original_params = v as u64 * d as u64;
        let segment_dim = if m == 0 { 0 } else { d / m };
        let asg_params = match config.mode {
            CodebookMode::Separate => k as u64 * d as u64,
            CodebookMode::Shared => k as u64 * segment_dim as u64,
        };
        let bytes = mapping_bytes(v, m, k);
        Self {
            vocab_size: v,
            dim: d,
            k,
            m,
            mode: config.mode,
            codebook_shape: (config.codebook_rows(), segment_dim),
            original_params,
            asg_params,
            embedding_ratio: asg_params as f64 / original_params as f64,
            mapping_bits_per_id: mapping_bits_per_id(k),
            mapping_bytes: bytes,
            mapping_overhead_ratio: bytes as f64 / (original_params as f64 * 4.0),
        }
    }
}
