//! Shared fixtures for the criterion benches under `benches/`.

use asg_core::{generate_synthetic, EmbeddingMatrix, SyntheticSpec};

/// Blob-structured embeddings; sizes chosen so every bench finishes quickly.
pub fn blobs(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    generate_synthetic(&SyntheticSpec {
        n_clusters: 32,
        vocab_size,
        dim,
        spread: 0.2,
        seed,
    })
    .expect("valid synthetic spec")
    .embeddings
}
