//! Compositional token embeddings via product quantization.
//!
//! A `V × D` embedding table is cut into `m` contiguous segments. Each
//! segment position gets its own k-means codebook of Concept Vectors (or all
//! segments share one pooled codebook), and every token becomes a sequence of
//! `m` ConceptIDs. The crate trains those codebooks, reconstructs embeddings,
//! computes output logits directly from the segmented codebooks, accounts for
//! the parameter savings, and provides a full-vector k-means baseline plus
//! analysis tools for comparing the two.

pub mod analysis;
pub mod asg;
pub mod embed_io;
pub mod error;
pub mod kmeans;
pub mod probe;
pub mod report;
pub mod sg;

pub use analysis::{quantization_error, segment_neighbors, ErrorStats, FacetEntry, FacetReport};
pub use asg::{train_asg, AsgConfig, AsgModel, CodebookMode, HiddenState};
pub use embed_io::{
    generate_synthetic, load_embeddings, load_vocab, save_embeddings, save_vocab, EmbeddingMatrix,
    SyntheticData, SyntheticSpec, Vocab,
};
pub use error::{AsgError, ErrorClass, Result};
pub use kmeans::{Assignments, Centroids, KmeansParams, PointSet};
pub use probe::{probe_eval, ProbeResult};
pub use report::{mapping_bits_per_id, mapping_bytes, CompressionReport};
pub use sg::{matched_budget_k, train_sg, SgModel};
