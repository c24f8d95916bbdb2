//! Reconstruction-error statistics and per-segment facet queries.

use serde::Serialize;

use crate::asg::AsgModel;
use crate::embed_io::{EmbeddingMatrix, Vocab};
use crate::error::{AsgError, Result};
use crate::kmeans::squared_distance;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorStats {
    /// Mean squared error over all V·D entries.
    pub total_mse: f64,
    /// Each segment's squared error divided by V·D, so the entries sum to
    /// `total_mse`. A single entry when no segmentation is given.
    pub per_segment_mse: Vec<f64>,
    /// Largest per-row squared error.
    pub max_row_error: f64,
    pub worst_token: usize,
}

/// Compares `reconstructed` against `original`; `segments` splits the
/// columns into that many contiguous groups for the per-segment breakdown.
pub fn quantization_error(
    original: &EmbeddingMatrix,
    reconstructed: &EmbeddingMatrix,
    segments: Option<usize>,
) -> Result<ErrorStats> {
    if original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols() {
        return Err(AsgError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            original.rows(),
            original.cols(),
            reconstructed.rows(),
            reconstructed.cols()
        )));
    }
    let d = original.cols();
    let m = segments.unwrap_or(1);
    if m == 0 || !d.is_multiple_of(m) {
        return Err(AsgError::Shape(format!(
            "cannot split {d} columns into {m} segments"
        )));
    }
    let s = d / m;
    let mut seg_sse = vec![0f64; m];
    let mut max_row_error = 0.0;
    let mut worst_token = 0;
    for (t, (a, b)) in original
        .iter_rows()
        .zip(reconstructed.iter_rows())
        .enumerate()
    {
        let mut row = 0.0;
        for (i, acc) in seg_sse.iter_mut().enumerate() {
            let e = squared_distance(&a[i * s..(i + 1) * s], &b[i * s..(i + 1) * s]);
            *acc += e;
            row += e;
        }
        if row > max_row_error {
            max_row_error = row;
            worst_token = t;
        }
    }
    let n = (original.rows() * d) as f64;
    let total: f64 = seg_sse.iter().sum();
    Ok(ErrorStats {
        total_mse: total / n,
        per_segment_mse: seg_sse.into_iter().map(|e| e / n).collect(),
        max_row_error,
        worst_token,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FacetEntry {
    pub token: String,
    pub index: usize,
    /// Euclidean distance of the token's sub-vector to the shared Concept Vector.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FacetReport {
    pub query_token: String,
    pub segment: usize,
    pub concept_id: u32,
    /// Tokens sharing the query's ConceptID in total, before `limit` applies.
    pub group_size: usize,
    pub co_clustered: Vec<FacetEntry>,
}

/// Tokens that share `token`'s ConceptID at `segment`, truncated to `limit`.
/// The query token itself is always kept when `limit >= 1`.
///
/// The model keeps only ConceptIDs, so distances to the shared Concept Vector
/// need the original embeddings. Without them every distance is zero and the
/// list is in token order.
pub fn segment_neighbors(
    model: &AsgModel,
    vocab: &Vocab,
    original: Option<&EmbeddingMatrix>,
    token: &str,
    segment: usize,
    limit: usize,
) -> Result<FacetReport> {
    let v = model.vocab_size();
    if vocab.len() != v {
        return Err(AsgError::Shape(format!(
            "vocabulary has {} tokens, model has {v}",
            vocab.len()
        )));
    }
    if let Some(e) = original {
        if e.rows() != v || e.cols() != model.dim() {
            return Err(AsgError::DimensionMismatch(format!(
                "embeddings are {}x{}, model is {v}x{}",
                e.rows(),
                e.cols(),
                model.dim()
            )));
        }
    }
    let q = vocab
        .index(token)
        .ok_or_else(|| AsgError::UnknownToken(token.to_owned()))?;
    let m = model.config().m;
    if segment >= m {
        return Err(AsgError::OutOfRange {
            index: segment,
            len: m,
        });
    }
    let s = model.config().segment_dim();
    let id = model.concept_ids(q)?[segment];
    let centre = model.codebook_row(id);

    let table = model.concept_id_table();
    let mut entries: Vec<FacetEntry> = (0..v)
        .filter(|&t| table[t * m + segment] == id)
        .map(|t| FacetEntry {
            token: vocab.token(t).unwrap_or_default().to_owned(),
            index: t,
            distance: original.map_or(0.0, |e| {
                squared_distance(&e.row(t)[segment * s..(segment + 1) * s], centre).sqrt()
            }),
        })
        .collect();
    entries.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.index.cmp(&b.index))
    });
    let group_size = entries.len();
    if limit > 0 && limit < entries.len() && !entries[..limit].iter().any(|f| f.index == q) {
        // The query sorts after everything kept, so swapping it into the
        // last slot preserves the ordering.
        let pos = entries
            .iter()
            .position(|f| f.index == q)
            .expect("query is in its own group");
        entries.swap(limit - 1, pos);
    }
    entries.truncate(limit);
    Ok(FacetReport {
        query_token: token.to_owned(),
        segment,
        concept_id: id,
        group_size,
        co_clustered: entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asg::{train_asg, AsgConfig, CodebookMode};
    use crate::embed_io::{generate_synthetic, SyntheticSpec};

    fn blob_setup(spread: f32) -> (EmbeddingMatrix, Vec<usize>, Vocab, AsgModel) {
        let data = generate_synthetic(&SyntheticSpec {
            n_clusters: 8,
            vocab_size: 64,
            dim: 8,
            spread,
            seed: 13,
        })
        .unwrap();
        let vocab = Vocab::new(
            data.labels
                .iter()
                .enumerate()
                .map(|(t, c)| format!("blob{c}_{t}"))
                .collect(),
        )
        .unwrap();
        let model = train_asg(
            &data.embeddings,
            &AsgConfig::new(64, 8, 8, 2, CodebookMode::Separate).with_seed(4),
        )
        .unwrap();
        (data.embeddings, data.labels, vocab, model)
    }

    #[test]
    fn identical_matrices_give_zero_stats() {
        let e = EmbeddingMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = quantization_error(&e, &e, Some(2)).unwrap();
        assert_eq!(s.total_mse, 0.0);
        assert_eq!(s.per_segment_mse, vec![0.0, 0.0]);
        assert_eq!(s.max_row_error, 0.0);
    }

    #[test]
    fn single_entry_off_by_two() {
        let e = EmbeddingMatrix::new(2, 2, vec![0.0; 4]).unwrap();
        let r = EmbeddingMatrix::new(2, 2, vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        let s = quantization_error(&e, &r, None).unwrap();
        assert_eq!(s.total_mse, 1.0);
        assert_eq!(s.worst_token, 1);
        assert_eq!(s.max_row_error, 4.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = EmbeddingMatrix::new(2, 2, vec![0.0; 4]).unwrap();
        let b = EmbeddingMatrix::new(1, 4, vec![0.0; 4]).unwrap();
        assert!(quantization_error(&a, &b, None).is_err());
        assert!(quantization_error(&a, &a, Some(3)).is_err());
    }

    #[test]
    fn per_segment_sum_law() {
        let (e, _, _, model) = blob_setup(0.4);
        let s = quantization_error(&e, &model.reconstruct_all(), Some(2)).unwrap();
        let sum: f64 = s.per_segment_mse.iter().sum();
        assert!((sum - s.total_mse).abs() <= 1e-6 * s.total_mse);
        assert!(s.total_mse > 0.0);
    }

    #[test]
    fn zero_noise_facets_equal_blob() {
        let (e, labels, vocab, model) = blob_setup(0.0);
        for q in [0usize, 9, 30] {
            for seg in 0..2 {
                let r =
                    segment_neighbors(&model, &vocab, Some(&e), vocab.token(q).unwrap(), seg, 64)
                        .unwrap();
                let mut got: Vec<usize> = r.co_clustered.iter().map(|f| f.index).collect();
                got.sort();
                let want: Vec<usize> = (0..64).filter(|&t| labels[t] == labels[q]).collect();
                assert_eq!(got, want);
                assert!(r.co_clustered.iter().all(|f| f.distance == 0.0));
            }
        }
    }

    #[test]
    fn reflexive_sorted_and_symmetric() {
        let (e, _, vocab, model) = blob_setup(0.5);
        for q in 0..64 {
            let tok = vocab.token(q).unwrap();
            let r = segment_neighbors(&model, &vocab, Some(&e), tok, 1, usize::MAX).unwrap();
            assert!(r.co_clustered.iter().any(|f| f.index == q));
            for w in r.co_clustered.windows(2) {
                assert!(
                    w[0].distance < w[1].distance
                        || (w[0].distance == w[1].distance && w[0].index < w[1].index)
                );
            }
            for f in &r.co_clustered {
                let back =
                    segment_neighbors(&model, &vocab, None, &f.token, 1, usize::MAX).unwrap();
                assert!(back.co_clustered.iter().any(|g| g.index == q));
            }
        }
    }

    #[test]
    fn identical_tokens_share_every_segment() {
        let mut rows: Vec<Vec<f32>> = (0..10)
            .map(|i| vec![i as f32, -(i as f32), 0.5, 2.0])
            .collect();
        rows.push(rows[3].clone());
        let e = EmbeddingMatrix::from_rows(&rows).unwrap();
        let vocab = Vocab::new((0..11).map(|i| format!("w{i}")).collect()).unwrap();
        let model = train_asg(&e, &AsgConfig::new(11, 4, 3, 2, CodebookMode::Separate)).unwrap();
        for seg in 0..2 {
            let r = segment_neighbors(&model, &vocab, Some(&e), "w3", seg, 20).unwrap();
            assert!(r.co_clustered.iter().any(|f| f.token == "w10"));
        }
    }

    #[test]
    fn errors() {
        let (e, _, vocab, model) = blob_setup(0.0);
        assert!(matches!(
            segment_neighbors(&model, &vocab, Some(&e), "nope", 0, 5),
            Err(AsgError::UnknownToken(_))
        ));
        assert!(matches!(
            segment_neighbors(&model, &vocab, Some(&e), "blob0_0", 2, 5),
            Err(AsgError::OutOfRange { .. })
        ));
    }

    #[test]
    fn query_survives_truncation() {
        let (e, _, vocab, model) = blob_setup(0.5);
        for q in 0..64 {
            let r =
                segment_neighbors(&model, &vocab, Some(&e), vocab.token(q).unwrap(), 0, 2).unwrap();
            assert!(r.co_clustered.iter().any(|f| f.index == q));
        }
    }

    #[test]
    fn limit_truncates_but_reports_group_size() {
        let (_, _, vocab, model) = blob_setup(0.0);
        let r = segment_neighbors(&model, &vocab, None, "blob0_0", 0, 3).unwrap();
        assert_eq!(r.co_clustered.len(), 3);
        assert_eq!(r.group_size, 8);
    }
}
