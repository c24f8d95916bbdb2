//! Semantic Grouping baseline: whole-vector k-means where every token is
//! represented by its cluster centroid.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::asg::AsgConfig;
use crate::embed_io::{
    check_magic, read_f32s, read_u16, read_u32, read_u32s, read_u64, write_f32s, write_header_u32s,
    EmbeddingMatrix,
};
use crate::error::{AsgError, Result};
use crate::kmeans::{self, KmeansParams, PointSet};
use crate::report::CompressionReport;

pub const SG_MAGIC: &[u8; 4] = b"ASGS";
pub const SG_VERSION: u16 = 1;
const SG_HEADER_LEN: u64 = 4 + 2 + 4 * 3 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SgModel {
    vocab_size: usize,
    dim: usize,
    k_sg: usize,
    seed: u64,
    centroids: Vec<f32>,
    map: Vec<u32>,
    objective: f64,
}

pub fn train_sg(embeddings: &EmbeddingMatrix, params: &KmeansParams) -> Result<SgModel> {
    if params.k > embeddings.rows() {
        return Err(AsgError::InvalidArgument(format!(
            "k_sg={} exceeds vocabulary size {}",
            params.k,
            embeddings.rows()
        )));
    }
    let points = PointSet::new(embeddings.data(), embeddings.cols())?;
    let run = kmeans::kmeans(&points, params)?;
    Ok(SgModel {
        vocab_size: embeddings.rows(),
        dim: embeddings.cols(),
        k_sg: params.k,
        seed: params.seed,
        map: run.assignments.labels.iter().map(|&l| l as u32).collect(),
        objective: run.assignments.objective,
        centroids: run.centroids.into_data(),
    })
}

/// Baseline centroid count whose `k_sg × D` table matches the ASG codebook
/// parameter count as closely as possible (at least one centroid).
pub fn matched_budget_k(config: &AsgConfig) -> usize {
    let params = CompressionReport::from_config(config).asg_params;
    let d = config.dim as u64;
    (((params + d / 2) / d) as usize).max(1)
}

impl SgModel {
    pub fn new(
        dim: usize,
        k_sg: usize,
        seed: u64,
        centroids: Vec<f32>,
        map: Vec<u32>,
    ) -> Result<Self> {
        if dim == 0 || k_sg == 0 || map.is_empty() {
            return Err(AsgError::Shape("SG model needs D, k_sg, V >= 1".into()));
        }
        if centroids.len() != k_sg * dim {
            return Err(AsgError::Shape(format!(
                "centroid table holds {} values, expected {}",
                centroids.len(),
                k_sg * dim
            )));
        }
        if let Some(pos) = centroids.iter().position(|x| !x.is_finite()) {
            return Err(AsgError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        if let Some(t) = map.iter().position(|&c| c as usize >= k_sg) {
            return Err(AsgError::Shape(format!(
                "token {t} mapped to cluster {} >= k_sg={k_sg}",
                map[t]
            )));
        }
        Ok(Self {
            vocab_size: map.len(),
            dim,
            k_sg,
            seed,
            centroids,
            map,
            objective: f64::NAN,
        })
    }

    pub fn k_sg(&self) -> usize {
        self.k_sg
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn map(&self) -> &[u32] {
        &self.map
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Final clustering objective; NaN for models loaded from disk.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn sg_reconstruct(&self, t: usize) -> Result<&[f32]> {
        let c = *self.map.get(t).ok_or(AsgError::OutOfRange {
            index: t,
            len: self.vocab_size,
        })? as usize;
        Ok(&self.centroids[c * self.dim..(c + 1) * self.dim])
    }

    pub fn reconstruct_all(&self) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(self.vocab_size * self.dim);
        for &c in &self.map {
            data.extend_from_slice(
                &self.centroids[c as usize * self.dim..(c as usize + 1) * self.dim],
            );
        }
        EmbeddingMatrix::new(self.vocab_size, self.dim, data).expect("validated SG model")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(SG_MAGIC);
        buf.write_u16::<LittleEndian>(SG_VERSION).unwrap();
        write_header_u32s(
            &mut buf,
            &[self.vocab_size as u32, self.dim as u32, self.k_sg as u32],
        );
        buf.write_u64::<LittleEndian>(self.seed).unwrap();
        write_f32s(&mut buf, &self.centroids);
        write_header_u32s(&mut buf, &self.map);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        check_magic(&mut cur, SG_MAGIC)?;
        let version = read_u16(&mut cur)?;
        if version != SG_VERSION {
            return Err(AsgError::UnsupportedVersion(version));
        }
        let v = read_u32(&mut cur)? as usize;
        let d = read_u32(&mut cur)? as usize;
        let k_sg = read_u32(&mut cur)? as usize;
        let seed = read_u64(&mut cur)?;
        let expected = SG_HEADER_LEN + 4 * (k_sg as u64 * d as u64 + v as u64);
        let found = bytes.len() as u64;
        if found < expected {
            return Err(AsgError::Truncated { expected, found });
        }
        if found > expected {
            return Err(AsgError::TrailingBytes(found - expected));
        }
        let centroids = read_f32s(&mut cur, k_sg * d)?;
        let map = read_u32s(&mut cur, v)?;
        Self::new(d, k_sg, seed, centroids, map)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asg::CodebookMode;
    use crate::embed_io::{generate_synthetic, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(v: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..v * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        EmbeddingMatrix::new(v, d, data).unwrap()
    }

    #[test]
    fn k_equals_v_recovers_rows() {
        let e = random_matrix(12, 5, 1);
        let sg = train_sg(&e, &KmeansParams::new(12, 0)).unwrap();
        assert_eq!(sg.reconstruct_all(), e);
    }

    #[test]
    fn k_one_is_global_mean() {
        let e = EmbeddingMatrix::new(3, 2, vec![0.0, 3.0, 3.0, 6.0, 6.0, 0.0]).unwrap();
        let sg = train_sg(&e, &KmeansParams::new(1, 0)).unwrap();
        for t in 0..3 {
            assert_eq!(sg.sg_reconstruct(t).unwrap(), &[3.0, 3.0]);
        }
    }

    #[test]
    fn rejects_k_above_v() {
        let e = random_matrix(3, 2, 1);
        assert!(train_sg(&e, &KmeansParams::new(4, 0)).is_err());
    }

    #[test]
    fn zero_noise_blobs_partition_matches_labels() {
        let data = generate_synthetic(&SyntheticSpec {
            n_clusters: 8,
            vocab_size: 64,
            dim: 8,
            spread: 0.0,
            seed: 2,
        })
        .unwrap();
        let sg = train_sg(&data.embeddings, &KmeansParams::new(8, 4)).unwrap();
        assert_eq!(sg.reconstruct_all(), data.embeddings);
        // Pair-counting agreement: same cluster iff same label.
        let mut agree = 0usize;
        let mut total = 0usize;
        for a in 0..64 {
            for b in (a + 1)..64 {
                total += 1;
                let same_sg = sg.map()[a] == sg.map()[b];
                let same_label = data.labels[a] == data.labels[b];
                agree += (same_sg == same_label) as usize;
            }
        }
        assert_eq!(agree, total);
    }

    #[test]
    fn same_cluster_same_reconstruction() {
        let e = random_matrix(40, 4, 8);
        let sg = train_sg(&e, &KmeansParams::new(3, 1)).unwrap();
        for a in 0..40 {
            for b in 0..40 {
                if sg.map()[a] == sg.map()[b] {
                    assert_eq!(sg.sg_reconstruct(a).unwrap(), sg.sg_reconstruct(b).unwrap());
                }
            }
        }
    }

    #[test]
    fn mse_matches_objective() {
        let e = random_matrix(80, 6, 3);
        let sg = train_sg(&e, &KmeansParams::new(5, 2)).unwrap();
        let sse: f64 = e
            .data()
            .iter()
            .zip(sg.reconstruct_all().data())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum();
        assert!((sse - sg.objective()).abs() / sse < 1e-9);
    }

    #[test]
    fn matched_budget() {
        let sep = AsgConfig::new(250_000, 768, 1024, 48, CodebookMode::Separate);
        assert_eq!(matched_budget_k(&sep), 1024);
        let shared = AsgConfig::new(256_000, 512, 32_768, 64, CodebookMode::Shared);
        assert_eq!(matched_budget_k(&shared), 512);
        for (k, m, d) in [(7, 3, 12), (100, 8, 64), (3, 4, 100), (17, 16, 32)] {
            for mode in [CodebookMode::Separate, CodebookMode::Shared] {
                let c = AsgConfig::new(10, d, k, m, mode);
                let budget = CompressionReport::from_config(&c).asg_params as i64;
                let ksg = matched_budget_k(&c) as i64;
                assert!((ksg * d as i64 - budget).abs() <= d as i64);
            }
        }
    }

    #[test]
    fn file_round_trip_and_tamper() {
        let e = random_matrix(20, 4, 3);
        let sg = train_sg(&e, &KmeansParams::new(4, 9)).unwrap();
        let bytes = sg.to_bytes();
        assert_eq!(SgModel::from_bytes(&bytes).unwrap().to_bytes(), bytes);
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 4..].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(SgModel::from_bytes(&bad), Err(AsgError::Shape(_))));
    }
}
