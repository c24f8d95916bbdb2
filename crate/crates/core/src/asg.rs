//! Segmented codebooks of Concept Vectors and the token → ConceptID map.
//!
//! In `Separate` mode the `m` per-segment codebooks are stacked into one
//! `(m·k) × (D/m)` matrix; the j-th Concept Vector of segment i lives at row
//! `i·k + j`, and that global row index is the ConceptID. In `Shared` mode a
//! single `k × (D/m)` codebook serves every segment and ConceptIDs are plain
//! indices in `[0, k)`.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::embed_io::{
    check_magic, read_f32s, read_u16, read_u32, read_u32s, read_u64, read_u8, write_f32s,
    write_header_u32s, EmbeddingMatrix,
};
use crate::error::{AsgError, Result};
use crate::kmeans::{self, KmeansParams, PointSet};
use crate::report::CompressionReport;

pub const MODEL_MAGIC: &[u8; 4] = b"ASG1";
pub const MODEL_VERSION: u16 = 1;
const CODEBOOK_TAG: &[u8; 4] = b"ASGC";
const MAP_TAG: &[u8; 4] = b"ASGM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookMode {
    /// One codebook per segment position.
    Separate,
    /// All sub-vectors pooled into one codebook used at every position.
    Shared,
}

impl CodebookMode {
    fn to_byte(self) -> u8 {
        match self {
            CodebookMode::Separate => 0,
            CodebookMode::Shared => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(CodebookMode::Separate),
            1 => Ok(CodebookMode::Shared),
            other => Err(AsgError::Shape(format!(
                "unknown codebook mode byte {other}"
            ))),
        }
    }
}

impl std::str::FromStr for CodebookMode {
    type Err = AsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separate" => Ok(CodebookMode::Separate),
            "shared" => Ok(CodebookMode::Shared),
            other => Err(AsgError::InvalidArgument(format!(
                "mode must be 'separate' or 'shared', got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for CodebookMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CodebookMode::Separate => "separate",
            CodebookMode::Shared => "shared",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsgConfig {
    pub vocab_size: usize,
    pub dim: usize,
    /// Concept Vectors per codebook.
    pub k: usize,
    /// Segments per embedding.
    pub m: usize,
    pub mode: CodebookMode,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl AsgConfig {
    pub fn new(vocab_size: usize, dim: usize, k: usize, m: usize, mode: CodebookMode) -> Self {
        Self {
            vocab_size,
            dim,
            k,
            m,
            mode,
            max_iters: kmeans::DEFAULT_MAX_ITERS,
            tol: kmeans::DEFAULT_TOL,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.dim == 0 {
            return Err(AsgError::Shape(format!(
                "empty embedding shape {}x{}",
                self.vocab_size, self.dim
            )));
        }
        if self.k == 0 || self.m == 0 {
            return Err(AsgError::InvalidArgument(format!(
                "k and m must be >= 1 (k={}, m={})",
                self.k, self.m
            )));
        }
        if !self.dim.is_multiple_of(self.m) {
            return Err(AsgError::Shape(format!(
                "dimension {} is not divisible by m={}",
                self.dim, self.m
            )));
        }
        if self.k > u32::MAX as usize / self.m {
            return Err(AsgError::InvalidArgument(
                "m·k exceeds the 32-bit ConceptID range".into(),
            ));
        }
        Ok(())
    }

    pub fn segment_dim(&self) -> usize {
        self.dim / self.m
    }

    /// Rows of the stacked codebook matrix.
    pub fn codebook_rows(&self) -> usize {
        match self.mode {
            CodebookMode::Separate => self.m * self.k,
            CodebookMode::Shared => self.k,
        }
    }

    /// Points clustered by each k-means job.
    pub fn points_per_job(&self) -> usize {
        match self.mode {
            CodebookMode::Separate => self.vocab_size,
            CodebookMode::Shared => self.vocab_size * self.m,
        }
    }

    pub fn kmeans_params(&self, seed: u64) -> KmeansParams {
        KmeansParams {
            k: self.k,
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
        }
    }

    /// Seed of the k-means job for one segment (Separate) or the pooled job.
    pub fn job_seed(&self, segment: usize) -> u64 {
        match self.mode {
            CodebookMode::Separate => self
                .seed
                .wrapping_add((segment as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            CodebookMode::Shared => self.seed,
        }
    }
}

/// A `D`-dimensional final hidden state, split into `m` contiguous segments
/// when scored against a model.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState(Vec<f32>);

impl HiddenState {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(AsgError::NonFinite { row: 0, col });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn segments(&self, m: usize) -> std::slice::ChunksExact<'_, f32> {
        self.0.chunks_exact(self.0.len() / m)
    }
}

/// Outcome of one k-means job inside [`train_asg_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRun {
    pub objective: f64,
    pub trace: Vec<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsgTraining {
    pub model: AsgModel,
    /// One entry per segment in Separate mode, a single entry in Shared mode.
    pub runs: Vec<SegmentRun>,
}

/// Immutable trained model: configuration, stacked codebooks and the V×m
/// ConceptID table.
#[derive(Debug, Clone, PartialEq)]
pub struct AsgModel {
    config: AsgConfig,
    codebooks: Vec<f32>,
    ids: Vec<u32>,
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn train_asg(embeddings: &EmbeddingMatrix, config: &AsgConfig) -> Result<AsgModel> {
    Ok(train_asg_detailed(embeddings, config)?.model)
}

/// Trains codebooks and returns the per-job k-means statistics as well.
pub fn train_asg_detailed(embeddings: &EmbeddingMatrix, config: &AsgConfig) -> Result<AsgTraining> {
    config.validate()?;
    if embeddings.rows() != config.vocab_size || embeddings.cols() != config.dim {
        return Err(AsgError::DimensionMismatch(format!(
            "config expects {}x{}, embeddings are {}x{}",
            config.vocab_size,
            config.dim,
            embeddings.rows(),
            embeddings.cols()
        )));
    }
    if config.k > config.points_per_job() {
        return Err(AsgError::InvalidArgument(format!(
            "k={} exceeds the {} points available per codebook",
            config.k,
            config.points_per_job()
        )));
    }
    let (v, m, k, s) = (config.vocab_size, config.m, config.k, config.segment_dim());

    let (codebooks, ids, runs) = match config.mode {
        CodebookMode::Separate => {
            let results = (0..m)
                .into_par_iter()
                .map(|i| {
                    let seg: Vec<f32> = embeddings
                        .iter_rows()
                        .flat_map(|row| &row[i * s..(i + 1) * s])
                        .copied()
                        .collect();
                    let points = PointSet::new(&seg, s)?;
                    kmeans::kmeans(&points, &config.kmeans_params(config.job_seed(i)))
                })
                .collect::<Result<Vec<_>>>()?;

            let mut codebooks = Vec::with_capacity(m * k * s);
            let mut ids = vec![0u32; v * m];
            let mut runs = Vec::with_capacity(m);
            for (i, run) in results.into_iter().enumerate() {
                for (t, &label) in run.assignments.labels.iter().enumerate() {
                    ids[t * m + i] = (i * k + label) as u32;
                }
                runs.push(SegmentRun {
                    objective: run.assignments.objective,
                    trace: run.trace,
                    degenerate: run.degenerate,
                });
                codebooks.extend(run.centroids.into_data());
            }
            (codebooks, ids, runs)
        }
        CodebookMode::Shared => {
            // Row-major V×D is already (V·m)×(D/m) with sub-vector t·m+i.
            let points = PointSet::new(embeddings.data(), s)?;
            let run = kmeans::kmeans(&points, &config.kmeans_params(config.job_seed(0)))?;
            let ids = run.assignments.labels.iter().map(|&l| l as u32).collect();
            let runs = vec![SegmentRun {
                objective: run.assignments.objective,
                trace: run.trace,
                degenerate: run.degenerate,
            }];
            (run.centroids.into_data(), ids, runs)
        }
    };

    if runs.iter().any(|r| r.degenerate) {
        warn!("codebook training hit duplicate-heavy data; some Concept Vectors are repeated");
    }
    Ok(AsgTraining {
        model: AsgModel::new(*config, codebooks, ids)?,
        runs,
    })
}

impl AsgModel {
    /// Assembles a model, checking every shape and ConceptID range.
    pub fn new(config: AsgConfig, codebooks: Vec<f32>, ids: Vec<u32>) -> Result<Self> {
        config.validate()?;
        let (v, m, k) = (config.vocab_size, config.m, config.k);
        let expected = config.codebook_rows() * config.segment_dim();
        if codebooks.len() != expected {
            return Err(AsgError::Shape(format!(
                "codebook section holds {} values, expected {expected}",
                codebooks.len()
            )));
        }
        if let Some(pos) = codebooks.iter().position(|x| !x.is_finite()) {
            return Err(AsgError::NonFinite {
                row: pos / config.segment_dim(),
                col: pos % config.segment_dim(),
            });
        }
        if ids.len() != v * m {
            return Err(AsgError::Shape(format!(
                "ConceptID table holds {} entries, expected {}",
                ids.len(),
                v * m
            )));
        }
        for (pos, &id) in ids.iter().enumerate() {
            let (t, i) = (pos / m, pos % m);
            let range = match config.mode {
                CodebookMode::Separate => i * k..(i + 1) * k,
                CodebookMode::Shared => 0..k,
            };
            if !range.contains(&(id as usize)) {
                return Err(AsgError::Shape(format!(
                    "ConceptID {id} for token {t}, segment {i} outside {range:?}"
                )));
            }
        }
        Ok(Self {
            config,
            codebooks,
            ids,
        })
    }

    pub fn config(&self) -> &AsgConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// The stacked codebook matrix, row-major.
    pub fn codebooks(&self) -> &[f32] {
        &self.codebooks
    }

    /// The V×m ConceptID table, row-major.
    pub fn concept_id_table(&self) -> &[u32] {
        &self.ids
    }

    /// Row `id` of the stacked codebook matrix.
    pub fn codebook_row(&self, id: u32) -> &[f32] {
        let s = self.config.segment_dim();
        &self.codebooks[id as usize * s..(id as usize + 1) * s]
    }

    fn check_token(&self, t: usize) -> Result<()> {
        if t >= self.config.vocab_size {
            return Err(AsgError::OutOfRange {
                index: t,
                len: self.config.vocab_size,
            });
        }
        Ok(())
    }

    pub fn concept_ids(&self, t: usize) -> Result<&[u32]> {
        self.check_token(t)?;
        let m = self.config.m;
        Ok(&self.ids[t * m..(t + 1) * m])
    }

    /// Concatenation of the token's Concept Vectors in segment order.
    pub fn reconstruct(&self, t: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(self.config.dim);
        for &id in self.concept_ids(t)? {
            out.extend_from_slice(self.codebook_row(id));
        }
        Ok(out)
    }

    pub fn reconstruct_all(&self) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(self.config.vocab_size * self.config.dim);
        for &id in &self.ids {
            data.extend_from_slice(self.codebook_row(id));
        }
        EmbeddingMatrix::new(self.config.vocab_size, self.config.dim, data)
            .expect("validated model reconstructs to a valid matrix")
    }

    fn check_hidden(&self, hidden: &HiddenState) -> Result<()> {
        if hidden.dim() != self.config.dim {
            return Err(AsgError::DimensionMismatch(format!(
                "hidden state has dimension {}, model expects {}",
                hidden.dim(),
                self.config.dim
            )));
        }
        Ok(())
    }

    /// Σ_i H_i · u_{t,i}: the output score of token `t` computed segment by
    /// segment against its Concept Vectors.
    pub fn logit(&self, hidden: &HiddenState, t: usize) -> Result<f64> {
        self.check_hidden(hidden)?;
        let ids = self.concept_ids(t)?;
        let mut acc = 0.0;
        for (h, &id) in hidden.segments(self.config.m).zip(ids) {
            acc += dot(h, self.codebook_row(id));
        }
        Ok(acc)
    }

    /// Logits for every token. Each segment's dot products against its
    /// codebook are computed once (k·m of them) and gathered through the
    /// ConceptID table; results are bit-identical to [`AsgModel::logit`].
    pub fn logits_all(&self, hidden: &HiddenState) -> Result<Vec<f64>> {
        self.check_hidden(hidden)?;
        let AsgConfig { m, k, mode, .. } = self.config;
        let mut table = vec![0f64; m * k];
        for (i, h) in hidden.segments(m).enumerate() {
            for j in 0..k {
                let row = match mode {
                    CodebookMode::Separate => i * k + j,
                    CodebookMode::Shared => j,
                };
                table[i * k + j] = dot(h, self.codebook_row(row as u32));
            }
        }
        let offset = |i: usize, id: u32| match mode {
            CodebookMode::Separate => id as usize,
            CodebookMode::Shared => i * k + id as usize,
        };
        Ok(self
            .ids
            .par_chunks_exact(m)
            .map(|ids| {
                let mut acc = 0.0;
                for (i, &id) in ids.iter().enumerate() {
                    acc += table[offset(i, id)];
                }
                acc
            })
            .collect())
    }

    pub fn param_report(&self) -> CompressionReport {
        CompressionReport::from_config(&self.config)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut buf = Vec::with_capacity(40 + 4 * (self.codebooks.len() + self.ids.len()));
        buf.extend_from_slice(MODEL_MAGIC);
        buf.write_u16::<LittleEndian>(MODEL_VERSION).unwrap();
        buf.push(c.mode.to_byte());
        buf.push(0);
        write_header_u32s(
            &mut buf,
            &[c.vocab_size as u32, c.dim as u32, c.k as u32, c.m as u32],
        );
        buf.write_u64::<LittleEndian>(c.seed).unwrap();
        buf.extend_from_slice(CODEBOOK_TAG);
        write_f32s(&mut buf, &self.codebooks);
        buf.extend_from_slice(MAP_TAG);
        for id in &self.ids {
            buf.write_u32::<LittleEndian>(*id).unwrap();
        }
        buf
    }

    /// Parses a model file. `max_iters` and `tol` are not stored and come
    /// back as the defaults.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        check_magic(&mut cur, MODEL_MAGIC)?;
        let version = read_u16(&mut cur)?;
        if version != MODEL_VERSION {
            return Err(AsgError::UnsupportedVersion(version));
        }
        let mode = CodebookMode::from_byte(read_u8(&mut cur)?)?;
        let _reserved = read_u8(&mut cur)?;
        let v = read_u32(&mut cur)? as usize;
        let d = read_u32(&mut cur)? as usize;
        let k = read_u32(&mut cur)? as usize;
        let m = read_u32(&mut cur)? as usize;
        let seed = read_u64(&mut cur)?;
        let config = AsgConfig::new(v, d, k, m, mode).with_seed(seed);
        config.validate()?;

        let n_floats = config.codebook_rows() * config.segment_dim();
        let expected = 32 + 4 + 4 * n_floats as u64 + 4 + 4 * (v as u64) * (m as u64);
        let found = bytes.len() as u64;
        if found < expected {
            return Err(AsgError::Truncated { expected, found });
        }
        if found > expected {
            return Err(AsgError::TrailingBytes(found - expected));
        }
        check_magic(&mut cur, CODEBOOK_TAG)?;
        let codebooks = read_f32s(&mut cur, n_floats)?;
        check_magic(&mut cur, MAP_TAG)?;
        let ids = read_u32s(&mut cur, v * m)?;
        Self::new(config, codebooks, ids)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
