//! Embedding matrices, vocabularies and their on-disk formats.
//!
//! The canonical container is ASGE:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ASGE"
//! 4       2     version (u16 = 1)
//! 6       2     reserved (u16 = 0)
//! 8       4     V (u32, rows)
//! 12      4     D (u32, cols)
//! 16      4·V·D f32 payload, row-major
//! ```
//!
//! Every integer and float is little-endian.

use std::collections::HashMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{AsgError, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"ASGE";
pub const EMBEDDING_VERSION: u16 = 1;
const HEADER_LEN: u64 = 16;

/// Dense row-major `V × D` matrix of token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix, rejecting empty shapes, length mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(AsgError::Shape(format!(
                "embedding matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(AsgError::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(AsgError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Assembles a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(AsgError::Shape(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.cols)
    }

    /// Serializes to the ASGE byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN as usize + 4 * self.data.len());
        buf.extend_from_slice(EMBEDDING_MAGIC);
        buf.write_u16::<LittleEndian>(EMBEDDING_VERSION).unwrap();
        buf.write_u16::<LittleEndian>(0).unwrap();
        buf.write_u32::<LittleEndian>(self.rows as u32).unwrap();
        buf.write_u32::<LittleEndian>(self.cols as u32).unwrap();
        write_f32s(&mut buf, &self.data);
        buf
    }

    /// Parses an ASGE byte buffer.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        check_magic(&mut cur, EMBEDDING_MAGIC)?;
        let version = read_u16(&mut cur)?;
        if version != EMBEDDING_VERSION {
            return Err(AsgError::UnsupportedVersion(version));
        }
        let _reserved = read_u16(&mut cur)?;
        let rows = read_u32(&mut cur)? as usize;
        let cols = read_u32(&mut cur)? as usize;
        let expected = HEADER_LEN + 4 * (rows as u64) * (cols as u64);
        let found = bytes.len() as u64;
        if found < expected {
            return Err(AsgError::Truncated { expected, found });
        }
        if found > expected {
            return Err(AsgError::TrailingBytes(found - expected));
        }
        let data = read_f32s(&mut cur, rows * cols)?;
        Self::new(rows, cols, data)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::from_bytes(&fs::read(path)?)
}

pub fn save_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, matrix.to_bytes())?;
    Ok(())
}

/// Parses comma-separated rows of floats. Blank lines are skipped.
pub fn parse_csv(text: &str) -> Result<EmbeddingMatrix> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f32>().map_err(|e| AsgError::Csv {
                    line: i + 1,
                    msg: format!("{field:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f32>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(AsgError::Csv {
                    line: i + 1,
                    msg: format!("{} fields, expected {first}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    EmbeddingMatrix::from_rows(&rows)
}

/// Converts a CSV fixture into an ASGE file.
pub fn import_csv(input: impl AsRef<Path>, output: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let text = String::from_utf8(fs::read(input)?)?;
    let matrix = parse_csv(&text)?;
    save_embeddings(&matrix, output)?;
    Ok(matrix)
}

/// Ordered token strings with reverse lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(AsgError::DuplicateToken {
                    token: tok.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, t: usize) -> Option<&str> {
        self.tokens.get(t).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let text = String::from_utf8(bytes)?;
        let mut lines: Vec<String> = text.split('\n').map(str::to_owned).collect();
        // LF-terminated: the split leaves one empty tail.
        if lines.last().is_some_and(String::is_empty) {
            lines.pop();
        }
        Self::new(lines)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for tok in &self.tokens {
            out.extend_from_slice(tok.as_bytes());
            out.push(b'\n');
        }
        out
    }
}

pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocab> {
    Vocab::from_bytes(fs::read(path)?)
}

pub fn save_vocab(vocab: &Vocab, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, vocab.to_bytes())?;
    Ok(())
}

/// Parameters of a Gaussian-blob embedding generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_clusters: usize,
    pub vocab_size: usize,
    pub dim: usize,
    /// Within-cluster standard deviation.
    pub spread: f32,
    pub seed: u64,
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub embeddings: EmbeddingMatrix,
    /// Cluster index of each token.
    pub labels: Vec<usize>,
    /// `n_clusters × D` row-major cluster centers.
    pub centers: Vec<f32>,
}

/// Draws `n_clusters` centers uniformly from `[-1, 1)^D`, then emits token `t`
/// as center `t mod n_clusters` plus isotropic Gaussian noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let SyntheticSpec {
        n_clusters,
        vocab_size,
        dim,
        spread,
        seed,
    } = *spec;
    if n_clusters == 0 || n_clusters > vocab_size {
        return Err(AsgError::InvalidArgument(format!(
            "n_clusters must be in 1..={vocab_size}, got {n_clusters}"
        )));
    }
    if dim == 0 {
        return Err(AsgError::InvalidArgument("dim must be >= 1".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(AsgError::InvalidArgument(format!(
            "spread must be finite and >= 0, got {spread}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f32> = (0..n_clusters * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    let labels: Vec<usize> = (0..vocab_size).map(|t| t % n_clusters).collect();

    let mut data = Vec::with_capacity(vocab_size * dim);
    for &c in &labels {
        data.extend_from_slice(&centers[c * dim..(c + 1) * dim]);
    }
    if spread > 0.0 {
        let noise = Normal::new(0.0f32, spread)
            .map_err(|e| AsgError::InvalidArgument(format!("spread: {e}")))?;
        for v in data.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }

    Ok(SyntheticData {
        embeddings: EmbeddingMatrix::new(vocab_size, dim, data)?,
        labels,
        centers,
    })
}

pub(crate) fn write_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    buf.reserve(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn read_f32s(cur: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<f32>> {
    let mut out = vec![0f32; n];
    cur.read_f32_into::<LittleEndian>(&mut out)
        .map_err(|_| truncated(cur, 4 * n as u64))?;
    Ok(out)
}

pub(crate) fn read_u32s(cur: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<u32>> {
    let mut out = vec![0u32; n];
    cur.read_u32_into::<LittleEndian>(&mut out)
        .map_err(|_| truncated(cur, 4 * n as u64))?;
    Ok(out)
}

pub(crate) fn check_magic(cur: &mut Cursor<&[u8]>, expected: &[u8; 4]) -> Result<()> {
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(|_| truncated(cur, 4))?;
    if &magic != expected {
        return Err(AsgError::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    Ok(())
}

pub(crate) fn read_u8(cur: &mut Cursor<&[u8]>) -> Result<u8> {
    cur.read_u8().map_err(|_| truncated(cur, 1))
}

pub(crate) fn read_u16(cur: &mut Cursor<&[u8]>) -> Result<u16> {
    cur.read_u16::<LittleEndian>()
        .map_err(|_| truncated(cur, 2))
}

pub(crate) fn read_u32(cur: &mut Cursor<&[u8]>) -> Result<u32> {
    cur.read_u32::<LittleEndian>()
        .map_err(|_| truncated(cur, 4))
}

pub(crate) fn read_u64(cur: &mut Cursor<&[u8]>) -> Result<u64> {
    cur.read_u64::<LittleEndian>()
        .map_err(|_| truncated(cur, 8))
}

pub(crate) fn write_header_u32s(buf: &mut Vec<u8>, values: &[u32]) {
    for v in values {
        buf.write_u32::<LittleEndian>(*v).unwrap();
    }
}

fn truncated(cur: &Cursor<&[u8]>, wanted: u64) -> AsgError {
    AsgError::Truncated {
        expected: cur.position() + wanted,
        found: cur.get_ref().len() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_three_round_trip() {
        let m = EmbeddingMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.rows(), 2);
        assert_eq!(back.cols(), 3);
        assert_eq!(back.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn one_by_one_file_is_header_plus_one_float() {
        let m = EmbeddingMatrix::new(1, 1, vec![0.0]).unwrap();
        assert_eq!(m.to_bytes().len(), 20);
    }

    #[test]
    fn two_by_two_layout_on_disk() {
        let m = EmbeddingMatrix::new(2, 2, vec![1.0, -2.0, 0.5, 3.25]).unwrap();
        let bytes = m.to_bytes();
        let expected: Vec<u8> = [
            &b"ASGE"[..],
            &[1, 0, 0, 0],
            &[2, 0, 0, 0],
            &[2, 0, 0, 0],
            &[0x00, 0x00, 0x80, 0x3f], // 1.0
            &[0x00, 0x00, 0x00, 0xc0], // -2.0
            &[0x00, 0x00, 0x00, 0x3f], // 0.5
            &[0x00, 0x00, 0x50, 0x40], // 3.25
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn short_payload_is_truncation() {
        let m = EmbeddingMatrix::new(2, 3, vec![0.0; 6]).unwrap();
        let mut bytes = m.to_bytes();
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes),
            Err(AsgError::Truncated { .. })
        ));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = EmbeddingMatrix::new(1, 1, vec![0.0]).unwrap().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes),
            Err(AsgError::BadMagic { .. })
        ));
    }

    #[test]
    fn non_finite_names_row() {
        let mut bytes = EmbeddingMatrix::new(3, 2, vec![0.0; 6]).unwrap().to_bytes();
        bytes[16 + 4 * 5..16 + 4 * 6].copy_from_slice(&f32::NAN.to_le_bytes());
        match EmbeddingMatrix::from_bytes(&bytes) {
            Err(AsgError::NonFinite { row, col }) => assert_eq!((row, col), (2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_embeddings("/definitely/not/here.asge").unwrap_err();
        assert!(matches!(err, AsgError::Io(_)));
    }

    #[test]
    fn vocab_lookup() {
        let v = Vocab::from_bytes(b"father\nmother\n".to_vec()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.index("mother"), Some(1));
        assert_eq!(v.token(0), Some("father"));
    }

    #[test]
    fn vocab_duplicate_rejected() {
        assert!(matches!(
            Vocab::from_bytes(b"a\na\n".to_vec()),
            Err(AsgError::DuplicateToken { line: 2, .. })
        ));
    }

    #[test]
    fn vocab_invalid_utf8_rejected() {
        assert!(matches!(
            Vocab::from_bytes(vec![0xff, b'\n']),
            Err(AsgError::InvalidUtf8(_))
        ));
    }

    #[test]
    fn vocab_at_xlmr_scale() {
        let text: String = (0..250_000).map(|i| format!("tok{i}\n")).collect();
        let v = Vocab::from_bytes(text.into_bytes()).unwrap();
        assert_eq!(v.len(), 250_000);
        assert_eq!(v.index("tok249999"), Some(249_999));
    }

    #[test]
    fn csv_import() {
        let m = parse_csv("1, 2\n\n3,4\n").unwrap();
        assert_eq!(m.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            parse_csv("1,2\n3\n"),
            Err(AsgError::Csv { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("1,x\n"),
            Err(AsgError::Csv { line: 1, .. })
        ));
    }

    #[test]
    fn synthetic_zero_spread_repeats_centers() {
        let spec = SyntheticSpec {
            n_clusters: 4,
            vocab_size: 16,
            dim: 5,
            spread: 0.0,
            seed: 3,
        };
        let data = generate_synthetic(&spec).unwrap();
        let mut distinct: Vec<&[f32]> = data.embeddings.iter_rows().collect();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        assert_eq!(distinct.len(), 4);
        for (t, row) in data.embeddings.iter_rows().enumerate() {
            let c = data.labels[t];
            assert_eq!(row, &data.centers[c * 5..(c + 1) * 5]);
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            n_clusters: 3,
            vocab_size: 30,
            dim: 4,
            spread: 0.3,
            seed: 11,
        };
        assert_eq!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&spec).unwrap()
        );
    }

    #[test]
    fn synthetic_clusters_are_separated() {
        let spec = SyntheticSpec {
            n_clusters: 8,
            vocab_size: 512,
            dim: 64,
            spread: 0.1,
            seed: 5,
        };
        let data = generate_synthetic(&spec).unwrap();
        let e = &data.embeddings;
        let (mut within, mut nw, mut between, mut nb) = (0f64, 0u64, 0f64, 0u64);
        for a in 0..e.rows() {
            for b in (a + 1)..e.rows() {
                let d: f64 = e
                    .row(a)
                    .iter()
                    .zip(e.row(b))
                    .map(|(x, y)| ((x - y) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if data.labels[a] == data.labels[b] {
                    within += d;
                    nw += 1;
                } else {
                    between += d;
                    nb += 1;
                }
            }
        }
        assert!(within / nw as f64 * 2.0 < between / nb as f64);
    }

    #[test]
    fn synthetic_rejects_too_many_clusters() {
        let spec = SyntheticSpec {
            n_clusters: 5,
            vocab_size: 4,
            dim: 2,
            spread: 0.0,
            seed: 0,
        };
        assert!(generate_synthetic(&spec).is_err());
    }
}
