//! Embedding gallery and k-NN identification with open-set rejection.
//!
//! Vectors are L2-normalized on the way in, so Euclidean distance between any
//! two stored vectors lies in `[0, 2]`.
//!
//! The gallery persists as JSON lines: a header object `{"dim","k","tau"}`
//! followed by one `{"subject_id","vector","enrolled_at"}` object per record.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 512;
const ZERO_NORM: f64 = 1e-12;
const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentityError {
    #[error("vector norm is zero")]
    ZeroVector,
    #[error("vector has {got} dimensions, gallery expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("subject id must be non-empty")]
    EmptySubjectId,
    #[error("invalid gallery parameters: {0}")]
    InvalidParams(String),
    #[error("corrupt gallery record at line {line}: {reason}")]
    CorruptLine { line: usize, reason: String },
    #[error("gallery header mismatch at line {line}: {reason}")]
    HeaderMismatch { line: usize, reason: String },
    #[error("gallery io error: {0}")]
    Io(String),
}

impl IdentityError {
    pub fn name(&self) -> &'static str {
        match self {
            IdentityError::ZeroVector => "ZeroVector",
            IdentityError::DimensionMismatch { .. } => "DimensionMismatch",
            IdentityError::EmptyGallery => "EmptyGallery",
            IdentityError::EmptySubjectId => "EmptySubjectId",
            IdentityError::InvalidParams(_) => "InvalidParams",
            IdentityError::CorruptLine { .. } => "CorruptLine",
            IdentityError::HeaderMismatch { .. } => "HeaderMismatch",
            IdentityError::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for IdentityError {
    fn from(e: std::io::Error) -> Self {
        IdentityError::Io(e.to_string())
    }
}

/// Scales `v` to unit Euclidean norm.
pub fn normalize_embedding(v: &[f64]) -> Result<Vec<f64>, IdentityError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(IdentityError::ZeroVector);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.is_empty() || norm < ZERO_NORM {
        return Err(IdentityError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GalleryParams {
    pub k: usize,
    /// Largest nearest-neighbour distance still accepted as a known subject.
    pub tau: f64,
}

impl Default for GalleryParams {
    fn default() -> Self {
        GalleryParams { k: 5, tau: 1.0 }
    }
}

impl GalleryParams {
    fn validate(&self) -> Result<(), IdentityError> {
        if self.k == 0 {
            return Err(IdentityError::InvalidParams("k must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 2.0) {
            return Err(IdentityError::InvalidParams(format!("tau {} not in (0, 2]", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub subject_id: String,
    pub vector: Vec<f64>,
    /// Unix seconds; informational only.
    pub enrolled_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GalleryHeader {
    dim: usize,
    k: usize,
    tau: f64,
}

/// Result of matching one probe. `decision` is `None` for an unknown subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityMatch {
    pub decision: Option<String>,
    pub nearest_distance: f64,
    pub votes: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGallery {
    dim: usize,
    params: GalleryParams,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingGallery {
    pub fn new(dim: usize, params: GalleryParams) -> Result<Self, IdentityError> {
        if dim == 0 {
            return Err(IdentityError::InvalidParams("dimension must be at least 1".into()));
        }
        params.validate()?;
        Ok(EmbeddingGallery { dim, params, records: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> GalleryParams {
        self.params
    }

    pub fn set_params(&mut self, params: GalleryParams) -> Result<(), IdentityError> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), IdentityError> {
        if v.len() != self.dim {
            return Err(IdentityError::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        Ok(())
    }

    pub fn enroll(&mut self, subject_id: &str, v: &[f64]) -> Result<(), IdentityError> {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.enroll_at(subject_id, v, now)
    }

    pub fn enroll_at(&mut self, subject_id: &str, v: &[f64], enrolled_at: u64) -> Result<(), IdentityError> {
        if subject_id.is_empty() {
            return Err(IdentityError::EmptySubjectId);
        }
        self.check_dim(v)?;
        let vector = normalize_embedding(v)?;
        self.records.push(EmbeddingRecord { subject_id: subject_id.to_string(), vector, enrolled_at });
        Ok(())
    }

    /// k-NN vote over the `k` nearest records (clipped to the gallery size).
    ///
    /// Ties on vote count go to the subject with the smaller mean distance among
    /// its voting neighbours, then to the lexicographically smaller id. The
    /// decision is unknown when the nearest record is farther than `tau`.
    pub fn identify(&self, probe: &[f64]) -> Result<IdentityMatch, IdentityError> {
        if self.records.is_empty() {
            return Err(IdentityError::EmptyGallery);
        }
        self.check_dim(probe)?;
        let probe = normalize_embedding(probe)?;

        let mut ranked: Vec<(f64, &str)> =
            self.records.iter().map(|r| (euclidean(&probe, &r.vector), r.subject_id.as_str())).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        ranked.truncate(self.params.k.min(self.records.len()));

        let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        for &(d, id) in &ranked {
            let entry = tally.entry(id).or_insert((0, 0.0));
            entry.0 += 1;
            entry.1 += d;
        }
        // BTreeMap iteration is id-ordered, so the strict comparison keeps the smaller id.
        let mut best: Option<(&str, usize, f64)> = None;
        for (&id, &(count, sum)) in &tally {
            let mean = sum / count as f64;
            let better = match best {
                None => true,
                Some((_, bc, bm)) => count > bc || (count == bc && mean < bm),
            };
            if better {
                best = Some((id, count, mean));
            }
        }

        let nearest_distance = ranked[0].0;
        let decision = best.filter(|_| nearest_distance <= self.params.tau).map(|(id, _, _)| id.to_string());
        let votes = tally.into_iter().map(|(id, (count, _))| (id.to_string(), count)).collect();
        Ok(IdentityMatch { decision, nearest_distance, votes })
    }

    pub fn to_jsonl(&self) -> String {
        let header = GalleryHeader { dim: self.dim, k: self.params.k, tau: self.params.tau };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a gallery document. Line numbers are 1-based; blank lines are skipped.
    pub fn from_jsonl(document: &str) -> Result<Self, IdentityError> {
        let mut lines = document.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
        let (line, text) = lines
            .next()
            .ok_or_else(|| IdentityError::HeaderMismatch { line: 1, reason: "missing header".into() })?;
        let header: GalleryHeader = serde_json::from_str(text)
            .map_err(|e| IdentityError::HeaderMismatch { line, reason: e.to_string() })?;
        let mut gallery = EmbeddingGallery::new(header.dim, GalleryParams { k: header.k, tau: header.tau })
            .map_err(|e| IdentityError::HeaderMismatch { line, reason: e.to_string() })?;

        for (line, text) in lines {
            let record: EmbeddingRecord =
                serde_json::from_str(text).map_err(|e| IdentityError::CorruptLine { line, reason: e.to_string() })?;
            if record.subject_id.is_empty() {
                return Err(IdentityError::CorruptLine { line, reason: "empty subject_id".into() });
            }
            if record.vector.len() != gallery.dim {
                return Err(IdentityError::HeaderMismatch {
                    line,
                    reason: format!("record has {} dimensions, header says {}", record.vector.len(), gallery.dim),
                });
            }
            let norm = record.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
                return Err(IdentityError::CorruptLine { line, reason: format!("vector norm {norm} is not 1") });
            }
            gallery.records.push(record);
        }
        Ok(gallery)
    }

    pub fn load(path: &Path) -> Result<Self, IdentityError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }

    /// Writes to a temporary file in the destination directory, then renames it
    /// over `path`.
    pub fn save(&self, path: &Path) -> Result<(), IdentityError> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(self.to_jsonl().as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| IdentityError::Io(e.error.to_string()))?;
        Ok(())
    }
}
