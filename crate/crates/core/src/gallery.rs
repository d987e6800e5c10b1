//! Exhaustive top-k gallery search over shape, colour or fused scores.
//!
//! A [`Gallery`] is a cheap-to-clone snapshot: records live behind `Arc`s and
//! enrollment copies on write, so a search holding an older snapshot never
//! observes a later enrollment.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matching::{dot, fuse_unchecked, FusionWeights};
use crate::templates::{Modality, Template, VehicleRecord};

pub const GALLERY_FORMAT: &str = "revid-gallery";
pub const GALLERY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "weights", rename_all = "snake_case")]
pub enum SearchMode {
    ShapeOnly,
    ColourOnly,
    Fused(FusionWeights),
}

impl SearchMode {
    pub fn required_modalities(&self) -> &'static [Modality] {
        match self {
            SearchMode::ShapeOnly => &[Modality::Shape],
            SearchMode::ColourOnly => &[Modality::Colour],
            SearchMode::Fused(_) => &[Modality::Shape, Modality::Colour],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SearchMode::ShapeOnly => "shape_only",
            SearchMode::ColourOnly => "colour_only",
            SearchMode::Fused(_) => "fused",
        }
    }
}

/// Sequential or rayon-parallel scan. Both produce identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub record_id: String,
    pub score: f64,
    pub per_modality_scores: BTreeMap<Modality, f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Scored {
    pub idx: usize,
    pub score: f64,
    pub shape: Option<f64>,
    pub colour: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Gallery {
    records: Arc<Vec<Arc<VehicleRecord>>>,
    index: Arc<HashMap<String, usize>>,
    dims: BTreeMap<Modality, usize>,
    snapshot_version: u64,
}

impl PartialEq for Gallery {
    /// Record-for-record equality; snapshot versions are ignored.
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(other.records.iter())
                .all(|(a, b)| a == b)
    }
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = VehicleRecord>,
    {
        let mut g = Gallery::new();
        for r in records {
            g.insert(r)?;
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn snapshot_version(&self) -> u64 {
        self.snapshot_version
    }

    pub fn dims(&self) -> &BTreeMap<Modality, usize> {
        &self.dims
    }

    pub fn dim(&self, modality: Modality) -> Option<usize> {
        self.dims.get(&modality).copied()
    }

    pub fn get(&self, record_id: &str) -> Option<&Arc<VehicleRecord>> {
        self.index.get(record_id).map(|&i| &self.records[i])
    }

    /// Records in enrollment order.
    pub fn records(&self) -> impl ExactSizeIterator<Item = &Arc<VehicleRecord>> {
        self.records.iter()
    }

    /// Returns a new snapshot containing `record`; `self` is left untouched.
    pub fn enroll(&self, record: VehicleRecord) -> Result<Gallery> {
        let mut next = self.clone();
        next.insert(record)?;
        Ok(next)
    }

    /// Enrolls several records atomically: either all go in or none do.
    pub fn enroll_all<I>(&self, records: I) -> Result<Gallery>
    where
        I: IntoIterator<Item = VehicleRecord>,
    {
        let mut next = self.clone();
        for r in records {
            next.insert(r)?;
        }
        Ok(next)
    }

    /// In-place enrollment. Copies shared storage on first write.
    pub fn insert(&mut self, record: VehicleRecord) -> Result<()> {
        record.validate()?;
        if self.index.contains_key(&record.record_id) {
            return Err(Error::DuplicateId(record.record_id));
        }
        let mut new_dims = Vec::new();
        for m in Modality::ALL {
            if let Some(t) = record.template(m) {
                if !t.is_normalized() {
                    return Err(Error::NotNormalized);
                }
                match self.dims.get(&m) {
                    Some(&d) if d != t.dim() => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            found: t.dim(),
                        })
                    }
                    Some(_) => {}
                    None => new_dims.push((m, t.dim())),
                }
            }
        }
        self.dims.extend(new_dims);
        let idx = self.records.len();
        Arc::make_mut(&mut self.index).insert(record.record_id.clone(), idx);
        Arc::make_mut(&mut self.records).push(Arc::new(record));
        self.snapshot_version += 1;
        Ok(())
    }

    fn check_probe(&self, probe: &VehicleRecord, mode: &SearchMode) -> Result<()> {
        if let SearchMode::Fused(w) = mode {
            w.validate()?;
        }
        for &m in mode.required_modalities() {
            let t = probe.template(m).ok_or(Error::MissingProbeTemplate(m))?;
            check_probe_template(t, m, self.dim(m))?;
        }
        Ok(())
    }

    pub(crate) fn score_one(
        &self,
        probe: &VehicleRecord,
        idx: usize,
        mode: &SearchMode,
    ) -> Option<Scored> {
        let rec = &self.records[idx];
        let score_of = |m: Modality| -> Option<f64> {
            let g = rec.template(m)?;
            let p = probe.template(m)?;
            Some(dot(p.values(), g.values()))
        };
        match mode {
            SearchMode::ShapeOnly => score_of(Modality::Shape).map(|s| Scored {
                idx,
                score: s,
                shape: Some(s),
                colour: None,
            }),
            SearchMode::ColourOnly => score_of(Modality::Colour).map(|c| Scored {
                idx,
                score: c,
                shape: None,
                colour: Some(c),
            }),
            SearchMode::Fused(w) => {
                let s = score_of(Modality::Shape)?;
                let c = score_of(Modality::Colour)?;
                Some(Scored {
                    idx,
                    score: fuse_unchecked(s, c, w) + 0.0,
                    shape: Some(s),
                    colour: Some(c),
                })
            }
        }
    }

    fn scan<F>(&self, exec: Execution, f: F) -> Vec<Scored>
    where
        F: Fn(usize) -> Option<Scored> + Sync + Send,
    {
        match exec {
            Execution::Sequential => (0..self.records.len()).filter_map(f).collect(),
            Execution::Parallel => (0..self.records.len())
                .into_par_iter()
                .filter_map(f)
                .collect(),
        }
    }

    fn rank(&self, mut scored: Vec<Scored>, k: usize) -> Vec<RankedResult> {
        let cmp = |a: &Scored, b: &Scored| -> Ordering {
            b.score.total_cmp(&a.score).then_with(|| {
                self.records[a.idx]
                    .record_id
                    .cmp(&self.records[b.idx].record_id)
            })
        };
        if k < scored.len() {
            if k == 0 {
                scored.clear();
            } else {
                scored.select_nth_unstable_by(k - 1, cmp);
                scored.truncate(k);
            }
        }
        scored.sort_unstable_by(cmp);
        scored
            .into_iter()
            .enumerate()
            .map(|(i, s)| RankedResult {
                record_id: self.records[s.idx].record_id.clone(),
                score: s.score,
                per_modality_scores: s
                    .shape
                    .map(|v| (Modality::Shape, v))
                    .into_iter()
                    .chain(s.colour.map(|v| (Modality::Colour, v)))
                    .collect(),
                rank: i + 1,
            })
            .collect()
    }

    /// Top-`k` records for one probe. Scores descend; ties go to the smaller
    /// `record_id`.
    pub fn search(
        &self,
        probe: &VehicleRecord,
        mode: &SearchMode,
        k: usize,
    ) -> Result<Vec<RankedResult>> {
        self.search_with(probe, mode, k, Execution::Parallel)
    }

    pub fn search_with(
        &self,
        probe: &VehicleRecord,
        mode: &SearchMode,
        k: usize,
        exec: Execution,
    ) -> Result<Vec<RankedResult>> {
        if self.is_empty() {
            return Err(Error::EmptyGallery);
        }
        self.check_probe(probe, mode)?;
        let scored = self.scan(exec, |i| self.score_one(probe, i, mode));
        Ok(self.rank(scored, k))
    }

    /// Top-`k` records where each record's score is the maximum over all probes.
    pub fn multi_probe_search<P>(
        &self,
        probes: &[P],
        mode: &SearchMode,
        k: usize,
    ) -> Result<Vec<RankedResult>>
    where
        P: AsRef<VehicleRecord> + Sync,
    {
        self.multi_probe_search_with(probes, mode, k, Execution::Parallel)
    }

    pub fn multi_probe_search_with<P>(
        &self,
        probes: &[P],
        mode: &SearchMode,
        k: usize,
        exec: Execution,
    ) -> Result<Vec<RankedResult>>
    where
        P: AsRef<VehicleRecord> + Sync,
    {
        if probes.is_empty() {
            return Err(Error::EmptyProbeSet);
        }
        if self.is_empty() {
            return Err(Error::EmptyGallery);
        }
        for p in probes {
            self.check_probe(p.as_ref(), mode)?;
        }
        let scored = self.scan(exec, |i| {
            let mut best: Option<Scored> = None;
            for p in probes {
                if let Some(s) = self.score_one(p.as_ref(), i, mode) {
                    if best.is_none_or(|b| s.score > b.score) {
                        best = Some(s);
                    }
                }
            }
            best
        });
        Ok(self.rank(scored, k))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Gallery> {
        let file = fs::File::open(path)?;
        Gallery::read_from(BufReader::new(file))
    }

    /// Header line, then one record JSON per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut body = Vec::new();
        for r in self.records.iter() {
            serde_json::to_writer(&mut body, r.as_ref())
                .map_err(|e| Error::Format(e.to_string()))?;
            body.push(b'\n');
        }
        let header = GalleryHeader {
            format: GALLERY_FORMAT.into(),
            version: GALLERY_FORMAT_VERSION,
            dims: self.dims.clone(),
            checksum: hex::encode(Sha256::digest(&body)),
        };
        serde_json::to_writer(&mut out, &header).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(b"\n")?;
        out.write_all(&body)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<Gallery> {
        let mut header_line = String::new();
        input.read_line(&mut header_line)?;
        let header: GalleryHeader = serde_json::from_str(header_line.trim_end())
            .map_err(|e| Error::Format(format!("gallery header: {e}")))?;
        if header.format != GALLERY_FORMAT {
            return Err(Error::Format(format!(
                "unexpected format `{}`",
                header.format
            )));
        }
        if header.version != GALLERY_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported gallery version {}",
                header.version
            )));
        }
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        let checksum = hex::encode(Sha256::digest(&body));
        if checksum != header.checksum {
            return Err(Error::Format("gallery checksum mismatch".into()));
        }
        let text = std::str::from_utf8(&body)
            .map_err(|e| Error::Format(format!("gallery body is not UTF-8: {e}")))?;

        let mut g = Gallery::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: VehicleRecord = serde_json::from_str(line).map_err(|e| Error::Line {
                line: i + 2,
                message: e.to_string(),
            })?;
            if !seen.insert(rec.record_id.clone()) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate record_id `{}` in gallery file",
                    rec.record_id
                )));
            }
            g.insert(rec).map_err(|e| match e {
                Error::Io(_) => e,
                other => Error::InvariantViolation(format!("line {}: {other}", i + 2)),
            })?;
        }
        for (m, d) in &header.dims {
            if g.dims.get(m).is_some_and(|actual| actual != d) {
                return Err(Error::InvariantViolation(format!(
                    "header declares {m} dim {d}, records carry {}",
                    g.dims[m]
                )));
            }
        }
        g.dims.extend(header.dims);
        Ok(g)
    }
}

fn check_probe_template(t: &Template, m: Modality, gallery_dim: Option<usize>) -> Result<()> {
    if t.modality() != m {
        return Err(Error::ModalityMismatch {
            expected: m,
            found: t.modality(),
        });
    }
    if !t.is_normalized() {
        return Err(Error::NotNormalized);
    }
    if let Some(d) = gallery_dim {
        if d != t.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: t.dim(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct GalleryHeader {
    format: String,
    version: u32,
    dims: BTreeMap<Modality, usize>,
    checksum: String,
}
