//! Verification (ROC) and identification (CMC) metrics, dataset manifests,
//! and the gallery/probe protocol runner.
//!
//! Thresholds follow the `score >= threshold` convention and are taken at the
//! observed scores, so curves are step functions without interpolation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gallery::{Execution, Gallery, RankedResult, SearchMode};
use crate::matching::{dot, FusionWeights};
use crate::templates::{Modality, VehicleRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    pub score: f64,
    pub is_genuine: bool,
    pub probe_id: String,
    pub gallery_id: String,
}

mod threshold_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad threshold `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    pub far: f64,
    pub vr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Sorted by threshold descending, hence FAR and VR ascending.
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Highest VR among operating points with `far <= max_far`.
    pub fn vr_at_far(&self, max_far: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.far <= max_far)
            .map(|p| p.vr)
            .fold(0.0, f64::max)
    }
}

pub fn compute_roc(samples: &[ScoreSample]) -> Result<RocCurve> {
    let n_gen = samples.iter().filter(|s| s.is_genuine).count();
    let n_imp = samples.len() - n_gen;
    if n_gen == 0 || n_imp == 0 {
        return Err(Error::MissingClass);
    }
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::NonFinite(format!(
            "score for ({}, {})",
            s.probe_id, s.gallery_id
        )));
    }
    let mut order: Vec<(f64, bool)> = samples.iter().map(|s| (s.score, s.is_genuine)).collect();
    order.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::with_capacity(order.len() + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        vr: 0.0,
    });
    let (mut gen_acc, mut imp_acc) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = order[i].0;
        while i < order.len() && order[i].0 == t {
            if order[i].1 {
                gen_acc += 1;
            } else {
                imp_acc += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: imp_acc as f64 / n_imp as f64,
            vr: gen_acc as f64 / n_gen as f64,
        });
    }
    Ok(RocCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    /// Entry `k - 1` is the fraction of probes whose mate ranks at most `k`.
    pub rank_rates: Vec<f64>,
    pub n_probes: usize,
}

impl CmcCurve {
    /// Rate at 1-based `rank`, saturating at the last computed entry.
    pub fn rank(&self, rank: usize) -> f64 {
        if self.rank_rates.is_empty() || rank == 0 {
            return 0.0;
        }
        self.rank_rates[rank.min(self.rank_rates.len()) - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSearch {
    pub probe_id: String,
    pub true_gallery_id: String,
    pub results: Vec<RankedResult>,
    /// The list was cut at some `k`; a missing mate then ranks beyond it.
    #[serde(default)]
    pub truncated: bool,
}

pub fn compute_cmc(searches: &[RankedSearch], max_rank: usize) -> Result<CmcCurve> {
    if searches.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let mut hits = vec![0usize; max_rank];
    for s in searches {
        let rank = s
            .results
            .iter()
            .find(|r| r.record_id == s.true_gallery_id)
            .map(|r| r.rank);
        match rank {
            Some(r) if r >= 1 && r <= max_rank => hits[r - 1] += 1,
            Some(_) => {}
            None if s.truncated => {}
            None => {
                return Err(Error::MateMissing {
                    probe: s.probe_id.clone(),
                    mate: s.true_gallery_id.clone(),
                })
            }
        }
    }
    let n = searches.len() as f64;
    let mut acc = 0usize;
    let rank_rates = hits
        .into_iter()
        .map(|h| {
            acc += h;
            acc as f64 / n
        })
        .collect();
    Ok(CmcCurve {
        rank_rates,
        n_probes: searches.len(),
    })
}

/// `100 · (new − baseline) / (100 − baseline)`: the share of the baseline's
/// error that the new rate removes, in percent.
pub fn error_reduction(baseline_rate_pct: f64, new_rate_pct: f64) -> Result<f64> {
    for r in [baseline_rate_pct, new_rate_pct] {
        if !(0.0..=100.0).contains(&r) {
            return Err(Error::InvalidRate(format!("{r} outside [0, 100]")));
        }
    }
    if baseline_rate_pct >= 100.0 {
        return Err(Error::InvalidRate("baseline must be below 100".into()));
    }
    Ok(100.0 * (new_rate_pct - baseline_rate_pct) / (100.0 - baseline_rate_pct))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedResult {
    pub method: &'static str,
    pub dataset: &'static str,
    pub rank1: f64,
    pub rank5: f64,
}

/// Published Rank-1/Rank-5 (percent) on the two standard benchmarks, kept for
/// report rendering only.
pub const PUBLISHED_RESULTS: [PublishedResult; 8] = [
    PublishedResult {
        method: "OIFE (single branch)",
        dataset: "VehicleID",
        rank1: 32.86,
        rank5: 52.75,
    },
    PublishedResult {
        method: "Siamese-Visual",
        dataset: "VehicleID",
        rank1: 36.83,
        rank5: 57.97,
    },
    PublishedResult {
        method: "MSVF",
        dataset: "VehicleID",
        rank1: 63.02,
        rank5: 73.05,
    },
    PublishedResult {
        method: "CNN2 (method 1)",
        dataset: "VehicleID",
        rank1: 65.82,
        rank5: 77.25,
    },
    PublishedResult {
        method: "OIFE (single branch)",
        dataset: "VRIC",
        rank1: 24.62,
        rank5: 50.98,
    },
    PublishedResult {
        method: "Siamese-Visual",
        dataset: "VRIC",
        rank1: 30.55,
        rank5: 57.30,
    },
    PublishedResult {
        method: "MSVF",
        dataset: "VRIC",
        rank1: 46.61,
        rank5: 65.58,
    },
    PublishedResult {
        method: "CNN2 (method 1)",
        dataset: "VRIC",
        rank1: 55.14,
        rank5: 75.13,
    },
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub ids: usize,
    pub images: usize,
    /// JSON-lines record file, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
}

impl Split {
    pub fn counts(ids: usize, images: usize) -> Self {
        Split {
            ids,
            images,
            records: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// Exactly one gallery image per identity.
    #[serde(default = "default_true")]
    pub single_shot: bool,
    pub training: Split,
    pub probe: Split,
    pub gallery: Split,
}

fn default_true() -> bool {
    true
}

/// Reference splits of the two standard benchmarks.
pub const REFERENCE_SPLITS: [(&str, [(usize, usize); 3]); 2] = [
    (
        "VehicleID",
        [(13_164, 113_346), (2_400, 17_377), (2_400, 2_400)],
    ),
    ("VRIC", [(2_811, 54_808), (2_811, 2_811), (2_811, 2_811)]),
];

impl DatasetManifest {
    pub fn vehicle_id() -> Self {
        Self::reference("VehicleID").expect("reference split exists")
    }

    pub fn vric() -> Self {
        Self::reference("VRIC").expect("reference split exists")
    }

    fn reference(name: &str) -> Option<Self> {
        REFERENCE_SPLITS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, [t, p, g])| DatasetManifest {
                name: n.to_string(),
                single_shot: true,
                training: Split::counts(t.0, t.1),
                probe: Split::counts(p.0, p.1),
                gallery: Split::counts(g.0, g.1),
            })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    /// Structural checks on the declared counts.
    pub fn validate(&self) -> Result<()> {
        let violation = |m: String| Err(Error::ManifestViolation(format!("{}: {m}", self.name)));
        for (split, s) in [
            ("training", &self.training),
            ("probe", &self.probe),
            ("gallery", &self.gallery),
        ] {
            if s.ids > s.images {
                return violation(format!("{split} has {} ids but {} images", s.ids, s.images));
            }
            if (s.ids == 0) != (s.images == 0) {
                return violation(format!("{split} has {} ids but {} images", s.ids, s.images));
            }
        }
        if self.probe.images == 0 || self.gallery.images == 0 {
            return violation("probe and gallery splits must be non-empty".into());
        }
        if self.probe.ids > self.gallery.ids {
            return violation(format!(
                "{} probe identities cannot all have mates among {} gallery identities",
                self.probe.ids, self.gallery.ids
            ));
        }
        if self.single_shot && self.gallery.ids != self.gallery.images {
            return violation(format!(
                "single-shot gallery needs one image per identity, got {} ids / {} images",
                self.gallery.ids, self.gallery.images
            ));
        }
        Ok(())
    }

    /// [`validate`](Self::validate), plus exact agreement with the reference
    /// split for manifests named after a standard benchmark.
    pub fn validate_reference(&self) -> Result<()> {
        self.validate()?;
        let Some((name, splits)) = REFERENCE_SPLITS
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(&self.name))
        else {
            return Ok(());
        };
        let actual = [&self.training, &self.probe, &self.gallery];
        for ((label, want), got) in ["training", "probe", "gallery"]
            .iter()
            .zip(splits)
            .zip(actual)
        {
            if (got.ids, got.images) != *want {
                return Err(Error::ManifestViolation(format!(
                    "{name} {label} split must be {} / {}, got {} / {}",
                    want.0, want.1, got.ids, got.images
                )));
            }
        }
        Ok(())
    }

    /// Checks the declared counts against actual gallery and probe records.
    pub fn validate_records<G, P>(&self, gallery: &[G], probes: &[P]) -> Result<()>
    where
        G: AsRef<VehicleRecord>,
        P: AsRef<VehicleRecord>,
    {
        self.validate()?;
        let gallery_ids = identity_counts("gallery", gallery.iter().map(AsRef::as_ref))?;
        let probe_ids = identity_counts("probe", probes.iter().map(AsRef::as_ref))?;
        if self.single_shot {
            if let Some((id, n)) = gallery_ids.iter().find(|(_, &n)| n > 1) {
                return Err(Error::ManifestViolation(format!(
                    "single-shot gallery holds {n} records of identity `{id}`"
                )));
            }
        }
        let check = |split: &str, declared: &Split, ids: usize, images: usize| {
            if declared.ids != ids || declared.images != images {
                return Err(Error::ManifestViolation(format!(
                    "{split} declares {} ids / {} images, records give {ids} / {images}",
                    declared.ids, declared.images
                )));
            }
            Ok(())
        };
        check("gallery", &self.gallery, gallery_ids.len(), gallery.len())?;
        check("probe", &self.probe, probe_ids.len(), probes.len())?;
        if let Some(id) = probe_ids.keys().find(|id| !gallery_ids.contains_key(*id)) {
            return Err(Error::ManifestViolation(format!(
                "probe identity `{id}` has no gallery mate"
            )));
        }
        Ok(())
    }

    fn resolve(&self, base: &Path, split: &Split, name: &str) -> Result<PathBuf> {
        let rel = split.records.as_ref().ok_or_else(|| {
            Error::ManifestViolation(format!("{name} split lists no record file"))
        })?;
        Ok(base.join(rel))
    }

    pub fn gallery_path(&self, base: &Path) -> Result<PathBuf> {
        self.resolve(base, &self.gallery, "gallery")
    }

    pub fn probe_path(&self, base: &Path) -> Result<PathBuf> {
        self.resolve(base, &self.probe, "probe")
    }
}

fn identity_counts<'a>(
    split: &str,
    records: impl Iterator<Item = &'a VehicleRecord>,
) -> Result<BTreeMap<&'a str, usize>> {
    let mut counts = BTreeMap::new();
    for r in records {
        let id = r.vehicle_id.as_deref().ok_or_else(|| {
            Error::ManifestViolation(format!(
                "{split} record `{}` has no vehicle_id",
                r.record_id
            ))
        })?;
        *counts.entry(id).or_insert(0) += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub cmc: CmcCurve,
    pub roc: RocCurve,
}

impl ProtocolOutcome {
    pub fn rank1(&self) -> f64 {
        self.cmc.rank(1)
    }

    pub fn rank5(&self) -> f64 {
        self.cmc.rank(5)
    }
}

/// One full-ranking search per probe. Pairs sharing a `vehicle_id` are genuine.
pub fn run_protocol(
    manifest: &DatasetManifest,
    g: &Gallery,
    probes: &[VehicleRecord],
    mode: &SearchMode,
    exec: Execution,
) -> Result<ProtocolOutcome> {
    let gallery_records: Vec<&VehicleRecord> = g.records().map(|r| r.as_ref()).collect();
    manifest.validate_records(&gallery_records, probes)?;
    let groups: Vec<(String, Vec<&VehicleRecord>)> = probes
        .iter()
        .map(|p| (p.record_id.clone(), vec![p]))
        .collect();
    evaluate_groups(g, &groups, mode, exec)
}

/// Groups probes by `vehicle_id` (first-appearance order) and scores each
/// gallery record by the maximum over the group.
pub fn run_multi_probe_protocol(
    manifest: &DatasetManifest,
    g: &Gallery,
    probes: &[VehicleRecord],
    mode: &SearchMode,
    exec: Execution,
) -> Result<ProtocolOutcome> {
    let gallery_records: Vec<&VehicleRecord> = g.records().map(|r| r.as_ref()).collect();
    manifest.validate_records(&gallery_records, probes)?;
    evaluate_groups(g, &group_by_identity(probes), mode, exec)
}

pub fn group_by_identity(probes: &[VehicleRecord]) -> Vec<(String, Vec<&VehicleRecord>)> {
    let mut order: Vec<(String, Vec<&VehicleRecord>)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for p in probes {
        let vid = p.vehicle_id.as_deref().unwrap_or(&p.record_id);
        match slot.get(vid) {
            Some(&i) => order[i].1.push(p),
            None => {
                slot.insert(vid, order.len());
                order.push((vid.to_string(), vec![p]));
            }
        }
    }
    order
}

fn evaluate_groups(
    g: &Gallery,
    groups: &[(String, Vec<&VehicleRecord>)],
    mode: &SearchMode,
    exec: Execution,
) -> Result<ProtocolOutcome> {
    let run = |(probe_id, members): &(String, Vec<&VehicleRecord>)| -> Result<(RankedSearch, Vec<ScoreSample>)> {
        let vid = members[0].vehicle_id.as_deref();
        let results = g.multi_probe_search_with(members, mode, usize::MAX, exec)?;
        let mut samples = Vec::with_capacity(results.len());
        let mut mate = None;
        for r in &results {
            let rec = g.get(&r.record_id).expect("ranked records exist");
            let genuine = vid.is_some() && rec.vehicle_id.as_deref() == vid;
            if genuine && mate.is_none() {
                mate = Some(r.record_id.clone());
            }
            samples.push(ScoreSample {
                score: r.score,
                is_genuine: genuine,
                probe_id: probe_id.clone(),
                gallery_id: r.record_id.clone(),
            });
        }
        let mate = mate.ok_or_else(|| {
            Error::ManifestViolation(format!("probe `{probe_id}` has no eligible gallery mate"))
        })?;
        Ok((
            RankedSearch {
                probe_id: probe_id.clone(),
                true_gallery_id: mate,
                results,
                truncated: false,
            },
            samples,
        ))
    };
    let per_probe: Vec<(RankedSearch, Vec<ScoreSample>)> = match exec {
        Execution::Sequential => groups.iter().map(run).collect::<Result<_>>()?,
        Execution::Parallel => groups.par_iter().map(run).collect::<Result<_>>()?,
    };
    let mut searches = Vec::with_capacity(per_probe.len());
    let mut samples = Vec::new();
    for (s, mut smp) in per_probe {
        searches.push(s);
        samples.append(&mut smp);
    }
    let max_rank = searches.iter().map(|s| s.results.len()).max().unwrap_or(0);
    let cmc = compute_cmc(&searches, max_rank)?;
    let roc = compute_roc(&samples)?;
    Ok(ProtocolOutcome { cmc, roc })
}

/// Genuine and impostor `(shape, colour)` score pairs over every probe ×
/// gallery record that both carry shape and colour templates.
pub fn calibration_pairs(g: &Gallery, probes: &[VehicleRecord]) -> (ScorePairs, ScorePairs) {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for p in probes {
        let (Some(ps), Some(pc)) = (p.template(Modality::Shape), p.template(Modality::Colour))
        else {
            continue;
        };
        for r in g.records() {
            let (Some(rs), Some(rc)) = (r.template(Modality::Shape), r.template(Modality::Colour))
            else {
                continue;
            };
            if rs.dim() != ps.dim() || rc.dim() != pc.dim() {
                continue;
            }
            let pair = (dot(ps.values(), rs.values()), dot(pc.values(), rc.values()));
            let same = p.vehicle_id.is_some() && p.vehicle_id == r.vehicle_id;
            if same {
                genuine.push(pair);
            } else {
                impostor.push(pair);
            }
        }
    }
    (genuine, impostor)
}

/// `(shape, colour)` score pairs.
pub type ScorePairs = Vec<(f64, f64)>;

pub const REPORT_FARS: [f64; 3] = [0.001, 0.01, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VrAtFar {
    pub far: f64,
    pub vr: f64,
}

/// Evaluation report; field order is fixed and serialization is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub protocol: String,
    pub mode: String,
    pub weights: Option<FusionWeights>,
    pub multi_probe: bool,
    pub n_probes: usize,
    pub gallery_size: usize,
    pub rank1: f64,
    pub rank5: f64,
    pub vr_at_far: Vec<VrAtFar>,
    pub cmc: Vec<f64>,
    pub roc: Vec<RocPoint>,
}

impl Report {
    pub fn new(
        protocol: &str,
        mode: &SearchMode,
        multi_probe: bool,
        gallery_size: usize,
        outcome: &ProtocolOutcome,
    ) -> Self {
        Report {
            protocol: protocol.to_string(),
            mode: mode.name().to_string(),
            weights: match mode {
                SearchMode::Fused(w) => Some(w.clone()),
                _ => None,
            },
            multi_probe,
            n_probes: outcome.cmc.n_probes,
            gallery_size,
            rank1: outcome.rank1(),
            rank5: outcome.rank5(),
            vr_at_far: REPORT_FARS
                .iter()
                .map(|&far| VrAtFar {
                    far,
                    vr: outcome.roc.vr_at_far(far),
                })
                .collect(),
            cmc: outcome.cmc.rank_rates.clone(),
            roc: outcome.roc.points.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization is infallible");
        s.push('\n');
        s
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("threshold,far,vr\n");
        for p in &self.roc {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.far, p.vr);
        }
        out
    }

    pub fn cmc_csv(&self) -> String {
        let mut out = String::from("rank,rate\n");
        for (i, r) in self.cmc.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, r);
        }
        out
    }
}
