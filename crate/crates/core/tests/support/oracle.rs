// Brute-force reference implementations. Everything here is written the slow,
// obvious way: full sorts, per-threshold rescans, no shared helpers with the
// library beyond its data types.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use revid_core::colourclass::{MixModeDiagnostics, MixModeHit, MixModeResult};
use revid_core::evaluation::RankedSearch;
use revid_core::{
    ColourCatalog, ColourClass, ColourDecision, FusionMode, FusionWeights, Modality, RankedResult,
    RocPoint, ScoreSample, SearchMode, Source, Template, VehicleRecord,
};

pub fn cos(a: &Template, b: &Template) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.dim() {
        s += a.values()[i] as f64 * b.values()[i] as f64;
    }
    s + 0.0
}

/// (total, shape, colour) for one probe/record pair, or None if ineligible.
pub fn pair_score(
    probe: &VehicleRecord,
    rec: &VehicleRecord,
    mode: &SearchMode,
) -> Option<(f64, Option<f64>, Option<f64>)> {
    let sc = |p: &Option<Template>, r: &Option<Template>| match (p, r) {
        (Some(p), Some(r)) => Some(cos(p, r)),
        _ => None,
    };
    let s = sc(&probe.shape_template, &rec.shape_template);
    let c = sc(&probe.colour_template, &rec.colour_template);
    match mode {
        SearchMode::ShapeOnly => s.map(|s| (s, Some(s), None)),
        SearchMode::ColourOnly => c.map(|c| (c, None, Some(c))),
        SearchMode::Fused(w) => {
            let (s, c) = (s?, c?);
            let f = match w.mode {
                FusionMode::WeightedSum => w.w_shape * s + w.w_colour * c,
                FusionMode::PlainSum => s + c,
            };
            Some((f + 0.0, Some(s), Some(c)))
        }
    }
}

fn to_ranked(mut all: Vec<(String, f64, Option<f64>, Option<f64>)>, k: usize) -> Vec<RankedResult> {
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (id, score, s, c))| {
            let mut per = BTreeMap::new();
            if let Some(s) = s {
                per.insert(Modality::Shape, s);
            }
            if let Some(c) = c {
                per.insert(Modality::Colour, c);
            }
            RankedResult {
                record_id: id,
                score,
                per_modality_scores: per,
                rank: i + 1,
            }
        })
        .collect()
}

pub fn search(
    records: &[VehicleRecord],
    probe: &VehicleRecord,
    mode: &SearchMode,
    k: usize,
) -> Vec<RankedResult> {
    let all = records
        .iter()
        .filter_map(|r| pair_score(probe, r, mode).map(|(t, s, c)| (r.record_id.clone(), t, s, c)))
        .collect();
    to_ranked(all, k)
}

pub fn multi_probe_search(
    records: &[VehicleRecord],
    probes: &[VehicleRecord],
    mode: &SearchMode,
    k: usize,
) -> Vec<RankedResult> {
    let mut all = Vec::new();
    for r in records {
        let mut best: Option<(f64, Option<f64>, Option<f64>)> = None;
        for p in probes {
            if let Some(x) = pair_score(p, r, mode) {
                if best.is_none() || x.0 > best.unwrap().0 {
                    best = Some(x);
                }
            }
        }
        if let Some((t, s, c)) = best {
            all.push((r.record_id.clone(), t, s, c));
        }
    }
    to_ranked(all, k)
}

pub fn classify(cat: &ColourCatalog, t: &Template) -> ColourDecision {
    let scores: Vec<f64> = cat.classes().iter().map(|c| cos(t, &c.prototype)).collect();
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    let mut second: Option<usize> = None;
    for i in 0..scores.len() {
        if i != best && (second.is_none() || scores[i] > scores[second.unwrap()]) {
            second = Some(i);
        }
    }
    ColourDecision {
        label: cat.classes()[best].label.clone(),
        confidence: scores[best],
        runner_up: second.map(|i| cat.classes()[i].label.clone()),
        margin: second.map_or(0.0, |i| scores[best] - scores[i]),
    }
}

pub fn mix_mode(
    records: &[VehicleRecord],
    probe: &VehicleRecord,
    wanted: &str,
    cat: &ColourCatalog,
    k: usize,
) -> MixModeResult {
    let ranked = search(records, probe, &SearchMode::ShapeOnly, usize::MAX);
    let mut diagnostics = MixModeDiagnostics {
        shape_ranked: ranked.len(),
        ..Default::default()
    };
    let mut results = Vec::new();
    for r in ranked {
        let rec = records.iter().find(|x| x.record_id == r.record_id).unwrap();
        match &rec.colour_template {
            None => diagnostics.excluded_no_colour_template += 1,
            Some(ct) => {
                let d = classify(cat, ct);
                if d.label != wanted {
                    diagnostics.filtered_by_colour += 1;
                } else if results.len() < k {
                    let rank = results.len() + 1;
                    results.push(MixModeHit {
                        result: RankedResult { rank, ..r },
                        colour: d,
                    });
                }
            }
        }
    }
    MixModeResult {
        results,
        diagnostics,
    }
}

pub fn roc(samples: &[ScoreSample]) -> Vec<RocPoint> {
    let n_gen = samples.iter().filter(|s| s.is_genuine).count() as f64;
    let n_imp = samples.iter().filter(|s| !s.is_genuine).count() as f64;
    let mut ts: Vec<f64> = samples.iter().map(|s| s.score).collect();
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        vr: 0.0,
    }];
    for t in ts {
        let g = samples
            .iter()
            .filter(|s| s.is_genuine && s.score >= t)
            .count() as f64;
        let i = samples
            .iter()
            .filter(|s| !s.is_genuine && s.score >= t)
            .count() as f64;
        out.push(RocPoint {
            threshold: t,
            far: i / n_imp,
            vr: g / n_gen,
        });
    }
    out
}

/// Best VR over every observed threshold (and +inf) whose FAR stays within `far`.
pub fn vr_at_far(genuine: &[f64], impostor: &[f64], far: f64) -> f64 {
    let mut ts: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    ts.push(f64::INFINITY);
    let mut best = 0.0f64;
    for t in ts {
        let fa = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
        if fa <= far {
            let v = genuine.iter().filter(|&&s| s >= t).count() as f64 / genuine.len() as f64;
            best = best.max(v);
        }
    }
    best
}

pub fn grid(step: f64) -> Vec<f64> {
    // Only steps that divide 1 are used in the tests.
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Returns (w_shape, VR achieved on the calibration pairs).
pub fn calibrate(
    genuine: &[(f64, f64)],
    impostor: &[(f64, f64)],
    far: f64,
    step: f64,
) -> (f64, f64) {
    let mut best = (0.0, -1.0);
    for w in grid(step) {
        let f = |&(s, c): &(f64, f64)| w * s + (1.0 - w) * c;
        let g: Vec<f64> = genuine.iter().map(f).collect();
        let i: Vec<f64> = impostor.iter().map(f).collect();
        let vr = vr_at_far(&g, &i, far);
        if vr >= best.1 {
            best = (w, vr);
        }
    }
    best
}

pub fn cmc(searches: &[RankedSearch], max_rank: usize) -> Vec<f64> {
    (1..=max_rank)
        .map(|k| {
            let hits = searches
                .iter()
                .filter(|s| {
                    s.results
                        .iter()
                        .any(|r| r.record_id == s.true_gallery_id && r.rank <= k)
                })
                .count();
            hits as f64 / searches.len() as f64
        })
        .collect()
}

// ---- random data -------------------------------------------------------

pub fn unit(rng: &mut ChaCha8Rng, m: Modality, dim: usize) -> Template {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-3 {
            return Template::from_raw_normalized(m, &v).unwrap();
        }
    }
}

/// Coarse values so that ties between records actually happen.
pub fn coarse_unit(rng: &mut ChaCha8Rng, m: Modality, dim: usize) -> Template {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-2i32..=2) as f64)
            .collect();
        if v.iter().any(|&x| x != 0.0) {
            return Template::from_raw_normalized(m, &v).unwrap();
        }
    }
}

pub struct RandomGallery {
    pub records: Vec<VehicleRecord>,
    pub probes: Vec<VehicleRecord>,
    pub catalog: ColourCatalog,
}

pub fn random_catalog(rng: &mut ChaCha8Rng, dim: usize) -> ColourCatalog {
    let n = rng.random_range(2..=8);
    let classes = (0..n)
        .map(|i| ColourClass {
            label: format!("c{i}"),
            prototype: unit(rng, Modality::Colour, dim),
        })
        .collect();
    ColourCatalog::new(classes).unwrap()
}

/// A gallery of up to `max_records` records with missing colour templates,
/// duplicated templates and coarse values mixed in.
pub fn random_gallery(rng: &mut ChaCha8Rng, max_records: usize) -> RandomGallery {
    let n = rng.random_range(1..=max_records);
    let ds = rng.random_range(2..=24);
    let dc = rng.random_range(2..=8);
    let coarse = rng.random_bool(0.3);
    let catalog = random_catalog(rng, dc);
    let make = |rng: &mut ChaCha8Rng, m: Modality, d: usize| {
        if coarse {
            coarse_unit(rng, m, d)
        } else {
            unit(rng, m, d)
        }
    };
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut records: Vec<VehicleRecord> = Vec::with_capacity(n);
    for id in ids {
        let (shape, colour) = if !records.is_empty() && rng.random_bool(0.05) {
            let src = &records[rng.random_range(0..records.len())];
            (src.shape_template.clone(), src.colour_template.clone())
        } else {
            let c = if rng.random_bool(0.1) {
                None
            } else {
                Some(make(rng, Modality::Colour, dc))
            };
            (Some(make(rng, Modality::Shape, ds)), c)
        };
        records.push(record(
            format!("r{id:04}"),
            Some(format!("v{id}")),
            shape,
            colour,
        ));
    }
    let n_probes = rng.random_range(1..=4);
    let probes = (0..n_probes)
        .map(|i| {
            record(
                format!("p{i}"),
                None,
                Some(make(rng, Modality::Shape, ds)),
                Some(make(rng, Modality::Colour, dc)),
            )
        })
        .collect();
    RandomGallery {
        records,
        probes,
        catalog,
    }
}

pub fn record(
    id: String,
    vehicle_id: Option<String>,
    shape: Option<Template>,
    colour: Option<Template>,
) -> VehicleRecord {
    VehicleRecord {
        record_id: id,
        vehicle_id,
        class: None,
        colour_label: None,
        shape_template: shape,
        colour_template: colour,
        source: Source {
            camera: "cam".into(),
            track_id: None,
            frame_index: None,
        },
    }
}

pub fn random_mode(rng: &mut ChaCha8Rng) -> SearchMode {
    match rng.random_range(0..4) {
        0 => SearchMode::ShapeOnly,
        1 => SearchMode::ColourOnly,
        2 => SearchMode::Fused(FusionWeights::plain_sum()),
        _ => SearchMode::Fused(
            FusionWeights::weighted(rng.random_range(0..=20) as f64 / 20.0).unwrap(),
        ),
    }
}

/// Random score samples drawn from a small set of values so thresholds repeat.
pub fn random_samples<R: Rng>(rng: &mut R, n: usize) -> Vec<ScoreSample> {
    let mut out: Vec<ScoreSample> = (0..n)
        .map(|i| ScoreSample {
            score: rng.random_range(-20i32..=20) as f64 / 20.0,
            is_genuine: rng.random_bool(0.3),
            probe_id: format!("p{}", i % 7),
            gallery_id: format!("g{i}"),
        })
        .collect();
    out[0].is_genuine = true;
    out[n - 1].is_genuine = false;
    out
}
