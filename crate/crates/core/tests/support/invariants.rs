// Property checks shared by the core property tests and the acceptance run.
// Each check drives a proptest runner for `cases` cases and reports the first
// (shrunk) failure as a string.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use revid_core::evaluation::RankedSearch;
use revid_core::templates::normalize_f64;
use revid_core::{
    compute_cmc, compute_roc, cosine_match, mix_mode_search, ColourCatalog, Gallery, Modality,
    RocCurve, SearchMode, Template, VehicleRecord,
};

use super::oracle;

pub const CASES: u32 = 1000;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn raw_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0e3f64..1.0e3, 1..96)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn widen(t: &Template) -> Vec<f64> {
    t.values().iter().map(|&v| v as f64).collect()
}

pub fn normalization_idempotent(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&raw_vec(), |v| {
            let once = normalize_f64(&v).unwrap();
            let twice = normalize_f64(&once).unwrap();
            prop_assert!(max_abs_diff(&once, &twice) <= 1e-12);

            let t = Template::from_raw_normalized(Modality::Shape, &v).unwrap();
            let t2 = t.normalize().unwrap();
            prop_assert!(max_abs_diff(&widen(&t), &widen(&t2)) <= 1e-6);
            prop_assert!((t2.norm() - 1.0).abs() <= 1e-6);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn normalization_scale_invariant(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(raw_vec(), 1e-3f64..1e3), |(v, c)| {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let a = normalize_f64(&v).unwrap();
            let b = normalize_f64(&scaled).unwrap();
            prop_assert!(max_abs_diff(&a, &b) <= 1e-12);
            let ta = Template::from_raw_normalized(Modality::Colour, &v).unwrap();
            let tb = Template::from_raw_normalized(Modality::Colour, &scaled).unwrap();
            prop_assert!(max_abs_diff(&widen(&ta), &widen(&tb)) <= 1e-6);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn cosine_bounds_and_symmetry(cases: u32) -> Result<(), String> {
    let pair = (2usize..64).prop_flat_map(|d| {
        (
            prop::collection::vec(-10.0f64..10.0, d),
            prop::collection::vec(-10.0f64..10.0, d),
        )
    });
    runner(cases)
        .run(&pair, |(a, b)| {
            prop_assume!(a.iter().any(|&x| x.abs() > 1e-3) && b.iter().any(|&x| x.abs() > 1e-3));
            let ta = Template::from_raw_normalized(Modality::Shape, &a).unwrap();
            let tb = Template::from_raw_normalized(Modality::Shape, &b).unwrap();
            let ab = cosine_match(&ta, &tb).unwrap().value;
            let ba = cosine_match(&tb, &ta).unwrap().value;
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&ab));
            let aa = cosine_match(&ta, &ta).unwrap().value;
            prop_assert!((aa - 1.0).abs() <= 1e-6);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn check_roc_shape(roc: &RocCurve) -> Result<(), TestCaseError> {
    let pts = &roc.points;
    prop_assert!(pts[0].threshold == f64::INFINITY && pts[0].far == 0.0 && pts[0].vr == 0.0);
    for w in pts.windows(2) {
        prop_assert!(w[1].threshold < w[0].threshold);
        prop_assert!(w[1].far >= w[0].far);
        prop_assert!(w[1].vr >= w[0].vr);
    }
    let last = pts.last().unwrap();
    prop_assert!(last.far == 1.0 && last.vr == 1.0);
    Ok(())
}

pub fn roc_monotone(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(any::<u64>(), 2usize..400), |(seed, n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples = oracle::random_samples(&mut rng, n);
            let roc = compute_roc(&samples).unwrap();
            check_roc_shape(&roc)?;
            // VR at a FAR budget never decreases as the budget grows.
            let mut prev = 0.0;
            for far in [0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0] {
                let vr = roc.vr_at_far(far);
                prop_assert!(vr >= prev);
                prev = vr;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn cmc_monotone(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&any::<u64>(), |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rg = oracle::random_gallery(&mut rng, 60);
            let g = Gallery::from_records(rg.records.clone()).unwrap();
            let searches: Vec<RankedSearch> = rg
                .probes
                .iter()
                .enumerate()
                .map(|(i, p)| RankedSearch {
                    probe_id: p.record_id.clone(),
                    true_gallery_id: rg.records[(seed as usize + i) % rg.records.len()]
                        .record_id
                        .clone(),
                    results: g.search(p, &SearchMode::ShapeOnly, usize::MAX).unwrap(),
                    truncated: false,
                })
                .collect();
            let cmc = compute_cmc(&searches, g.len()).unwrap();
            prop_assert_eq!(cmc.rank_rates.len(), g.len());
            for w in cmc.rank_rates.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!(cmc.rank_rates.iter().all(|r| (0.0..=1.0).contains(r)));
            prop_assert_eq!(*cmc.rank_rates.last().unwrap(), 1.0);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn catalog_and_gallery(
    seed: u64,
    max: usize,
) -> (Vec<VehicleRecord>, Vec<VehicleRecord>, ColourCatalog) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rg = oracle::random_gallery(&mut rng, max);
    (rg.records, rg.probes, rg.catalog)
}

pub fn mix_mode_sound_and_ordered(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(
            &(any::<u64>(), 1usize..50, any::<prop::sample::Index>()),
            |(seed, k, pick)| {
                let (records, probes, cat) = catalog_and_gallery(seed, 80);
                let g = Gallery::from_records(records.clone()).unwrap();
                let labels: Vec<&str> = cat.labels().collect();
                let wanted = labels[pick.index(labels.len())];
                let mm = mix_mode_search(&g, &probes[0], wanted, &cat, k).unwrap();
                let shape = g
                    .search(&probes[0], &SearchMode::ShapeOnly, usize::MAX)
                    .unwrap();
                prop_assert!(mm.results.len() <= k);
                let mut last_pos = None;
                for (i, hit) in mm.results.iter().enumerate() {
                    prop_assert_eq!(hit.result.rank, i + 1);
                    prop_assert_eq!(&hit.colour.label, wanted);
                    let rec = g.get(&hit.result.record_id).unwrap();
                    let fresh = oracle::classify(&cat, rec.colour_template.as_ref().unwrap());
                    prop_assert_eq!(&fresh.label, wanted);
                    let pos = shape
                        .iter()
                        .position(|r| r.record_id == hit.result.record_id)
                        .unwrap();
                    prop_assert!(last_pos.is_none_or(|p| pos > p));
                    prop_assert_eq!(hit.result.score, shape[pos].score);
                    last_pos = Some(pos);
                }
                let d = mm.diagnostics;
                prop_assert_eq!(d.shape_ranked, shape.len());
                prop_assert!(
                    d.excluded_no_colour_template + d.filtered_by_colour + mm.results.len()
                        <= d.shape_ranked
                );
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

pub fn multi_probe_max_dominance(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&any::<u64>(), |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rg = oracle::random_gallery(&mut rng, 60);
            let mode = oracle::random_mode(&mut rng);
            let g = Gallery::from_records(rg.records.clone()).unwrap();
            let multi = g.multi_probe_search(&rg.probes, &mode, usize::MAX).unwrap();
            let singles: Vec<_> = rg
                .probes
                .iter()
                .map(|p| g.search(p, &mode, usize::MAX).unwrap())
                .collect();
            for r in &multi {
                let mut best = f64::NEG_INFINITY;
                for s in &singles {
                    if let Some(x) = s.iter().find(|x| x.record_id == r.record_id) {
                        prop_assert!(r.score >= x.score);
                        best = best.max(x.score);
                    }
                }
                prop_assert_eq!(r.score, best);
            }
            // The top multi-probe score dominates every single-probe top score.
            for s in &singles {
                if let (Some(m), Some(t)) = (multi.first(), s.first()) {
                    prop_assert!(m.score >= t.score);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn serialization_round_trips(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&any::<u64>(), |seed| {
            let (records, _, cat) = catalog_and_gallery(seed, 12);
            for r in &records {
                for t in [&r.shape_template, &r.colour_template]
                    .into_iter()
                    .flatten()
                {
                    let back = Template::decode(&t.encode()).unwrap();
                    prop_assert_eq!(&back, t);
                    prop_assert_eq!(&Template::from_base64(&t.to_base64()).unwrap(), t);
                }
                prop_assert_eq!(&VehicleRecord::from_json(&r.to_json()).unwrap(), r);
            }
            let g = Gallery::from_records(records).unwrap();
            let mut buf = Vec::new();
            g.write_to(&mut buf).unwrap();
            let back = Gallery::read_from(&buf[..]).unwrap();
            prop_assert!(back == g);
            let mut buf2 = Vec::new();
            back.write_to(&mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
            prop_assert_eq!(ColourCatalog::from_json(&cat.to_json()).unwrap(), cat);

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 2 + (seed % 50) as usize;
            let roc = compute_roc(&oracle::random_samples(&mut rng, n)).unwrap();
            let json = serde_json::to_string(&roc).unwrap();
            prop_assert_eq!(serde_json::from_str::<RocCurve>(&json).unwrap(), roc);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub type Check = fn(u32) -> Result<(), String>;

pub const ALL: [(&str, Check); 9] = [
    ("normalization idempotence", normalization_idempotent),
    (
        "normalization scale invariance",
        normalization_scale_invariant,
    ),
    ("cosine bounds and symmetry", cosine_bounds_and_symmetry),
    ("ROC monotonicity", roc_monotone),
    ("CMC monotonicity", cmc_monotone),
    ("mix-mode soundness and order", mix_mode_sound_and_ordered),
    ("multi-probe max dominance", multi_probe_max_dominance),
    ("serialization round trips", serialization_round_trips),
    ("oracle search agreement", search_matches_oracle),
];

pub fn search_matches_oracle(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(any::<u64>(), 0usize..40), |(seed, k)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rg = oracle::random_gallery(&mut rng, 50);
            let mode = oracle::random_mode(&mut rng);
            let g = Gallery::from_records(rg.records.clone()).unwrap();
            let got = g.search(&rg.probes[0], &mode, k).unwrap();
            prop_assert_eq!(got, oracle::search(&rg.records, &rg.probes[0], &mode, k));
            Ok(())
        })
        .map_err(|e| e.to_string())
}
