mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use revid_core::evaluation::{calibration_pairs, RankedSearch};
use revid_core::matching::DEFAULT_GRID_STEP;
use revid_core::synthgen::SynthConfig;
use revid_core::{
    calibrate_weights, classify_colour, compute_cmc, generate, multi_probe_score, Gallery,
    Modality, SearchMode,
};
use support::{equivalence, oracle};

#[test]
fn random_galleries_match_oracle() {
    for seed in 0..20 {
        equivalence::check_gallery(seed, 300).unwrap();
    }
}

#[test]
fn large_gallery_top10() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let records: Vec<_> = (0..200)
        .map(|i| {
            oracle::record(
                format!("g{i:03}"),
                None,
                Some(oracle::unit(&mut rng, Modality::Shape, 128)),
                None,
            )
        })
        .collect();
    let probe = oracle::record(
        "p".into(),
        None,
        Some(oracle::unit(&mut rng, Modality::Shape, 128)),
        None,
    );
    let g = Gallery::from_records(records.clone()).unwrap();
    let got = g.search(&probe, &SearchMode::ShapeOnly, 10).unwrap();
    assert_eq!(
        got,
        oracle::search(&records, &probe, &SearchMode::ShapeOnly, 10)
    );
}

#[test]
fn multi_probe_three_probes_hundred_records() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mk = |rng: &mut ChaCha8Rng, id: String| {
        oracle::record(id, None, Some(oracle::unit(rng, Modality::Shape, 32)), None)
    };
    let records: Vec<_> = (0..100).map(|i| mk(&mut rng, format!("g{i}"))).collect();
    let probes: Vec<_> = (0..3).map(|i| mk(&mut rng, format!("p{i}"))).collect();
    let g = Gallery::from_records(records.clone()).unwrap();
    let got = g
        .multi_probe_search(&probes, &SearchMode::ShapeOnly, 100)
        .unwrap();
    assert_eq!(
        got,
        oracle::multi_probe_search(&records, &probes, &SearchMode::ShapeOnly, 100)
    );
}

#[test]
fn multi_probe_score_is_max() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.random_range(1..10);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let want = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(multi_probe_score(&v).unwrap(), want);
    }
}

#[test]
fn classify_random_templates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cat = oracle::random_catalog(&mut rng, 8);
    for _ in 0..500 {
        let t = oracle::unit(&mut rng, Modality::Colour, 8);
        assert_eq!(
            classify_colour(&cat, &t).unwrap(),
            oracle::classify(&cat, &t)
        );
    }
}

#[test]
fn calibration_on_synthetic_pairs() {
    let mut cfg = SynthConfig::desk(21);
    cfg.n_classes = 6;
    cfg.ids_per_class = 3;
    cfg.images_per_id = 3;
    let sc = generate(&cfg).unwrap();
    let g = Gallery::from_records(sc.gallery.clone()).unwrap();
    let (gen, imp) = calibration_pairs(&g, &sc.probes);
    for far in [0.01, 0.1] {
        let w = calibrate_weights(&gen, &imp, far, DEFAULT_GRID_STEP, "synthetic").unwrap();
        let (ow, ovr) = oracle::calibrate(&gen, &imp, far, DEFAULT_GRID_STEP);
        assert_eq!(w.w_shape, ow);
        // The chosen weight is at least as good as any single modality.
        let s: Vec<f64> = gen.iter().map(|p| p.0).collect();
        let si: Vec<f64> = imp.iter().map(|p| p.0).collect();
        let c: Vec<f64> = gen.iter().map(|p| p.1).collect();
        let ci: Vec<f64> = imp.iter().map(|p| p.1).collect();
        assert!(ovr >= oracle::vr_at_far(&s, &si, far));
        assert!(ovr >= oracle::vr_at_far(&c, &ci, far));
    }
}

#[test]
fn cmc_on_synthetic_protocol() {
    let sc = generate(&SynthConfig::desk(4)).unwrap();
    let g = Gallery::from_records(sc.gallery.clone()).unwrap();
    let searches: Vec<RankedSearch> = sc
        .probes
        .iter()
        .map(|p| RankedSearch {
            probe_id: p.record_id.clone(),
            true_gallery_id: sc.ground_truth.mates[&p.record_id].clone(),
            results: g.search(p, &SearchMode::ShapeOnly, usize::MAX).unwrap(),
            truncated: false,
        })
        .collect();
    let cmc = compute_cmc(&searches, 20).unwrap();
    assert_eq!(cmc.rank_rates, oracle::cmc(&searches, 20));
}
