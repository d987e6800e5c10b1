// One random gallery, every operation, library output vs oracle output.
#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revid_core::evaluation::RankedSearch;
use revid_core::{
    calibrate_weights, classify_colour, compute_cmc, compute_roc, mix_mode_search, Execution,
    Gallery, ScoreSample, SearchMode,
};

use super::oracle;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Which operations were exercised, for reporting.
#[derive(Debug, Default, Clone, Copy)]
pub struct Coverage {
    pub searches: usize,
    pub multi_probe: usize,
    pub mix_mode: usize,
    pub classify: usize,
    pub calibrate: usize,
    pub roc: usize,
    pub cmc: usize,
}

impl Coverage {
    pub fn add(&mut self, o: Coverage) {
        self.searches += o.searches;
        self.multi_probe += o.multi_probe;
        self.mix_mode += o.mix_mode;
        self.classify += o.classify;
        self.calibrate += o.calibrate;
        self.roc += o.roc;
        self.cmc += o.cmc;
    }
}

pub fn check_gallery(seed: u64, max_records: usize) -> Result<Coverage, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rg = oracle::random_gallery(&mut rng, max_records);
    let g = Gallery::from_records(rg.records.clone()).map_err(|e| e.to_string())?;
    let n = g.len();
    let mut cov = Coverage::default();

    // search, both execution strategies
    for p in &rg.probes {
        let mode = oracle::random_mode(&mut rng);
        let k = *[1, 5, n, n + 3, usize::MAX, rng.random_range(1..=n)]
            .choose(&mut rng)
            .unwrap();
        let want = oracle::search(&rg.records, p, &mode, k);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let got = g
                .search_with(p, &mode, k, exec)
                .map_err(|e| e.to_string())?;
            ensure!(
                got == want,
                "search seed={seed} mode={} k={k} {exec:?}",
                mode.name()
            );
        }
        cov.searches += 1;
    }

    // multi-probe
    let mode = oracle::random_mode(&mut rng);
    let k = rng.random_range(1..=n + 2);
    let want = oracle::multi_probe_search(&rg.records, &rg.probes, &mode, k);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let got = g
            .multi_probe_search_with(&rg.probes, &mode, k, exec)
            .map_err(|e| e.to_string())?;
        ensure!(got == want, "multi_probe seed={seed} k={k} {exec:?}");
    }
    cov.multi_probe += 1;

    // mix-mode, every label
    let labels: Vec<String> = rg.catalog.labels().map(String::from).collect();
    for label in &labels {
        let k = rng.random_range(1..=n + 2);
        let got =
            mix_mode_search(&g, &rg.probes[0], label, &rg.catalog, k).map_err(|e| e.to_string())?;
        let want = oracle::mix_mode(&rg.records, &rg.probes[0], label, &rg.catalog, k);
        ensure!(got == want, "mix_mode seed={seed} label={label} k={k}");
        cov.mix_mode += 1;
    }

    // colour classification of every stored colour template
    for r in &rg.records {
        if let Some(ct) = &r.colour_template {
            let got = classify_colour(&rg.catalog, ct).map_err(|e| e.to_string())?;
            ensure!(
                got == oracle::classify(&rg.catalog, ct),
                "classify seed={seed} {}",
                r.record_id
            );
            cov.classify += 1;
        }
    }

    // calibration on probe x record score pairs with a random genuine split
    let mut gen = Vec::new();
    let mut imp = Vec::new();
    for p in &rg.probes {
        for r in rg.records.iter().take(60) {
            let (Some(rs), Some(rc)) = (&r.shape_template, &r.colour_template) else {
                continue;
            };
            let pair = (
                oracle::cos(p.shape_template.as_ref().unwrap(), rs),
                oracle::cos(p.colour_template.as_ref().unwrap(), rc),
            );
            if rng.random_bool(0.2) {
                gen.push(pair);
            } else {
                imp.push(pair);
            }
        }
    }
    if !gen.is_empty() && !imp.is_empty() {
        let far = *[0.01, 0.05, 0.1, 0.3].choose(&mut rng).unwrap();
        let step = *[0.01, 0.05, 0.1, 0.25].choose(&mut rng).unwrap();
        let got = calibrate_weights(&gen, &imp, far, step, "oracle").map_err(|e| e.to_string())?;
        let (w, _) = oracle::calibrate(&gen, &imp, far, step);
        ensure!(
            got.w_shape == w && got.w_colour == 1.0 - w,
            "calibrate seed={seed} far={far} step={step}: got {} want {w}",
            got.w_shape
        );
        cov.calibrate += 1;
    }

    // ROC over one full ranking with a random genuine labelling
    let ranked = g
        .search(&rg.probes[0], &SearchMode::ShapeOnly, usize::MAX)
        .map_err(|e| e.to_string())?;
    let mut samples: Vec<ScoreSample> = ranked
        .iter()
        .map(|r| ScoreSample {
            score: r.score,
            is_genuine: rng.random_bool(0.25),
            probe_id: rg.probes[0].record_id.clone(),
            gallery_id: r.record_id.clone(),
        })
        .collect();
    if samples.len() >= 2 {
        samples[0].is_genuine = !samples[1].is_genuine;
        let got = compute_roc(&samples).map_err(|e| e.to_string())?;
        ensure!(got.points == oracle::roc(&samples), "roc seed={seed}");
        cov.roc += 1;
    }

    // CMC over all probes, sometimes truncated
    let searches: Vec<RankedSearch> = rg
        .probes
        .iter()
        .map(|p| {
            let k = if rng.random_bool(0.5) {
                usize::MAX
            } else {
                rng.random_range(1..=n)
            };
            let results = g.search(p, &SearchMode::ShapeOnly, k).unwrap();
            let mate = rg.records.choose(&mut rng).unwrap().record_id.clone();
            RankedSearch {
                probe_id: p.record_id.clone(),
                true_gallery_id: mate,
                truncated: results.len() < n,
                results,
            }
        })
        .collect();
    let max_rank = rng.random_range(1..=n);
    let got = compute_cmc(&searches, max_rank).map_err(|e| e.to_string())?;
    ensure!(
        got.rank_rates == oracle::cmc(&searches, max_rank),
        "cmc seed={seed}"
    );
    cov.cmc += 1;

    Ok(cov)
}
