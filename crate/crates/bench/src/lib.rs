//! Fixtures shared by the benchmarks.

use revid_core::synthgen::SynthConfig;
use revid_core::{generate, Gallery, Scenario};

/// Desk-shaped scenario with `n_classes` classes; 20 gallery records per class.
pub fn scenario(n_classes: usize) -> (Scenario, Gallery) {
    let sc = generate(&SynthConfig {
        n_classes,
        ids_per_class: 20,
        ..SynthConfig::desk(1)
    })
    .expect("valid config");
    let g = Gallery::from_records(sc.gallery.clone()).expect("normalized templates");
    (sc, g)
}
