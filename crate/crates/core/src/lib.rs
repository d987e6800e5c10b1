//! Vehicle re-identification engine: unit-length templates, cosine matching,
//! score-level fusion, exhaustive gallery search, colour classification with
//! Mix-Mode filtering, ROC/CMC evaluation and a synthetic embedding generator.

pub mod colourclass;
pub mod error;
pub mod evaluation;
pub mod gallery;
pub mod ingest;
pub mod matching;
pub mod synthgen;
pub mod templates;

pub use colourclass::{
    classify_colour, mix_mode_search, ColourCatalog, ColourClass, ColourDecision, MixModeHit,
    MixModeResult,
};
pub use error::{Error, Result};
pub use evaluation::{
    compute_cmc, compute_roc, error_reduction, run_multi_probe_protocol, run_protocol, CmcCurve,
    DatasetManifest, Report, RocCurve, RocPoint, ScoreSample,
};
pub use gallery::{Execution, Gallery, RankedResult, SearchMode};
pub use ingest::{best_shot, load_detections, load_embedding_set, Detection};
pub use matching::{
    calibrate_weights, cosine_match, fuse, multi_probe_score, FusionMode, FusionWeights, MatchScore,
};
pub use synthgen::{generate, Scenario, SynthConfig};
pub use templates::{FineGrainedClass, Modality, Source, Template, VehicleRecord};
