//! Request and response bodies for the `/v1` endpoints.

use revid_core::{ColourDecision, Detection, FusionWeights, RankedResult, Template, VehicleRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub galleries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryInfo {
    pub gallery_id: String,
    pub size: usize,
    pub snapshot_version: u64,
    pub dims: std::collections::BTreeMap<revid_core::Modality, usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EnrollRequest {
    #[serde(default)]
    pub records: Vec<VehicleRecord>,
    /// Raw detections; each `(camera, track_id)` track is reduced to its
    /// best-shot unless `records` already holds a record with that id, in
    /// which case the detections are attached to it.
    #[serde(default)]
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollResponse {
    pub enrolled: Vec<String>,
    pub size: usize,
    pub snapshot_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsResponse {
    pub record_id: String,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    ShapeOnly,
    ColourOnly,
    Fused,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SearchRequest {
    /// Inline probe record.
    #[serde(default)]
    pub probe: Option<VehicleRecord>,
    /// Ids of enrolled records to use as probes; more than one means
    /// multi-probe matching.
    #[serde(default)]
    pub probe_ids: Option<Vec<String>>,
    #[serde(default)]
    pub mode: ModeName,
    /// Fusion weights for `fused`; the service default is used when absent.
    #[serde(default)]
    pub weights: Option<FusionWeights>,
    /// Turns the request into a Mix-Mode search (shape ranking filtered to
    /// this colour).
    #[serde(default)]
    pub wanted_colour: Option<String>,
    pub k: usize,
    #[serde(default)]
    pub include_track_detections: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    #[serde(flatten)]
    pub result: RankedResult,
    /// Colour classification of the matched record, when it has a colour template.
    pub colour: Option<ColourDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<Detection>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub gallery_size: usize,
    /// Records skipped because they lack a template the mode needs.
    pub excluded_missing_modality: usize,
    /// Mix-Mode only: shape-ranked records without a colour template.
    pub excluded_no_colour_template: usize,
    /// Mix-Mode only: records classified as another colour.
    pub filtered_by_colour: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub gallery_id: String,
    pub snapshot_version: u64,
    pub mode: ModeName,
    pub weights: Option<FusionWeights>,
    pub multi_probe: bool,
    pub wanted_colour: Option<String>,
    pub results: Vec<SearchHit>,
    pub diagnostics: SearchDiagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub template: Template,
}

/// Either explicit `(shape, colour)` score pairs or a gallery plus labelled
/// probes from which the pairs are computed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CalibrateRequest {
    #[serde(default)]
    pub genuine_pairs: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub impostor_pairs: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub gallery_id: Option<String>,
    #[serde(default)]
    pub probes: Option<Vec<VehicleRecord>>,
    #[serde(default)]
    pub operating_far: Option<f64>,
    #[serde(default)]
    pub grid_step: Option<f64>,
    #[serde(default)]
    pub calibration_set_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaveResponse {
    pub gallery_id: String,
    pub path: String,
    pub size: usize,
}
