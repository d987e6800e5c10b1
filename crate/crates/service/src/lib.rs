//! JSON-over-HTTP facade for the re-identification engine.
//!
//! Galleries are named, in-memory snapshots. Reads clone the current snapshot
//! and never block enrollment; enrollment builds a new snapshot and swaps it in.

pub mod api;
pub mod config;
pub mod error;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderValue, StatusCode};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use revid_core::colourclass::filter_by_colour;
use revid_core::evaluation::calibration_pairs;
use revid_core::ingest::{best_shot, best_shot_id, group_tracks, write_json_lines};
use revid_core::matching::{DEFAULT_GRID_STEP, DEFAULT_OPERATING_FAR};
use revid_core::synthgen::{default_catalog, SynthConfig};
use revid_core::{
    calibrate_weights, classify_colour, generate, ColourCatalog, ColourDecision, Detection, Error,
    FusionWeights, Gallery, RankedResult, SearchMode, VehicleRecord,
};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use api::*;
pub use config::ServiceConfig;
pub use error::{ApiError, ErrorBody};

pub const GALLERY_EXT: &str = "gallery";
pub const DETECTIONS_EXT: &str = "detections.jsonl";
pub const DEMO_GALLERY: &str = "demo";

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone, Default)]
pub struct GalleryEntry {
    pub gallery: Gallery,
    pub detections: Arc<HashMap<String, Vec<Detection>>>,
}

pub struct AppState {
    galleries: RwLock<BTreeMap<String, GalleryEntry>>,
    pub catalog: ColourCatalog,
    pub default_weights: FusionWeights,
    pub data_dir: PathBuf,
}

fn valid_gallery_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub type DemoGallery = (
    Vec<VehicleRecord>,
    HashMap<String, Vec<Detection>>,
    ColourCatalog,
);

/// Records and per-record detections of the synthetic demo gallery: every
/// gallery and probe image of `SynthConfig::desk(seed)`, with each record's
/// detections being all images of its vehicle.
pub fn demo_gallery(seed: u64) -> revid_core::Result<DemoGallery> {
    let sc = generate(&SynthConfig::desk(seed))?;
    let records: Vec<VehicleRecord> = sc.gallery.into_iter().chain(sc.probes).collect();
    let mut by_vehicle: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for r in &records {
        let vid = r.vehicle_id.as_deref().unwrap_or(&r.record_id);
        let frame = r.source.frame_index.unwrap_or(0);
        by_vehicle.entry(vid).or_default().push(Detection {
            track_id: vid.to_string(),
            frame_index: frame,
            quality: 1.0 / (1.0 + frame as f64),
            shape_template: r.shape_template.clone(),
            colour_template: r.colour_template.clone(),
            camera: DEMO_GALLERY.into(),
        });
    }
    let detections = records
        .iter()
        .map(|r| {
            let vid = r.vehicle_id.as_deref().unwrap_or(&r.record_id);
            (r.record_id.clone(), by_vehicle[vid].clone())
        })
        .collect();
    Ok((records, detections, sc.catalog))
}

impl AppState {
    pub fn new(catalog: ColourCatalog, default_weights: FusionWeights, data_dir: PathBuf) -> Self {
        AppState {
            galleries: RwLock::new(BTreeMap::new()),
            catalog,
            default_weights,
            data_dir,
        }
    }

    /// Catalog, weights, persisted galleries and optional demo gallery as
    /// described by `cfg`.
    pub fn from_config(cfg: &ServiceConfig) -> revid_core::Result<Self> {
        let catalog = match &cfg.catalog {
            Some(p) => ColourCatalog::load(p)?,
            None => default_catalog(SynthConfig::desk(0).dim_colour)?,
        };
        let weights = match &cfg.weights {
            Some(p) => {
                let w: FusionWeights = serde_json::from_str(&fs::read_to_string(p)?)
                    .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
                w.validate()?;
                w
            }
            None => FusionWeights::plain_sum(),
        };
        let state = AppState::new(catalog, weights, cfg.data_dir.clone());
        state.load_persisted()?;
        if let Some(seed) = cfg.demo_seed {
            if state.entry(DEMO_GALLERY).is_none() {
                state.install_demo(seed)?;
            }
        }
        Ok(state)
    }

    pub fn install_demo(&self, seed: u64) -> revid_core::Result<()> {
        let (records, detections, _) = demo_gallery(seed)?;
        let gallery = Gallery::from_records(records)?;
        self.galleries.write().unwrap().insert(
            DEMO_GALLERY.into(),
            GalleryEntry {
                gallery,
                detections: Arc::new(detections),
            },
        );
        Ok(())
    }

    pub fn insert_gallery(&self, id: &str, entry: GalleryEntry) {
        self.galleries.write().unwrap().insert(id.into(), entry);
    }

    /// Current snapshot of gallery `id`.
    pub fn entry(&self, id: &str) -> Option<GalleryEntry> {
        self.galleries.read().unwrap().get(id).cloned()
    }

    fn paths(&self, id: &str) -> (PathBuf, PathBuf) {
        (
            self.data_dir.join(format!("{id}.{GALLERY_EXT}")),
            self.data_dir.join(format!("{id}.{DETECTIONS_EXT}")),
        )
    }

    fn load_persisted(&self) -> revid_core::Result<()> {
        let Ok(dir) = fs::read_dir(&self.data_dir) else {
            return Ok(());
        };
        let mut names: Vec<PathBuf> = dir.filter_map(|e| e.ok().map(|e| e.path())).collect();
        names.sort();
        for path in names {
            if path.extension().and_then(|e| e.to_str()) != Some(GALLERY_EXT) {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if !valid_gallery_id(id) {
                continue;
            }
            let gallery = Gallery::load(&path)?;
            let (_, det_path) = self.paths(id);
            let mut detections: HashMap<String, Vec<Detection>> = HashMap::new();
            if det_path.exists() {
                for (i, line) in fs::read_to_string(&det_path)?.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let d: DetectionsResponse =
                        serde_json::from_str(line).map_err(|e| Error::Line {
                            line: i + 1,
                            message: e.to_string(),
                        })?;
                    detections.insert(d.record_id, d.detections);
                }
            }
            tracing::info!(gallery = id, size = gallery.len(), "loaded gallery");
            self.insert_gallery(
                id,
                GalleryEntry {
                    gallery,
                    detections: Arc::new(detections),
                },
            );
        }
        Ok(())
    }

    /// Writes gallery `id` (and its detections) to the data directory.
    pub fn persist(&self, id: &str) -> Result<SaveResponse, ApiError> {
        let entry = self
            .entry(id)
            .ok_or_else(|| ApiError::unknown_gallery(id))?;
        fs::create_dir_all(&self.data_dir).map_err(Error::from)?;
        let (gpath, dpath) = self.paths(id);
        entry.gallery.save(&gpath)?;
        let mut all: Vec<DetectionsResponse> = entry
            .detections
            .iter()
            .map(|(rid, d)| DetectionsResponse {
                record_id: rid.clone(),
                detections: d.clone(),
            })
            .collect();
        all.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        write_json_lines(&dpath, &all)?;
        Ok(SaveResponse {
            gallery_id: id.into(),
            path: gpath.display().to_string(),
            size: entry.gallery.len(),
        })
    }

    pub fn persist_all(&self) -> Result<(), ApiError> {
        let ids: Vec<String> = self.galleries.read().unwrap().keys().cloned().collect();
        for id in ids {
            self.persist(&id)?;
        }
        Ok(())
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        galleries: st.galleries.read().unwrap().len(),
    })
}

fn info(id: &str, e: &GalleryEntry) -> GalleryInfo {
    GalleryInfo {
        gallery_id: id.into(),
        size: e.gallery.len(),
        snapshot_version: e.gallery.snapshot_version(),
        dims: e.gallery.dims().clone(),
    }
}

async fn list_galleries(State(st): State<Arc<AppState>>) -> Json<Vec<GalleryInfo>> {
    let g = st.galleries.read().unwrap();
    Json(g.iter().map(|(id, e)| info(id, e)).collect())
}

async fn create_gallery(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<(StatusCode, Json<GalleryInfo>), ApiError> {
    if !valid_gallery_id(&id) {
        return Err(ApiError::bad_request(format!(
            "gallery id `{id}` must be 1-64 characters of [A-Za-z0-9_-]"
        )));
    }
    let mut g = st.galleries.write().unwrap();
    if g.contains_key(&id) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "DuplicateId",
            format!("gallery `{id}` already exists"),
        ));
    }
    let entry = GalleryEntry::default();
    let out = info(&id, &entry);
    g.insert(id, entry);
    Ok((StatusCode::CREATED, Json(out)))
}

async fn gallery_info(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<GalleryInfo> {
    let e = st
        .entry(&id)
        .ok_or_else(|| ApiError::unknown_gallery(&id))?;
    Ok(Json(info(&id, &e)))
}

async fn enroll(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<EnrollRequest>, JsonRejection>,
) -> ApiResult<EnrollResponse> {
    let req = body(payload)?;
    let mut records = req.records;
    let mut new_detections: HashMap<String, Vec<Detection>> = HashMap::new();
    for ((camera, track), dets) in group_tracks(req.detections) {
        let rid = best_shot_id(&camera, &track);
        if !records.iter().any(|r| r.record_id == rid) {
            records.push(best_shot(&dets)?);
        }
        new_detections.insert(rid, dets);
    }
    if records.is_empty() {
        return Err(ApiError::bad_request("nothing to enroll"));
    }
    let enrolled: Vec<String> = records.iter().map(|r| r.record_id.clone()).collect();

    let mut galleries = st.galleries.write().unwrap();
    let entry = galleries
        .get_mut(&id)
        .ok_or_else(|| ApiError::unknown_gallery(&id))?;
    let gallery = entry.gallery.enroll_all(records)?;
    let mut detections = (*entry.detections).clone();
    detections.extend(new_detections);
    *entry = GalleryEntry {
        gallery,
        detections: Arc::new(detections),
    };
    Ok(Json(EnrollResponse {
        enrolled,
        size: entry.gallery.len(),
        snapshot_version: entry.gallery.snapshot_version(),
    }))
}

async fn get_record(
    State(st): State<Arc<AppState>>,
    UrlPath((id, rid)): UrlPath<(String, String)>,
) -> ApiResult<VehicleRecord> {
    let e = st
        .entry(&id)
        .ok_or_else(|| ApiError::unknown_gallery(&id))?;
    let r = e.gallery.get(&rid).ok_or(Error::UnknownRecord(rid))?;
    Ok(Json(r.as_ref().clone()))
}

async fn get_detections(
    State(st): State<Arc<AppState>>,
    UrlPath((id, rid)): UrlPath<(String, String)>,
) -> ApiResult<DetectionsResponse> {
    let e = st
        .entry(&id)
        .ok_or_else(|| ApiError::unknown_gallery(&id))?;
    if e.gallery.get(&rid).is_none() {
        return Err(Error::UnknownRecord(rid).into());
    }
    Ok(Json(DetectionsResponse {
        detections: e.detections.get(&rid).cloned().unwrap_or_default(),
        record_id: rid,
    }))
}

/// Runs a search request against one gallery snapshot. The HTTP handler is a
/// thin wrapper around this.
pub fn run_search(
    gallery_id: &str,
    entry: &GalleryEntry,
    catalog: &ColourCatalog,
    default_weights: &FusionWeights,
    req: SearchRequest,
) -> Result<SearchResponse, ApiError> {
    if req.k == 0 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    let g = &entry.gallery;
    let probes: Vec<VehicleRecord> = match (req.probe, req.probe_ids) {
        (Some(p), None) => {
            p.validate()?;
            vec![p]
        }
        (None, Some(ids)) if !ids.is_empty() => ids
            .iter()
            .map(|rid| {
                g.get(rid)
                    .map(|r| r.as_ref().clone())
                    .ok_or_else(|| Error::UnknownRecord(rid.clone()))
            })
            .collect::<Result<_, _>>()?,
        _ => {
            return Err(ApiError::bad_request(
                "exactly one of `probe` or a non-empty `probe_ids` is required",
            ))
        }
    };
    let multi_probe = probes.len() > 1;
    let (mode, weights) = match req.mode {
        ModeName::ShapeOnly => (SearchMode::ShapeOnly, None),
        ModeName::ColourOnly => (SearchMode::ColourOnly, None),
        ModeName::Fused => {
            let w = req.weights.unwrap_or_else(|| default_weights.clone());
            w.validate()?;
            (SearchMode::Fused(w.clone()), Some(w))
        }
    };
    let missing = g
        .records()
        .filter(|r| {
            mode.required_modalities()
                .iter()
                .any(|&m| r.template(m).is_none())
        })
        .count();
    let mut diagnostics = SearchDiagnostics {
        gallery_size: g.len(),
        excluded_missing_modality: missing,
        ..Default::default()
    };

    let colour_of = |rid: &str| -> Result<Option<ColourDecision>, ApiError> {
        let rec = g.get(rid).ok_or_else(|| Error::UnknownRecord(rid.into()))?;
        match &rec.colour_template {
            Some(t) if Some(t.dim()) == catalog.dim() => Ok(Some(classify_colour(catalog, t)?)),
            _ => Ok(None),
        }
    };

    let hits: Vec<(RankedResult, Option<ColourDecision>)> = match &req.wanted_colour {
        Some(colour) => {
            if req.mode != ModeName::ShapeOnly {
                return Err(ApiError::bad_request(
                    "wanted_colour requires mode `shape_only`",
                ));
            }
            if !catalog.contains(colour) {
                return Err(Error::UnknownColourLabel(colour.clone()).into());
            }
            let ranked = g.multi_probe_search(&probes, &mode, usize::MAX)?;
            let mm = filter_by_colour(g, ranked, colour, catalog, req.k)?;
            diagnostics.excluded_no_colour_template = mm.diagnostics.excluded_no_colour_template;
            diagnostics.filtered_by_colour = mm.diagnostics.filtered_by_colour;
            mm.results
                .into_iter()
                .map(|h| (h.result, Some(h.colour)))
                .collect()
        }
        None => {
            let ranked = if multi_probe {
                g.multi_probe_search(&probes, &mode, req.k)?
            } else {
                g.search(&probes[0], &mode, req.k)?
            };
            ranked
                .into_iter()
                .map(|r| {
                    let c = colour_of(&r.record_id)?;
                    Ok((r, c))
                })
                .collect::<Result<_, ApiError>>()?
        }
    };

    let results = hits
        .into_iter()
        .map(|(result, colour)| SearchHit {
            detections: req.include_track_detections.then(|| {
                entry
                    .detections
                    .get(&result.record_id)
                    .cloned()
                    .unwrap_or_default()
            }),
            result,
            colour,
        })
        .collect();
    Ok(SearchResponse {
        gallery_id: gallery_id.into(),
        snapshot_version: g.snapshot_version(),
        mode: req.mode,
        weights,
        multi_probe,
        wanted_colour: req.wanted_colour,
        results,
        diagnostics,
    })
}

async fn search(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<SearchRequest>, JsonRejection>,
) -> ApiResult<SearchResponse> {
    let req = body(payload)?;
    let entry = st
        .entry(&id)
        .ok_or_else(|| ApiError::unknown_gallery(&id))?;
    let st2 = st.clone();
    tokio::task::spawn_blocking(move || {
        run_search(&id, &entry, &st2.catalog, &st2.default_weights, req)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
    .map(Json)
}

async fn save(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<SaveResponse> {
    st.persist(&id).map(Json)
}

async fn classify(
    State(st): State<Arc<AppState>>,
    payload: Result<Json<ClassifyRequest>, JsonRejection>,
) -> ApiResult<ColourDecision> {
    let req = body(payload)?;
    Ok(Json(classify_colour(&st.catalog, &req.template)?))
}

async fn calibrate(
    State(st): State<Arc<AppState>>,
    payload: Result<Json<CalibrateRequest>, JsonRejection>,
) -> ApiResult<FusionWeights> {
    let req = body(payload)?;
    let (genuine, impostor, default_id) =
        match (req.genuine_pairs, req.impostor_pairs, req.gallery_id) {
            (Some(g), Some(i), None) => (g, i, "pairs".to_string()),
            (None, None, Some(gid)) => {
                let entry = st
                    .entry(&gid)
                    .ok_or_else(|| ApiError::unknown_gallery(&gid))?;
                let probes = req.probes.ok_or_else(|| {
                    ApiError::bad_request("`probes` is required with `gallery_id`")
                })?;
                let (g, i) = calibration_pairs(&entry.gallery, &probes);
                (g, i, gid)
            }
            _ => return Err(ApiError::bad_request(
                "provide either `genuine_pairs` and `impostor_pairs`, or `gallery_id` and `probes`",
            )),
        };
    let w = tokio::task::spawn_blocking(move || {
        calibrate_weights(
            &genuine,
            &impostor,
            req.operating_far.unwrap_or(DEFAULT_OPERATING_FAR),
            req.grid_step.unwrap_or(DEFAULT_GRID_STEP),
            &req.calibration_set_id.unwrap_or(default_id),
        )
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(w))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods(Any)
            .allow_headers(Any),
    )
}

pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Router {
    let r = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/galleries", get(list_galleries))
        .route("/v1/galleries/{id}", put(create_gallery).get(gallery_info))
        .route("/v1/galleries/{id}/records", post(enroll))
        .route("/v1/galleries/{id}/records/{rid}", get(get_record))
        .route(
            "/v1/galleries/{id}/records/{rid}/detections",
            get(get_detections),
        )
        .route("/v1/galleries/{id}/search", post(search))
        .route("/v1/galleries/{id}/save", post(save))
        .route("/v1/classify/colour", post(classify))
        .route("/v1/calibrate", post(calibrate))
        .fallback(not_found)
        .with_state(state);
    match cors(cors_origins) {
        Some(layer) => r.layer(layer),
        None => r,
    }
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
}

/// Binds, serves until Ctrl-C, then writes every gallery to the data directory.
pub async fn serve(cfg: ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let state = Arc::new(AppState::from_config(&cfg)?);
    let listener = tokio::net::TcpListener::bind(&cfg.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state.clone(), &cfg.cors_origins))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    state
        .persist_all()
        .map_err(|e| format!("{}: {}", e.body.code, e.body.message))?;
    Ok(())
}
