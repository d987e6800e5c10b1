//! Best-shot selection over detection tracks and JSON-lines loaders.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::templates::{Modality, Source, Template, VehicleRecord};

/// One detector output inside a track. `quality` is the upstream detector
/// confidence or sharpness score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub track_id: String,
    pub frame_index: u64,
    pub quality: f64,
    #[serde(default)]
    pub shape_template: Option<Template>,
    #[serde(default)]
    pub colour_template: Option<Template>,
    pub camera: String,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        if !self.quality.is_finite() {
            return Err(Error::NonFinite(format!("quality {}", self.quality)));
        }
        if self.quality < 0.0 {
            return Err(Error::InvariantViolation(format!(
                "negative quality {}",
                self.quality
            )));
        }
        if self.shape_template.is_none() && self.colour_template.is_none() {
            return Err(Error::InvariantViolation(format!(
                "detection {}@{} carries no template",
                self.track_id, self.frame_index
            )));
        }
        for (slot, m) in [
            (&self.shape_template, Modality::Shape),
            (&self.colour_template, Modality::Colour),
        ] {
            if let Some(t) = slot {
                if t.modality() != m {
                    return Err(Error::ModalityMismatch {
                        expected: m,
                        found: t.modality(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Record id used for a track's best-shot.
pub fn best_shot_id(camera: &str, track_id: &str) -> String {
    format!("{camera}/{track_id}")
}

/// The detection with the highest quality; equal qualities go to the
/// earliest frame.
pub fn select_best_shot(track: &[Detection]) -> Result<&Detection> {
    let first = track.first().ok_or(Error::EmptyTrack)?;
    for d in track {
        if d.track_id != first.track_id || d.camera != first.camera {
            return Err(Error::MixedTrack);
        }
        d.validate()?;
    }
    Ok(track
        .iter()
        .reduce(|best, d| {
            if d.quality > best.quality
                || (d.quality == best.quality && d.frame_index < best.frame_index)
            {
                d
            } else {
                best
            }
        })
        .expect("track is non-empty"))
}

pub fn best_shot(track: &[Detection]) -> Result<VehicleRecord> {
    let d = select_best_shot(track)?;
    Ok(VehicleRecord {
        record_id: best_shot_id(&d.camera, &d.track_id),
        vehicle_id: None,
        class: None,
        colour_label: None,
        shape_template: d.shape_template.clone(),
        colour_template: d.colour_template.clone(),
        source: Source {
            camera: d.camera.clone(),
            track_id: Some(d.track_id.clone()),
            frame_index: Some(d.frame_index),
        },
    })
}

/// Splits a detection stream into tracks keyed by `(camera, track_id)`.
pub fn group_tracks(detections: Vec<Detection>) -> BTreeMap<(String, String), Vec<Detection>> {
    let mut tracks: BTreeMap<(String, String), Vec<Detection>> = BTreeMap::new();
    for d in detections {
        tracks
            .entry((d.camera.clone(), d.track_id.clone()))
            .or_default()
            .push(d);
    }
    tracks
}

fn read_json_lines<T: DeserializeOwned>(
    path: &Path,
    check: impl Fn(&T) -> Result<()>,
) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| Error::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        check(&item).map_err(|e| Error::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Loads validated records from a JSON-lines file; blank lines are skipped.
pub fn load_embedding_set(path: impl AsRef<Path>) -> Result<Vec<VehicleRecord>> {
    read_json_lines(path.as_ref(), VehicleRecord::validate)
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    read_json_lines(path.as_ref(), Detection::validate)
}

pub fn write_json_lines<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| Error::Format(e.to_string()))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}
