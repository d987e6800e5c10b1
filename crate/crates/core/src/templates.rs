//! Templates, vehicle records and their serialized forms.
//!
//! A [`Template`] is a fixed-length feature vector for one modality. Values are
//! stored as `f32`; all norm and dot-product arithmetic runs in `f64`.
//!
//! Binary layout (little-endian):
//!
//! | offset | size | field                               |
//! |--------|------|-------------------------------------|
//! | 0      | 4    | magic `RVTP`                        |
//! | 4      | 1    | version (1)                         |
//! | 5      | 1    | modality (0 = shape, 1 = colour)    |
//! | 6      | 1    | flags (bit 0 = normalized)          |
//! | 7      | 1    | reserved                            |
//! | 8      | 4    | dim as `u32`                        |
//! | 12     | 4·dim| values as IEEE-754 `f32`            |

use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const TEMPLATE_MAGIC: [u8; 4] = *b"RVTP";
pub const TEMPLATE_VERSION: u8 = 1;
pub const TEMPLATE_HEADER_LEN: usize = 12;

const FLAG_NORMALIZED: u8 = 0b0000_0001;

/// Tolerance for "is normalized" checks on stored `f32` data.
pub const STORED_NORM_TOLERANCE: f64 = 1e-6;

/// Norms at or below this are treated as degenerate embeddings.
pub const ZERO_NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Shape,
    Colour,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Shape, Modality::Colour];

    fn to_byte(self) -> u8 {
        match self {
            Modality::Shape => 0,
            Modality::Colour => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Modality::Shape),
            1 => Some(Modality::Colour),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Shape => "shape",
            Modality::Colour => "colour",
        })
    }
}

/// Feature vector of one modality.
///
/// Immutable once built; every constructor enforces `dim >= 1`, finite values,
/// and (when flagged normalized) unit norm within [`STORED_NORM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    modality: Modality,
    values: Vec<f32>,
    normalized: bool,
}

impl Template {
    /// Raw (not normalized) template.
    pub fn new(modality: Modality, values: Vec<f32>) -> Result<Self> {
        Self::with_flag(modality, values, false)
    }

    /// Template whose values are already unit length.
    pub fn from_unit(modality: Modality, values: Vec<f32>) -> Result<Self> {
        Self::with_flag(modality, values, true)
    }

    /// Normalizes `values` in 64-bit precision and stores the result.
    pub fn from_raw_normalized(modality: Modality, values: &[f64]) -> Result<Self> {
        let unit = normalize_f64(values)?;
        Ok(Template {
            modality,
            values: unit.into_iter().map(|v| v as f32).collect(),
            normalized: true,
        })
    }

    fn with_flag(modality: Modality, values: Vec<f32>, normalized: bool) -> Result<Self> {
        let t = Template {
            modality,
            values,
            normalized,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvariantViolation(
                "template dim must be >= 1".into(),
            ));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("template value at index {i}")));
        }
        if self.normalized {
            let norm = self.norm();
            if (norm - 1.0).abs() > STORED_NORM_TOLERANCE {
                return Err(Error::InvariantViolation(format!(
                    "template flagged normalized has norm {norm}"
                )));
            }
        }
        Ok(())
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Euclidean norm accumulated in `f64`.
    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Unit-length copy of this template.
    pub fn normalize(&self) -> Result<Template> {
        let wide: Vec<f64> = self.values.iter().map(|&v| f64::from(v)).collect();
        Template::from_raw_normalized(self.modality, &wide)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TEMPLATE_HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(&TEMPLATE_MAGIC);
        out.push(TEMPLATE_VERSION);
        out.push(self.modality.to_byte());
        out.push(if self.normalized { FLAG_NORMALIZED } else { 0 });
        out.push(0);
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Template> {
        if bytes.len() < TEMPLATE_HEADER_LEN {
            return Err(Error::Format(format!(
                "template payload of {} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if bytes[0..4] != TEMPLATE_MAGIC {
            return Err(Error::Format("bad template magic".into()));
        }
        if bytes[4] != TEMPLATE_VERSION {
            return Err(Error::Format(format!(
                "unsupported template version {}",
                bytes[4]
            )));
        }
        let modality = Modality::from_byte(bytes[5])
            .ok_or_else(|| Error::Format(format!("unknown modality byte {}", bytes[5])))?;
        let flags = bytes[6];
        if flags & !FLAG_NORMALIZED != 0 {
            return Err(Error::Format(format!(
                "unknown template flags {flags:#04x}"
            )));
        }
        let dim = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        let body = &bytes[TEMPLATE_HEADER_LEN..];
        if body.len() != dim.saturating_mul(4) {
            return Err(Error::Format(format!(
                "template declares dim {dim} but carries {} payload bytes",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Template {
            modality,
            values,
            normalized: flags & FLAG_NORMALIZED != 0,
        };
        t.validate().map_err(|e| match e {
            Error::NonFinite(m) => Error::InvariantViolation(m),
            other => other,
        })?;
        Ok(t)
    }

    pub fn to_base64(&self) -> String {
        BASE64.encode(self.encode())
    }

    pub fn from_base64(s: &str) -> Result<Template> {
        let bytes = BASE64
            .decode(s.trim())
            .map_err(|e| Error::Format(format!("template base64: {e}")))?;
        Template::decode(&bytes)
    }
}

impl Serialize for Template {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for Template {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Template::from_base64(&s).map_err(serde::de::Error::custom)
    }
}

/// Normalize to unit length in 64-bit precision.
pub fn normalize_f64(values: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("value at index {i}")));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= ZERO_NORM_EPSILON {
        return Err(Error::ZeroVector);
    }
    Ok(values.iter().map(|v| v / norm).collect())
}

pub fn normalize(t: &Template) -> Result<Template> {
    t.normalize()
}

pub fn encode_template(t: &Template) -> Vec<u8> {
    t.encode()
}

pub fn decode_template(bytes: &[u8]) -> Result<Template> {
    Template::decode(bytes)
}

/// Make × model × released year × perspective. Equality is exact and
/// case-sensitive on all four parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FineGrainedClass {
    pub make: String,
    pub model: String,
    pub released_year: String,
    pub perspective: String,
}

impl FineGrainedClass {
    pub fn new(
        make: impl Into<String>,
        model: impl Into<String>,
        released_year: impl Into<String>,
        perspective: impl Into<String>,
    ) -> Result<Self> {
        let c = FineGrainedClass {
            make: make.into(),
            model: model.into(),
            released_year: released_year.into(),
            perspective: perspective.into(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("make", &self.make),
            ("model", &self.model),
            ("released_year", &self.released_year),
            ("perspective", &self.perspective),
        ] {
            if v.is_empty() {
                return Err(Error::InvariantViolation(format!(
                    "fine-grained class field `{name}` is empty"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub camera: String,
    #[serde(default)]
    pub track_id: Option<String>,
    #[serde(default)]
    pub frame_index: Option<u64>,
}

/// A gallery or probe entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub record_id: String,
    /// Ground-truth identity; `None` when unknown.
    #[serde(default)]
    pub vehicle_id: Option<String>,
    #[serde(default)]
    pub class: Option<FineGrainedClass>,
    #[serde(default)]
    pub colour_label: Option<String>,
    #[serde(default)]
    pub shape_template: Option<Template>,
    #[serde(default)]
    pub colour_template: Option<Template>,
    #[serde(default)]
    pub source: Source,
}

impl VehicleRecord {
    pub fn validate(&self) -> Result<()> {
        if self.record_id.is_empty() {
            return Err(Error::InvariantViolation("record_id is empty".into()));
        }
        if self.shape_template.is_none() && self.colour_template.is_none() {
            return Err(Error::InvariantViolation(format!(
                "record `{}` carries no template",
                self.record_id
            )));
        }
        for (slot, expected) in [
            (&self.shape_template, Modality::Shape),
            (&self.colour_template, Modality::Colour),
        ] {
            if let Some(t) = slot {
                if t.modality() != expected {
                    return Err(Error::ModalityMismatch {
                        expected,
                        found: t.modality(),
                    });
                }
                t.validate()?;
            }
        }
        if let Some(c) = &self.class {
            c.validate()?;
        }
        Ok(())
    }

    pub fn template(&self, modality: Modality) -> Option<&Template> {
        match modality {
            Modality::Shape => self.shape_template.as_ref(),
            Modality::Colour => self.colour_template.as_ref(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: VehicleRecord = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }
}

impl AsRef<VehicleRecord> for VehicleRecord {
    fn as_ref(&self) -> &VehicleRecord {
        self
    }
}
