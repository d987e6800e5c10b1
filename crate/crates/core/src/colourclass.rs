//! Nearest-prototype colour classification and Mix-Mode search.
//!
//! Mix-Mode ranks the whole gallery by shape, then keeps only the records whose
//! colour template classifies as the requested colour.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gallery::{Gallery, RankedResult, SearchMode};
use crate::matching::dot;
use crate::templates::{Modality, Template, VehicleRecord};

/// Stand-in label set; deployments override it through the catalog file.
/// "silver" is deliberately absent.
pub const DEFAULT_COLOUR_LABELS: [&str; 10] = [
    "black", "white", "grey", "red", "blue", "green", "yellow", "orange", "brown", "beige",
];

pub const CATALOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ColourClass {
    pub label: String,
    pub prototype: Template,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColourCatalog {
    classes: Vec<ColourClass>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    version: u32,
    labels: Vec<String>,
    dim: usize,
    prototypes: Vec<Template>,
}

impl ColourCatalog {
    /// Validates unique labels, unit-length colour prototypes and a shared dim.
    pub fn new(classes: Vec<ColourClass>) -> Result<Self> {
        let mut seen = HashSet::new();
        let dim = classes.first().map(|c| c.prototype.dim());
        for c in &classes {
            if !seen.insert(c.label.as_str()) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate colour label `{}`",
                    c.label
                )));
            }
            if c.label.is_empty() {
                return Err(Error::InvariantViolation("empty colour label".into()));
            }
            if c.prototype.modality() != Modality::Colour {
                return Err(Error::ModalityMismatch {
                    expected: Modality::Colour,
                    found: c.prototype.modality(),
                });
            }
            if !c.prototype.is_normalized() {
                return Err(Error::NotNormalized);
            }
            if Some(c.prototype.dim()) != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim.unwrap_or(0),
                    found: c.prototype.dim(),
                });
            }
        }
        Ok(ColourCatalog { classes })
    }

    /// One prototype per label, drawn uniformly on the unit sphere.
    pub fn random<R: Rng + ?Sized>(labels: &[&str], dim: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("colour dim must be >= 1".into()));
        }
        let classes = labels
            .iter()
            .map(|&label| {
                let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                Ok(ColourClass {
                    label: label.to_string(),
                    prototype: Template::from_raw_normalized(Modality::Colour, &raw)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ColourCatalog::new(classes)
    }

    /// Prototypes as the normalized mean of each label's colour templates.
    /// Labels are ordered by first appearance.
    pub fn fit<'a, I>(labelled: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a Template)>,
    {
        let mut order: Vec<String> = Vec::new();
        let mut sums: Vec<Vec<f64>> = Vec::new();
        for (label, t) in labelled {
            if t.modality() != Modality::Colour {
                return Err(Error::ModalityMismatch {
                    expected: Modality::Colour,
                    found: t.modality(),
                });
            }
            let i = match order.iter().position(|l| l == label) {
                Some(i) => i,
                None => {
                    order.push(label.to_string());
                    sums.push(vec![0.0; t.dim()]);
                    order.len() - 1
                }
            };
            if sums[i].len() != t.dim() {
                return Err(Error::DimensionMismatch {
                    expected: sums[i].len(),
                    found: t.dim(),
                });
            }
            for (acc, &v) in sums[i].iter_mut().zip(t.values()) {
                *acc += f64::from(v);
            }
        }
        let classes = order
            .into_iter()
            .zip(sums)
            .map(|(label, sum)| {
                Ok(ColourClass {
                    label,
                    prototype: Template::from_raw_normalized(Modality::Colour, &sum)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ColourCatalog::new(classes)
    }

    pub fn classes(&self) -> &[ColourClass] {
        &self.classes
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.label.as_str())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.classes.first().map(|c| c.prototype.dim())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.classes.iter().any(|c| c.label == label)
    }

    pub fn prototype(&self, label: &str) -> Option<&Template> {
        self.classes
            .iter()
            .find(|c| c.label == label)
            .map(|c| &c.prototype)
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            version: CATALOG_VERSION,
            labels: self.classes.iter().map(|c| c.label.clone()).collect(),
            dim: self.dim().unwrap_or(0),
            prototypes: self.classes.iter().map(|c| c.prototype.clone()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CatalogFile =
            serde_json::from_str(s).map_err(|e| Error::Format(format!("colour catalog: {e}")))?;
        if file.version != CATALOG_VERSION {
            return Err(Error::Format(format!(
                "unsupported catalog version {}",
                file.version
            )));
        }
        if file.labels.len() != file.prototypes.len() {
            return Err(Error::Format(format!(
                "{} labels but {} prototypes",
                file.labels.len(),
                file.prototypes.len()
            )));
        }
        if let Some(p) = file.prototypes.iter().find(|p| p.dim() != file.dim) {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                found: p.dim(),
            });
        }
        ColourCatalog::new(
            file.labels
                .into_iter()
                .zip(file.prototypes)
                .map(|(label, prototype)| ColourClass { label, prototype })
                .collect(),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ColourCatalog::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColourDecision {
    pub label: String,
    /// Cosine to the winning prototype.
    pub confidence: f64,
    /// `None` for single-class catalogs.
    pub runner_up: Option<String>,
    /// `confidence` minus the runner-up cosine; 0 without a runner-up.
    pub margin: f64,
}

/// Label of the prototype with the highest cosine; ties go to catalog order.
pub fn classify_colour(cat: &ColourCatalog, t: &Template) -> Result<ColourDecision> {
    if cat.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if t.modality() != Modality::Colour {
        return Err(Error::ModalityMismatch {
            expected: Modality::Colour,
            found: t.modality(),
        });
    }
    if !t.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let dim = cat.dim().unwrap_or(0);
    if t.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: t.dim(),
        });
    }

    let mut best: Option<(usize, f64)> = None;
    let mut second: Option<(usize, f64)> = None;
    for (i, c) in cat.classes.iter().enumerate() {
        let s = dot(t.values(), c.prototype.values());
        match best {
            Some((_, b)) if s <= b => {
                if second.is_none_or(|(_, r)| s > r) {
                    second = Some((i, s));
                }
            }
            _ => {
                second = best;
                best = Some((i, s));
            }
        }
    }
    let (bi, bs) = best.expect("catalog is non-empty");
    Ok(ColourDecision {
        label: cat.classes[bi].label.clone(),
        confidence: bs,
        runner_up: second.map(|(i, _)| cat.classes[i].label.clone()),
        margin: second.map_or(0.0, |(_, s)| bs - s),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixModeHit {
    #[serde(flatten)]
    pub result: RankedResult,
    pub colour: ColourDecision,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixModeDiagnostics {
    /// Records ranked by shape.
    pub shape_ranked: usize,
    /// Shape-ranked records dropped because they lack a colour template.
    pub excluded_no_colour_template: usize,
    /// Records whose colour classified as something else.
    pub filtered_by_colour: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixModeResult {
    pub results: Vec<MixModeHit>,
    pub diagnostics: MixModeDiagnostics,
}

/// Shape search over the whole gallery, filtered to `wanted_colour`, truncated
/// to `k` and re-ranked from 1.
pub fn mix_mode_search(
    g: &Gallery,
    shape_probe: &VehicleRecord,
    wanted_colour: &str,
    cat: &ColourCatalog,
    k: usize,
) -> Result<MixModeResult> {
    if cat.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if !cat.contains(wanted_colour) {
        return Err(Error::UnknownColourLabel(wanted_colour.to_string()));
    }
    let ranked = g.search(shape_probe, &SearchMode::ShapeOnly, usize::MAX)?;
    filter_by_colour(g, ranked, wanted_colour, cat, k)
}

/// Rank-then-filter step shared by single- and multi-probe Mix-Mode.
pub fn filter_by_colour(
    g: &Gallery,
    ranked: Vec<RankedResult>,
    wanted_colour: &str,
    cat: &ColourCatalog,
    k: usize,
) -> Result<MixModeResult> {
    let mut diagnostics = MixModeDiagnostics {
        shape_ranked: ranked.len(),
        ..Default::default()
    };
    let mut results = Vec::new();
    for r in ranked {
        let rec = g
            .get(&r.record_id)
            .ok_or_else(|| Error::UnknownRecord(r.record_id.clone()))?;
        let Some(ct) = rec.colour_template.as_ref() else {
            diagnostics.excluded_no_colour_template += 1;
            continue;
        };
        let decision = classify_colour(cat, ct)?;
        if decision.label != wanted_colour {
            diagnostics.filtered_by_colour += 1;
            continue;
        }
        if results.len() < k {
            results.push(MixModeHit {
                result: RankedResult {
                    rank: results.len() + 1,
                    ..r
                },
                colour: decision,
            });
        }
    }
    Ok(MixModeResult {
        results,
        diagnostics,
    })
}
