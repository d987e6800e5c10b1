//! Deterministic synthetic embeddings standing in for the shape and colour
//! feature extractors.
//!
//! Random source: ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, Gaussian draws via `rand_distr::StandardNormal`. Draw order
//! is fixed (class prototypes, then per identity: shape vector, colour label,
//! colour vector, then per image: shape noise, colour noise), so a seed
//! reproduces the same scenario bit-for-bit on every platform.
//!
//! Model: each fine-grained class gets a unit prototype uniform on the sphere;
//! an identity is `normalize(prototype + N(0, inter_id_sigma²))`; an image is
//! `normalize(identity + N(0, intra_class_sigma²))`. Colour works the same way
//! around the catalog prototype of the identity's colour label. Image 0 of each
//! identity goes to the gallery (single-shot), the rest are probes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::colourclass::{ColourCatalog, DEFAULT_COLOUR_LABELS};
use crate::error::{Error, Result};
use crate::evaluation::{DatasetManifest, Split};
use crate::ingest::write_json_lines;
use crate::templates::{FineGrainedClass, Modality, Source, Template, VehicleRecord};

/// Seed of the shared colour catalog used by the default scenarios.
pub const DEFAULT_CATALOG_SEED: u64 = 0x5EED_C010;

const PERSPECTIVES: [&str; 4] = ["front", "rear", "left", "right"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confounder {
    pub label_a: String,
    pub label_b: String,
    pub blend: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub dim_shape: usize,
    pub dim_colour: usize,
    pub n_classes: usize,
    pub ids_per_class: usize,
    pub images_per_id: usize,
    pub intra_class_sigma: f64,
    pub inter_id_sigma: f64,
    /// Spread of an identity's colour vector around its label prototype.
    pub colour_id_sigma: f64,
    /// Per-image colour noise.
    pub colour_image_sigma: f64,
    pub colour_catalog: ColourCatalog,
    pub confounder: Option<Confounder>,
}

/// The shared 10-label catalog of the default scenarios.
pub fn default_catalog(dim_colour: usize) -> Result<ColourCatalog> {
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_CATALOG_SEED);
    ColourCatalog::random(&DEFAULT_COLOUR_LABELS, dim_colour, &mut rng)
}

impl SynthConfig {
    /// Desk-scale scenario: 40 classes × 5 identities × 4 images, dims 64/16.
    pub fn desk(seed: u64) -> Self {
        SynthConfig {
            seed,
            dim_shape: 64,
            dim_colour: 16,
            n_classes: 40,
            ids_per_class: 5,
            images_per_id: 4,
            intra_class_sigma: 0.10,
            inter_id_sigma: 0.05,
            colour_id_sigma: 0.09,
            colour_image_sigma: 0.10,
            colour_catalog: default_catalog(16).expect("default catalog is valid"),
            confounder: None,
        }
    }

    /// Grey vehicles rendered close to white, blended by `blend`.
    pub fn with_grey_white_confounder(mut self, blend: f64) -> Self {
        self.confounder = Some(Confounder {
            label_a: "grey".into(),
            label_b: "white".into(),
            blend,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.dim_shape == 0 || self.dim_colour == 0 {
            return bad("dims must be >= 1");
        }
        if self.n_classes == 0 || self.ids_per_class == 0 {
            return bad("n_classes and ids_per_class must be >= 1");
        }
        if self.images_per_id < 2 {
            return bad("images_per_id must be >= 2 (one gallery image plus probes)");
        }
        for (name, s) in [
            ("intra_class_sigma", self.intra_class_sigma),
            ("inter_id_sigma", self.inter_id_sigma),
            ("colour_id_sigma", self.colour_id_sigma),
            ("colour_image_sigma", self.colour_image_sigma),
        ] {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {s} must be finite and >= 0"
                )));
            }
        }
        if self.colour_catalog.is_empty() {
            return bad("colour catalog is empty");
        }
        if self.colour_catalog.dim() != Some(self.dim_colour) {
            return bad("colour catalog dim differs from dim_colour");
        }
        if let Some(c) = &self.confounder {
            if !(0.0..=1.0).contains(&c.blend) {
                return Err(Error::InvalidConfig(format!(
                    "blend {} outside [0, 1]",
                    c.blend
                )));
            }
            for l in [&c.label_a, &c.label_b] {
                if !self.colour_catalog.contains(l) {
                    return Err(Error::InvalidConfig(format!(
                        "confounder label `{l}` not in catalog"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// probe record id → mate gallery record id.
    pub mates: BTreeMap<String, String>,
    /// vehicle id → true colour label.
    pub colour_labels: BTreeMap<String, String>,
    /// vehicle id → fine-grained class.
    pub classes: BTreeMap<String, FineGrainedClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub gallery: Vec<VehicleRecord>,
    pub probes: Vec<VehicleRecord>,
    pub ground_truth: GroundTruth,
    pub catalog: ColourCatalog,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn perturb(base: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let noisy: Vec<f64> = base
        .iter()
        .map(|b| b + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    crate::templates::normalize_f64(&noisy)
}

fn wide(t: &Template) -> Vec<f64> {
    t.values().iter().map(|&v| f64::from(v)).collect()
}

fn class_label(c: usize) -> FineGrainedClass {
    FineGrainedClass {
        make: format!("make{:02}", c / 10),
        model: format!("model{c:03}"),
        released_year: format!("{}", 2010 + c % 9),
        perspective: PERSPECTIVES[c % PERSPECTIVES.len()].to_string(),
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let catalog = &cfg.colour_catalog;

    let prototypes: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| crate::templates::normalize_f64(&gaussian(&mut rng, cfg.dim_shape)))
        .collect::<Result<_>>()?;
    let confounder_target = cfg
        .confounder
        .as_ref()
        .map(|c| wide(catalog.prototype(&c.label_b).expect("validated label")));

    let mut scenario = Scenario {
        gallery: Vec::new(),
        probes: Vec::new(),
        ground_truth: GroundTruth::default(),
        catalog: catalog.clone(),
    };
    for (c, proto) in prototypes.iter().enumerate() {
        let class = class_label(c);
        for j in 0..cfg.ids_per_class {
            let vid = format!("veh-{c:03}-{j:02}");
            let identity = perturb(proto, cfg.inter_id_sigma, &mut rng)?;
            let colour_idx = rng.random_range(0..catalog.len());
            let colour_class = &catalog.classes()[colour_idx];
            let colour_identity = perturb(
                &wide(&colour_class.prototype),
                cfg.colour_id_sigma,
                &mut rng,
            )?;
            let confounded = cfg
                .confounder
                .as_ref()
                .filter(|k| k.label_a == colour_class.label && k.blend > 0.0)
                .map(|k| k.blend);
            let gallery_id = format!("gal-{vid}");
            scenario
                .ground_truth
                .colour_labels
                .insert(vid.clone(), colour_class.label.clone());
            scenario
                .ground_truth
                .classes
                .insert(vid.clone(), class.clone());

            for img in 0..cfg.images_per_id {
                let shape = perturb(&identity, cfg.intra_class_sigma, &mut rng)?;
                let mut colour = perturb(&colour_identity, cfg.colour_image_sigma, &mut rng)?;
                let is_probe = img > 0;
                if let (true, Some(blend), Some(target)) =
                    (is_probe, confounded, &confounder_target)
                {
                    let mixed: Vec<f64> = colour
                        .iter()
                        .zip(target)
                        .map(|(a, b)| (1.0 - blend) * a + blend * b)
                        .collect();
                    colour = crate::templates::normalize_f64(&mixed)?;
                }
                let record_id = if is_probe {
                    format!("prb-{vid}-{img}")
                } else {
                    gallery_id.clone()
                };
                let record = VehicleRecord {
                    record_id: record_id.clone(),
                    vehicle_id: Some(vid.clone()),
                    class: Some(class.clone()),
                    colour_label: Some(colour_class.label.clone()),
                    shape_template: Some(Template::from_raw_normalized(Modality::Shape, &shape)?),
                    colour_template: Some(Template::from_raw_normalized(
                        Modality::Colour,
                        &colour,
                    )?),
                    source: Source {
                        camera: if is_probe {
                            "synthetic-probe"
                        } else {
                            "synthetic-gallery"
                        }
                        .into(),
                        track_id: Some(vid.clone()),
                        frame_index: Some(img as u64),
                    },
                };
                if is_probe {
                    scenario
                        .ground_truth
                        .mates
                        .insert(record_id, gallery_id.clone());
                    scenario.probes.push(record);
                } else {
                    scenario.gallery.push(record);
                }
            }
        }
    }
    Ok(scenario)
}

/// [`generate`] for a configuration that must carry a confounder.
pub fn confounder_scenario(cfg: &SynthConfig) -> Result<Scenario> {
    if cfg.confounder.is_none() {
        return Err(Error::MissingConfounder);
    }
    generate(cfg)
}

pub const GALLERY_RECORDS_FILE: &str = "gallery.jsonl";
pub const PROBE_RECORDS_FILE: &str = "probes.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const CATALOG_FILE: &str = "catalog.json";
pub const MANIFEST_FILE: &str = "manifest.json";

impl Scenario {
    pub fn manifest(&self, name: &str) -> DatasetManifest {
        let ids = |rs: &[VehicleRecord]| {
            rs.iter()
                .filter_map(|r| r.vehicle_id.as_deref())
                .collect::<std::collections::BTreeSet<_>>()
                .len()
        };
        DatasetManifest {
            name: name.to_string(),
            single_shot: true,
            training: Split::counts(0, 0),
            probe: Split {
                ids: ids(&self.probes),
                images: self.probes.len(),
                records: Some(PROBE_RECORDS_FILE.into()),
            },
            gallery: Split {
                ids: ids(&self.gallery),
                images: self.gallery.len(),
                records: Some(GALLERY_RECORDS_FILE.into()),
            },
        }
    }

    /// Writes records, ground truth, catalog and manifest into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>, name: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_json_lines(dir.join(GALLERY_RECORDS_FILE), &self.gallery)?;
        write_json_lines(dir.join(PROBE_RECORDS_FILE), &self.probes)?;
        let gt = serde_json::to_string_pretty(&self.ground_truth)
            .map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join(GROUND_TRUTH_FILE), gt + "\n")?;
        self.catalog.save(dir.join(CATALOG_FILE))?;
        let manifest = serde_json::to_string_pretty(&self.manifest(name))
            .map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), manifest + "\n")?;
        Ok(())
    }
}
