use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use revid_core::evaluation::{calibration_pairs, DatasetManifest, ProtocolOutcome};
use revid_core::ingest::{group_tracks, write_json_lines};
use revid_core::matching::{DEFAULT_GRID_STEP, DEFAULT_OPERATING_FAR};
use revid_core::synthgen::{default_catalog, Confounder, SynthConfig, MANIFEST_FILE};
use revid_core::{
    best_shot, calibrate_weights, generate, load_detections, load_embedding_set, mix_mode_search,
    run_multi_probe_protocol, run_protocol, ColourCatalog, Execution, FusionWeights, Gallery,
    Modality, Report, SearchMode, VehicleRecord,
};
use revid_service::ServiceConfig;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "revid",
    version,
    about = "Vehicle re-identification: enrollment, search and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Shape,
    Colour,
    Fused,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario directory (records, ground truth, catalog, manifest).
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synthetic")]
        name: String,
        #[arg(long)]
        n_classes: Option<usize>,
        #[arg(long)]
        ids_per_class: Option<usize>,
        #[arg(long)]
        images_per_id: Option<usize>,
        #[arg(long)]
        intra_sigma: Option<f64>,
        #[arg(long)]
        inter_sigma: Option<f64>,
        #[arg(long)]
        colour_id_sigma: Option<f64>,
        #[arg(long)]
        colour_image_sigma: Option<f64>,
        /// Blend probe colours of `--confound-from` toward `--confound-to`.
        #[arg(long)]
        confounder_blend: Option<f64>,
        #[arg(long, default_value = "grey")]
        confound_from: String,
        #[arg(long, default_value = "white")]
        confound_to: String,
    },
    /// Enroll records (and best-shots of detection tracks) into a gallery file.
    Enroll {
        /// Gallery file; created if it does not exist.
        #[arg(long)]
        gallery: PathBuf,
        /// JSON-lines vehicle records.
        #[arg(long)]
        records: Option<PathBuf>,
        /// JSON-lines detections; each track contributes its best-shot.
        #[arg(long)]
        detections: Option<PathBuf>,
    },
    /// Rank gallery records against probe records.
    Search {
        #[arg(long)]
        gallery: PathBuf,
        /// JSON-lines probe records.
        #[arg(long)]
        probes: PathBuf,
        #[arg(long, value_enum, default_value = "shape")]
        mode: Mode,
        /// Fusion weights JSON (from `calibrate`); plain sum when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Score every gallery record by its best match over all probes.
        #[arg(long)]
        multi_probe: bool,
    },
    /// Shape search filtered to one colour class.
    Mixmode {
        #[arg(long)]
        gallery: PathBuf,
        /// JSON-lines probe records; each is searched separately.
        #[arg(long)]
        probes: PathBuf,
        #[arg(long)]
        colour: String,
        /// Colour catalog JSON; the built-in catalog is used when omitted.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Fit fusion weights on a labelled scenario.
    Calibrate {
        /// Scenario directory containing a manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OPERATING_FAR)]
        far: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the identification/verification protocol and write report files.
    Evaluate {
        /// Scenario directory containing a manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "shape")]
        mode: Mode,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        multi_probe: bool,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory for report.json, roc.csv and cmc.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce detection tracks to best-shot records.
    Bestshot {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        /// TOML configuration file; REVID_* environment variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        demo_seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<revid_core::Error>())
                .map_or("Error", |c| c.code());
            eprintln!("{code}: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            seed,
            out,
            name,
            n_classes,
            ids_per_class,
            images_per_id,
            intra_sigma,
            inter_sigma,
            colour_id_sigma,
            colour_image_sigma,
            confounder_blend,
            confound_from,
            confound_to,
        } => {
            let mut cfg = SynthConfig::desk(seed);
            set(&mut cfg.n_classes, n_classes);
            set(&mut cfg.ids_per_class, ids_per_class);
            set(&mut cfg.images_per_id, images_per_id);
            set(&mut cfg.intra_class_sigma, intra_sigma);
            set(&mut cfg.inter_id_sigma, inter_sigma);
            set(&mut cfg.colour_id_sigma, colour_id_sigma);
            set(&mut cfg.colour_image_sigma, colour_image_sigma);
            if let Some(blend) = confounder_blend {
                cfg.confounder = Some(Confounder {
                    label_a: confound_from,
                    label_b: confound_to,
                    blend,
                });
            }
            let sc = generate(&cfg)?;
            sc.write_to_dir(&out, &name)?;
            println!(
                "wrote {} gallery and {} probe records to {}",
                sc.gallery.len(),
                sc.probes.len(),
                out.display()
            );
        }
        Command::Enroll {
            gallery,
            records,
            detections,
        } => {
            let g = if gallery.exists() {
                load_gallery(&gallery)?
            } else {
                Gallery::new()
            };
            let mut batch = match &records {
                Some(p) => load_records(p)?,
                None => Vec::new(),
            };
            if let Some(p) = &detections {
                let dets = load_detections(p)
                    .with_context(|| format!("loading detections {}", p.display()))?;
                for track in group_tracks(dets).into_values() {
                    batch.push(best_shot(&track)?);
                }
            }
            if batch.is_empty() {
                return Err(anyhow!(
                    "nothing to enroll: pass --records and/or --detections"
                ));
            }
            let n = batch.len();
            let g = g.enroll_all(batch)?;
            g.save(&gallery)?;
            println!("enrolled {n} records; gallery now holds {}", g.len());
        }
        Command::Search {
            gallery,
            probes,
            mode,
            weights,
            k,
            multi_probe,
        } => {
            let g = load_gallery(&gallery)?;
            let probes = load_probes(&probes)?;
            let mode = search_mode(mode, weights.as_deref())?;
            let mut out = io::stdout().lock();
            if multi_probe {
                let results = g.multi_probe_search(&probes, &mode, k)?;
                let ids: Vec<&str> = probes.iter().map(|p| p.record_id.as_str()).collect();
                json_line(
                    &mut out,
                    &serde_json::json!({ "probe_ids": ids, "results": results }),
                )?;
            } else {
                for p in &probes {
                    let results = g.search(p, &mode, k)?;
                    json_line(
                        &mut out,
                        &serde_json::json!({ "probe_id": p.record_id, "results": results }),
                    )?;
                }
            }
        }
        Command::Mixmode {
            gallery,
            probes,
            colour,
            catalog,
            k,
        } => {
            let g = load_gallery(&gallery)?;
            let probes = load_probes(&probes)?;
            let cat = load_catalog(catalog.as_deref(), &g)?;
            let mut out = io::stdout().lock();
            for p in &probes {
                let r = mix_mode_search(&g, p, &colour, &cat, k)?;
                json_line(
                    &mut out,
                    &serde_json::json!({
                        "probe_id": p.record_id,
                        "results": r.results,
                        "diagnostics": r.diagnostics,
                    }),
                )?;
            }
        }
        Command::Calibrate {
            data,
            far,
            step,
            out,
        } => {
            let (_, g, probes) = load_scenario(&data)?;
            let (gen, imp) = calibration_pairs(&g, &probes);
            let id = data.display().to_string();
            let w = calibrate_weights(&gen, &imp, far, step, &id)?;
            fs::write(&out, serde_json::to_string_pretty(&w)? + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "w_shape={} w_colour={} ({})",
                w.w_shape,
                w.w_colour,
                out.display()
            );
        }
        Command::Evaluate {
            data,
            mode,
            weights,
            multi_probe,
            threads,
            out,
        } => {
            let (manifest, g, probes) = load_scenario(&data)?;
            let mode = search_mode(mode, weights.as_deref())?;
            let eval = || -> revid_core::Result<ProtocolOutcome> {
                if multi_probe {
                    run_multi_probe_protocol(&manifest, &g, &probes, &mode, Execution::Parallel)
                } else {
                    run_protocol(&manifest, &g, &probes, &mode, Execution::Parallel)
                }
            };
            let outcome = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()?
                    .install(eval)?,
                None => eval()?,
            };
            let report = Report::new(&manifest.name, &mode, multi_probe, g.len(), &outcome);
            fs::create_dir_all(&out)?;
            fs::write(out.join("report.json"), report.to_json())?;
            fs::write(out.join("roc.csv"), report.roc_csv())?;
            fs::write(out.join("cmc.csv"), report.cmc_csv())?;
            println!(
                "{} {}{}: {} probes, {} gallery records",
                report.protocol,
                report.mode,
                if multi_probe { " (multi-probe)" } else { "" },
                report.n_probes,
                report.gallery_size
            );
            println!("Rank-1: {:.4}", report.rank1);
            println!("Rank-5: {:.4}", report.rank5);
            for v in &report.vr_at_far {
                println!("VR@FAR={}: {:.4}", v.far, v.vr);
            }
        }
        Command::Bestshot { detections, out } => {
            let dets = load_detections(&detections)
                .with_context(|| format!("loading detections {}", detections.display()))?;
            let tracks = group_tracks(dets);
            let records = tracks
                .values()
                .map(|t| best_shot(t))
                .collect::<revid_core::Result<Vec<_>>>()?;
            write_json_lines(&out, &records)?;
            println!("{} tracks -> {}", records.len(), out.display());
        }
        Command::Serve {
            config,
            bind,
            data_dir,
            demo_seed,
        } => {
            let mut cfg = ServiceConfig::load(config.as_deref()).map_err(|e| anyhow!(e))?;
            if let Some(b) = bind {
                cfg.bind = b;
            }
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            if demo_seed.is_some() {
                cfg.demo_seed = demo_seed;
            }
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| "info".into()),
                )
                .with_writer(io::stderr)
                .init();
            tokio::runtime::Runtime::new()?
                .block_on(revid_service::serve(cfg))
                .map_err(|e| anyhow!(e))?;
        }
    }
    Ok(())
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn json_line<T: Serialize>(out: &mut impl Write, v: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, v)?;
    writeln!(out)?;
    Ok(())
}

fn load_gallery(path: &Path) -> Result<Gallery> {
    Gallery::load(path).with_context(|| format!("loading gallery {}", path.display()))
}

fn load_records(path: &Path) -> Result<Vec<VehicleRecord>> {
    load_embedding_set(path).with_context(|| format!("loading records {}", path.display()))
}

fn load_probes(path: &Path) -> Result<Vec<VehicleRecord>> {
    let probes = load_records(path)?;
    if probes.is_empty() {
        return Err(revid_core::Error::EmptyProbeSet.into());
    }
    Ok(probes)
}

fn search_mode(mode: Mode, weights: Option<&Path>) -> Result<SearchMode> {
    Ok(match mode {
        Mode::Shape => SearchMode::ShapeOnly,
        Mode::Colour => SearchMode::ColourOnly,
        Mode::Fused => {
            let w = match weights {
                Some(p) => {
                    let text = fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    let w: FusionWeights = serde_json::from_str(&text)
                        .map_err(|e| revid_core::Error::Format(format!("{}: {e}", p.display())))?;
                    w.validate()?;
                    w
                }
                None => FusionWeights::plain_sum(),
            };
            SearchMode::Fused(w)
        }
    })
}

fn load_catalog(path: Option<&Path>, g: &Gallery) -> Result<ColourCatalog> {
    Ok(match path {
        Some(p) => ColourCatalog::load(p)?,
        None => {
            let dim = g
                .dim(Modality::Colour)
                .ok_or(revid_core::Error::EmptyCatalog)?;
            default_catalog(dim)?
        }
    })
}

fn load_scenario(dir: &Path) -> Result<(DatasetManifest, Gallery, Vec<VehicleRecord>)> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest =
        DatasetManifest::load(&mpath).with_context(|| format!("loading {}", mpath.display()))?;
    manifest.validate()?;
    let gallery = load_records(&manifest.gallery_path(dir)?)?;
    let probes = load_records(&manifest.probe_path(dir)?)?;
    Ok((manifest, Gallery::from_records(gallery)?, probes))
}
