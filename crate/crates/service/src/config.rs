use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    /// JSON file with calibrated fusion weights (as written by `revid calibrate`).
    pub weights: Option<PathBuf>,
    /// Colour catalog JSON; the built-in synthetic catalog is used when unset.
    pub catalog: Option<PathBuf>,
    pub cors_origins: Vec<String>,
    /// Seed for a synthetic `demo` gallery created at startup.
    pub demo_seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            weights: None,
            catalog: None,
            cors_origins: Vec::new(),
            demo_seed: None,
        }
    }
}

impl ServiceConfig {
    /// Reads an optional TOML file, then applies `REVID_*` environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), String> {
        if let Some(v) = get("REVID_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("REVID_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("REVID_WEIGHTS") {
            self.weights = Some(v.into());
        }
        if let Some(v) = get("REVID_CATALOG") {
            self.catalog = Some(v.into());
        }
        if let Some(v) = get("REVID_CORS_ORIGINS") {
            self.cors_origins = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
        if let Some(v) = get("REVID_DEMO_SEED") {
            self.demo_seed = Some(
                v.parse()
                    .map_err(|_| format!("REVID_DEMO_SEED: bad seed `{v}`"))?,
            );
        }
        Ok(())
    }
}
