//! Run configuration parsing/validation and deterministic result documents.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Result, SlabError};
use crate::geometry::{load_custom_shape, HoleShape};
use crate::gram::{S0Options, WavenumberBox};
use crate::matching::SlabConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Shape field of a hole entry: "square", "disk", or {"custom": "file.json"}.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ShapeSpec {
    Named(String),
    Custom { custom: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HoleSpec {
    pub center: [f64; 2],
    pub shape: ShapeSpec,
}

/// User-facing run configuration (JSON).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Slab thickness.
    pub l: f64,
    /// Hole scale.
    pub h: f64,
    pub holes: Vec<HoleSpec>,
    /// Mode truncation (non-constant modes per hole).
    #[serde(alias = "M", default = "default_modes")]
    pub modes: usize,
    /// Basis/kernel quadrature order override.
    #[serde(default)]
    pub quad_order: Option<usize>,
    /// Target relative tolerance of the singular quadrature.
    #[serde(default)]
    pub tol_quad: Option<f64>,
    /// Worker threads (default: available parallelism).
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub search_box: Option<WavenumberBox>,
}

fn default_modes() -> usize {
    20
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SlabError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| SlabError::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| SlabError::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes < 1 {
            return Err(SlabError::Config("modes must be at least 1".into()));
        }
        if let Some(q) = self.quad_order {
            if q < 2 {
                return Err(SlabError::Config("quad_order must be at least 2".into()));
            }
        }
        if let Some(t) = self.tol_quad {
            if !(t > 0.0) {
                return Err(SlabError::Config("tol_quad must be positive".into()));
            }
        }
        // Geometry checks live in SlabConfig::validate via to_slab_config.
        self.to_slab_config().map(|_| ())
    }

    /// Resolve shapes (loading custom files) and build the solver config.
    pub fn to_slab_config(&self) -> Result<SlabConfig> {
        let mut holes = Vec::with_capacity(self.holes.len());
        for spec in &self.holes {
            let shape = match &spec.shape {
                ShapeSpec::Named(name) => match name.as_str() {
                    "square" => HoleShape::UnitSquare,
                    "disk" | "circle" => HoleShape::UnitDisk,
                    other => {
                        return Err(SlabError::Config(format!(
                            "unknown shape '{other}' (use square, disk, or {{\"custom\": path}})"
                        )))
                    }
                },
                ShapeSpec::Custom { custom } => {
                    let text = std::fs::read_to_string(custom).map_err(|e| {
                        SlabError::Config(format!(
                            "cannot read custom shape {}: {e}",
                            custom.display()
                        ))
                    })?;
                    load_custom_shape(&text)?
                }
            };
            holes.push((spec.center, shape));
        }
        let config = SlabConfig {
            thickness: self.l,
            h: self.h,
            holes,
            truncation: self.modes,
            search_box: self.search_box.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn s0_options(&self) -> S0Options {
        let mut opts = S0Options::default();
        if let Some(t) = self.tol_quad {
            opts.tol = t;
        }
        if let Some(q) = self.quad_order {
            // scale the singular-quadrature panel orders with the override
            opts.outer_p = q.max(4);
            opts.theta_p = (q.saturating_sub(2)).max(4);
            opts.rho_p = q + 2;
        }
        opts
    }

    pub fn thread_count(&self) -> usize {
        self.threads.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
    }
}

/// Wall-clock timings; excluded from determinism comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub wall_s: f64,
}

/// Envelope for every machine-readable output.
#[derive(Debug, Clone, Serialize)]
pub struct ResultDocument<T: Serialize> {
    pub schema_version: u32,
    pub config: RunConfig,
    /// Hex content hash of the Gram caches the run used.
    pub gram_content_hash: String,
    pub threads: usize,
    pub payload: T,
    pub timings: Timings,
}

impl<T: Serialize> ResultDocument<T> {
    pub fn new(config: &RunConfig, gram_hash: u64, payload: T, wall_s: f64) -> Self {
        ResultDocument {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            gram_content_hash: format!("{gram_hash:016x}"),
            threads: config.thread_count(),
            payload,
            timings: Timings { wall_s },
        }
    }

    /// Canonical JSON of everything except the timings; identical runs must
    /// produce byte-identical strings.
    pub fn deterministic_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Det<'a, T: Serialize> {
            schema_version: u32,
            config: &'a RunConfig,
            gram_content_hash: &'a str,
            threads: usize,
            payload: &'a T,
        }
        Ok(serde_json::to_string_pretty(&Det {
            schema_version: self.schema_version,
            config: &self.config,
            gram_content_hash: &self.gram_content_hash,
            threads: self.threads,
            payload: &self.payload,
        })?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// CSV writer with the documented 1e-15 print precision.
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.15e}")
}

pub fn fmt_complex(v: Complex64) -> String {
    format!("{:.15e}{:+.15e}i", v.re, v.im)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "l": 1.0, "h": 0.01,
        "holes": [{"center": [0.0, 0.0], "shape": "square"}],
        "M": 20
    }"#;

    #[test]
    fn minimal_config_is_valid() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.modes, 20);
        let slab = cfg.to_slab_config().unwrap();
        assert_eq!(slab.truncation, 20);
        assert_eq!(slab.holes.len(), 1);
    }

    #[test]
    fn regime_guard_rejects_large_h() {
        let bad = MINIMAL.replace("0.01", "0.5");
        let err = RunConfig::from_json(&bad).unwrap_err();
        assert!(matches!(err, SlabError::Config(_)), "{err}");
    }

    #[test]
    fn separation_guard_rejects_close_holes() {
        let cfg = r#"{
            "l": 1.0, "h": 0.01,
            "holes": [
                {"center": [0.0, 0.0], "shape": "square"},
                {"center": [0.05, 0.0], "shape": "square"}
            ],
            "modes": 8
        }"#;
        assert!(RunConfig::from_json(cfg).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = MINIMAL.replace("\"M\": 20", "\"M\": 20, \"frobnicate\": 1");
        let err = RunConfig::from_json(&cfg).unwrap_err();
        assert!(err.to_string().contains("frobnicate"), "{err}");
    }

    #[test]
    fn unknown_shape_is_rejected() {
        let cfg = MINIMAL.replace("square", "hexagon");
        assert!(RunConfig::from_json(&cfg).is_err());
    }

    #[test]
    fn result_document_is_deterministic() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        let d1 = ResultDocument::new(&cfg, 0xabcd, vec![1.0, 2.0], 0.123);
        let d2 = ResultDocument::new(&cfg, 0xabcd, vec![1.0, 2.0], 9.876);
        assert_eq!(
            d1.deterministic_json().unwrap(),
            d2.deterministic_json().unwrap()
        );
        assert_ne!(d1.to_json().unwrap(), d2.to_json().unwrap());
    }

    #[test]
    fn csv_uses_full_precision() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.push(vec![fmt_f64(1.0 / 3.0), fmt_f64(2.0)]);
        let text = t.render();
        assert!(text.contains("3.333333333333333"), "{text}");
    }
}
