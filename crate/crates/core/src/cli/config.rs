use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degradation::CameraSpec;
use crate::networks::{ArchConfig, Preset};
use crate::nn::hex_digest;
use crate::trainer::{Toggles, TrainConfig};
use crate::{Error, Result};

/// Everything one experiment needs, read from a single TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Replaces `train.arch` with a capacity preset.
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub kernel: KernelOptions,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding one subdirectory per domain.
    pub root: PathBuf,
    pub source: String,
    pub target: String,
    /// How `prepare-data` renders the domains.
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    /// PNG directory of HR images. Procedural scenes are generated when absent.
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    pub cameras: Vec<CameraSpec>,
}

fn default_count() -> usize {
    25
}

fn default_size() -> usize {
    128
}

fn default_fraction() -> f64 {
    0.8
}

/// Named toggle rows. `"all"` expands to every row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub rows: Vec<String>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            rows: vec!["full".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub border: usize,
    /// Also report the perceptual distance.
    pub perceptual: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            border: crate::eval::DEFAULT_BORDER,
            perceptual: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelOptions {
    pub size: usize,
    pub iters: usize,
    pub tol: f64,
    /// Test images per domain used by `estimate-kernel`.
    pub max_images: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            size: crate::degradation::DEFAULT_KERNEL_SIZE,
            iters: 2000,
            tol: 1e-12,
            max_images: 5,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses TOML text. Errors carry the dotted key path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| config_err("", e.to_string().trim()))?;
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path == "." { String::new() } else { path }, e.into_inner().message().trim())
        })?;
        if cfg.preset.is_some() {
            let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err("", e.to_string()))?;
            if raw.get("train").and_then(|t| t.get("arch")).is_some() {
                return Err(config_err("preset", "cannot be combined with train.arch"));
            }
        }
        if let Some(p) = cfg.preset {
            cfg.apply_preset(p);
        }
        Ok(cfg)
    }

    fn apply_preset(&mut self, p: Preset) {
        self.preset = Some(p);
        self.train.arch = ArchConfig {
            scale: self.train.scale,
            ..ArchConfig::preset(p)
        };
    }

    /// Reads, applies overrides, resolves relative paths against the file's
    /// directory and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err("", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.data.root);
        join(&mut self.out);
        if let Some(dir) = self.data.synthetic.as_mut().and_then(|s| s.corpus_dir.as_mut()) {
            join(dir);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.train.seed = seed;
        }
        if let Some(p) = o.preset {
            self.apply_preset(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(|e| match e {
            Error::Config { path, message } => config_err(format!("train.{path}"), message),
            other => other,
        })?;
        let d = &self.data;
        for (key, name) in [("data.source", &d.source), ("data.target", &d.target)] {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(config_err(key, format!("`{name}` is not a valid domain name")));
            }
        }
        if d.source == d.target {
            return Err(config_err("data.target", "must differ from data.source"));
        }
        if let Some(s) = &d.synthetic {
            if s.cameras.len() < 2 {
                return Err(config_err("data.synthetic.cameras", "needs at least two cameras"));
            }
            let mut names = BTreeSet::new();
            for (i, c) in s.cameras.iter().enumerate() {
                if !names.insert(c.name.as_str()) {
                    return Err(config_err(format!("data.synthetic.cameras[{i}].name"), format!("duplicate `{}`", c.name)));
                }
                if c.scale != self.train.scale {
                    return Err(config_err(
                        format!("data.synthetic.cameras[{i}].scale"),
                        format!("{} differs from train.scale {}", c.scale, self.train.scale),
                    ));
                }
                c.build().map_err(|e| config_err(format!("data.synthetic.cameras[{i}]"), e.to_string()))?;
            }
            for (key, name) in [("data.source", &d.source), ("data.target", &d.target)] {
                if !names.contains(name.as_str()) {
                    return Err(config_err(key, format!("`{name}` is not among data.synthetic.cameras")));
                }
            }
            if !(0.0..=1.0).contains(&s.train_fraction) {
                return Err(config_err("data.synthetic.train_fraction", "must lie in [0, 1]"));
            }
            if s.corpus_dir.is_none() && (s.count == 0 || s.size < 4 * self.train.scale) {
                return Err(config_err("data.synthetic", "procedural corpus needs count >= 1 and a larger size"));
            }
        }
        self.ablation_rows()?;
        if self.kernel.size % 2 == 0 {
            return Err(config_err("kernel.size", "must be odd"));
        }
        if self.kernel.iters == 0 {
            return Err(config_err("kernel.iters", "must be >= 1"));
        }
        Ok(())
    }

    /// The configured rows with their toggles, `"all"` expanded, duplicates
    /// dropped.
    pub fn ablation_rows(&self) -> Result<Vec<(String, Toggles)>> {
        let known = Toggles::ablation_rows();
        let mut out: Vec<(String, Toggles)> = Vec::new();
        if self.ablation.rows.is_empty() {
            return Err(config_err("ablation.rows", "is empty"));
        }
        for (i, row) in self.ablation.rows.iter().enumerate() {
            let picked: Vec<(&str, Toggles)> = if row == "all" {
                known.to_vec()
            } else {
                let t = known.iter().find(|(n, _)| n == row).ok_or_else(|| {
                    let names: Vec<&str> = known.iter().map(|(n, _)| *n).collect();
                    config_err(format!("ablation.rows[{i}]"), format!("unknown row `{row}`; expected one of {names:?} or \"all\""))
                })?;
                vec![*t]
            };
            for (n, t) in picked {
                if !out.iter().any(|(m, _)| m == n) {
                    out.push((n.to_string(), t));
                }
            }
        }
        Ok(out)
    }

    /// Training settings of one ablation row.
    pub fn row_config(&self, toggles: Toggles) -> TrainConfig {
        TrainConfig {
            toggles,
            ..self.train.clone()
        }
    }

    /// SHA-256 of the canonical JSON form, after overrides.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serialises"));
        hex_digest(h)
    }

    pub fn source_dir(&self) -> PathBuf {
        self.data.root.join(&self.data.source)
    }

    pub fn target_dir(&self) -> PathBuf {
        self.data.root.join(&self.data.target)
    }
}
