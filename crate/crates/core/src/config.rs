//! Run configuration: flat `key = value` text with `#` comments.
//!
//! Unknown keys are errors. Every key has a default, so an empty file (or
//! no file at all) is a valid configuration.

use std::path::Path;

use crate::data::HierarchySpec;
use crate::error::{Error, Result};
use crate::metrics::{DetectionErrorMode, MetricsOptions, PositiveClass};
use crate::models::{ArchKind, ExtractorDims, GeometryTag, ModelShape};
use crate::Real;

/// Where the pipeline reads features from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    /// Hierarchical mixture generated on the fly; a rectifier extractor is
    /// trained on top.
    Synthetic,
    /// User-supplied precomputed embedding files; the extractor is the
    /// identity.
    Embeddings,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub architecture: String,
    pub curvature_s: Real,
    pub curvature_h: Real,
    pub embed_dim: usize,
    pub extractor_dims: Vec<usize>,
    pub epochs: usize,
    pub lr: Real,
    pub batch_size: usize,
    pub seed: u64,
    pub xi: Real,
    pub detection_error_mode: DetectionErrorMode,
    pub aupr_positive: PositiveClass,
    pub data_source: DataSource,
    pub embeddings_path: String,
    pub n_super: usize,
    pub n_sub_per_super: usize,
    pub data_dim: usize,
    pub super_spread: Real,
    pub sub_spread: Real,
    pub noise_std: Real,
    pub samples_per_leaf: usize,
    pub ood_leaves: usize,
    pub train_fraction: Real,
}

pub const ARCHITECTURES: [&str; 7] = ["baseline", "sio", "hio", "mio", "sit", "hit", "mit"];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            architecture: "baseline".into(),
            curvature_s: 1.0,
            curvature_h: -1.0,
            embed_dim: 8,
            extractor_dims: vec![64, 64],
            epochs: 20,
            lr: 0.02,
            batch_size: 32,
            seed: 0,
            xi: 1e-5,
            detection_error_mode: DetectionErrorMode::MinOverThresholds,
            aupr_positive: PositiveClass::Ood,
            data_source: DataSource::Synthetic,
            embeddings_path: String::new(),
            n_super: 4,
            n_sub_per_super: 3,
            data_dim: 16,
            super_spread: 10.0,
            sub_spread: 2.0,
            noise_std: 0.5,
            samples_per_leaf: 200,
            ood_leaves: 2,
            train_fraction: 0.8,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got `{raw}`",
                    idx + 1
                ))
            })?;
            config.set(key.trim(), value.trim(), idx + 1)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("line {line}: bad {what} `{value}`"));
        match key {
            "architecture" => self.architecture = value.to_string(),
            "curvature_s" => self.curvature_s = value.parse().map_err(|_| bad("curvature_s"))?,
            "curvature_h" => self.curvature_h = value.parse().map_err(|_| bad("curvature_h"))?,
            "embed_dim" => self.embed_dim = value.parse().map_err(|_| bad("embed_dim"))?,
            "extractor_dims" => {
                self.extractor_dims = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| v.trim().parse().map_err(|_| bad("extractor_dims")))
                        .collect::<Result<Vec<usize>>>()?
                };
            }
            "epochs" => self.epochs = value.parse().map_err(|_| bad("epochs"))?,
            "lr" => self.lr = value.parse().map_err(|_| bad("lr"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "xi" => self.xi = value.parse().map_err(|_| bad("xi"))?,
            "detection_error_mode" => {
                self.detection_error_mode = match value {
                    "min" => DetectionErrorMode::MinOverThresholds,
                    "at95" => DetectionErrorMode::AtNinetyFiveTpr,
                    _ => return Err(bad("detection_error_mode (min|at95)")),
                }
            }
            "aupr_positive" => {
                self.aupr_positive = match value {
                    "ood" => PositiveClass::Ood,
                    "id" => PositiveClass::Id,
                    _ => return Err(bad("aupr_positive (ood|id)")),
                }
            }
            "data_source" => {
                self.data_source = match value {
                    "synthetic" => DataSource::Synthetic,
                    "embeddings" => DataSource::Embeddings,
                    _ => return Err(bad("data_source (synthetic|embeddings)")),
                }
            }
            "embeddings_path" => self.embeddings_path = value.to_string(),
            "n_super" => self.n_super = value.parse().map_err(|_| bad("n_super"))?,
            "n_sub_per_super" => {
                self.n_sub_per_super = value.parse().map_err(|_| bad("n_sub_per_super"))?
            }
            "data_dim" => self.data_dim = value.parse().map_err(|_| bad("data_dim"))?,
            "super_spread" => self.super_spread = value.parse().map_err(|_| bad("super_spread"))?,
            "sub_spread" => self.sub_spread = value.parse().map_err(|_| bad("sub_spread"))?,
            "noise_std" => self.noise_std = value.parse().map_err(|_| bad("noise_std"))?,
            "samples_per_leaf" => {
                self.samples_per_leaf = value.parse().map_err(|_| bad("samples_per_leaf"))?
            }
            "ood_leaves" => self.ood_leaves = value.parse().map_err(|_| bad("ood_leaves"))?,
            "train_fraction" => {
                self.train_fraction = value.parse().map_err(|_| bad("train_fraction"))?
            }
            other => return Err(Error::Config(format!("line {line}: unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !ARCHITECTURES.contains(&self.architecture.as_str()) {
            return Err(Error::Config(format!(
                "unknown architecture `{}` (expected one of {})",
                self.architecture,
                ARCHITECTURES.join("|")
            )));
        }
        if self.uses_spherical() && self.curvature_s <= 0.0 {
            return Err(Error::Config(format!(
                "architecture {} needs curvature_s > 0, got {}",
                self.architecture, self.curvature_s
            )));
        }
        if self.uses_hyperbolic() && self.curvature_h >= 0.0 {
            return Err(Error::Config(format!(
                "architecture {} needs curvature_h < 0, got {}",
                self.architecture, self.curvature_h
            )));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::Config(format!("xi {} outside (0, 1)", self.xi)));
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!("bad learning rate {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be positive".into()));
        }
        if self.data_source == DataSource::Embeddings && self.embeddings_path.is_empty() {
            return Err(Error::Config(
                "data_source = embeddings requires embeddings_path".into(),
            ));
        }
        Ok(())
    }

    fn uses_spherical(&self) -> bool {
        matches!(self.architecture.as_str(), "sio" | "mio" | "sit" | "mit")
    }

    fn uses_hyperbolic(&self) -> bool {
        matches!(self.architecture.as_str(), "hio" | "mio" | "hit" | "mit")
    }

    /// Architecture family and declared geometric components.
    pub fn arch_components(&self) -> (ArchKind, Vec<GeometryTag>) {
        let s = GeometryTag::Spherical {
            kappa: self.curvature_s,
        };
        let h = GeometryTag::Hyperbolic {
            kappa: self.curvature_h,
        };
        match self.architecture.as_str() {
            "baseline" => (ArchKind::Baseline, vec![]),
            "sio" => (ArchKind::Gio, vec![s]),
            "hio" => (ArchKind::Gio, vec![h]),
            "mio" => (ArchKind::Gio, vec![s, h]),
            "sit" => (ArchKind::Git, vec![s]),
            "hit" => (ArchKind::Git, vec![h]),
            "mit" => (ArchKind::Git, vec![s, h]),
            _ => unreachable!("validated"),
        }
    }

    /// Model layout for a dataset with the given feature dimension and
    /// class count.
    pub fn model_shape(&self, feature_dim: usize, classes: usize) -> ModelShape {
        let (arch, components) = self.arch_components();
        let extractor_dims = match self.data_source {
            DataSource::Embeddings => ExtractorDims::Identity { dim: feature_dim },
            DataSource::Synthetic => {
                let mut dims = vec![feature_dim];
                dims.extend(&self.extractor_dims);
                dims.push(self.embed_dim);
                ExtractorDims::Mlp { dims }
            }
        };
        let has_euclidean = match arch {
            ArchKind::Baseline | ArchKind::Git => true,
            ArchKind::Gio => components.iter().any(|t| !t.is_curved()),
        };
        ModelShape {
            arch,
            components,
            extractor_dims,
            has_euclidean,
            classes,
            xi: self.xi,
        }
    }

    pub fn hierarchy_spec(&self) -> HierarchySpec {
        HierarchySpec {
            n_super: self.n_super,
            n_sub_per_super: self.n_sub_per_super,
            dim: self.data_dim,
            super_spread: self.super_spread,
            sub_spread: self.sub_spread,
            noise_std: self.noise_std,
            samples_per_leaf: self.samples_per_leaf,
            ood_leaves: self.ood_leaves,
            train_fraction: self.train_fraction,
        }
    }

    pub fn metrics_options(&self) -> MetricsOptions {
        MetricsOptions {
            detection_error_mode: self.detection_error_mode,
            aupr_positive: self.aupr_positive,
        }
    }

    /// Canonical `key = value` rendering (round-trips through [`parse`]).
    ///
    /// [`parse`]: RunConfig::parse
    pub fn to_text(&self) -> String {
        let mode = match self.detection_error_mode {
            DetectionErrorMode::MinOverThresholds => "min",
            DetectionErrorMode::AtNinetyFiveTpr => "at95",
        };
        let positive = match self.aupr_positive {
            PositiveClass::Ood => "ood",
            PositiveClass::Id => "id",
        };
        let source = match self.data_source {
            DataSource::Synthetic => "synthetic",
            DataSource::Embeddings => "embeddings",
        };
        let dims: Vec<String> = self
            .extractor_dims
            .iter()
            .map(ToString::to_string)
            .collect();
        format!(
            "architecture = {}\ncurvature_s = {}\ncurvature_h = {}\nembed_dim = {}\n\
             extractor_dims = {}\nepochs = {}\nlr = {}\nbatch_size = {}\nseed = {}\nxi = {}\n\
             detection_error_mode = {mode}\naupr_positive = {positive}\ndata_source = {source}\n\
             embeddings_path = {}\nn_super = {}\nn_sub_per_super = {}\ndata_dim = {}\n\
             super_spread = {}\nsub_spread = {}\nnoise_std = {}\nsamples_per_leaf = {}\n\
             ood_leaves = {}\ntrain_fraction = {}\n",
            self.architecture,
            self.curvature_s,
            self.curvature_h,
            self.embed_dim,
            dims.join(","),
            self.epochs,
            self.lr,
            self.batch_size,
            self.seed,
            self.xi,
            self.embeddings_path,
            self.n_super,
            self.n_sub_per_super,
            self.data_dim,
            self.super_spread,
            self.sub_spread,
            self.noise_std,
            self.samples_per_leaf,
            self.ood_leaves,
            self.train_fraction,
        )
    }
}
