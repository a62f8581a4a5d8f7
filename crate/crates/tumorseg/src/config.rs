//! Campaign configuration files and the built-in presets.
//!
//! A campaign file is TOML. Top-level `model` and `training` tables apply to
//! every `[[experiment]]`; each experiment brings its own focal parameters
//! and augmentation. The model input size always follows the dataset.
//!
//! ```toml
//! name = "phase2"
//! seed = 42
//! output_dir = "runs/phase2"
//!
//! [dataset]
//! root = "data/brain-mri"
//! image_size = 256
//!
//! [training]
//! epochs = 200
//!
//! [[experiment]]
//! name = "hflip"
//! focal = { alpha = 0.25, gamma = 2.0 }
//! augmentation = { kind = "horizontal_flip" }
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tumorseg_core::{AugmentationKind, AugmentationSpec, FocalParams, TrainingConfig, UNetConfig};

use crate::error::{Error, Result};
use crate::io::read_file;
use crate::manifest::toml_error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    /// Side length images are resized to; defaults to `model.input_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub focal: FocalParams,
    #[serde(default)]
    pub augmentation: AugmentationSpec,
    /// Seeds weight init, batch order, dropout and augmentation draws;
    /// defaults to the campaign seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub name: String,
    /// Split seed shared by all experiments.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Run experiments concurrently.
    #[serde(default)]
    pub parallel: bool,
    /// Test samples rendered as overlays per experiment.
    #[serde(default = "default_overlays")]
    pub overlays: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: UNetConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(rename = "experiment", default)]
    pub experiments: Vec<ExperimentConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_overlays() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Directory { root: PathBuf, image_size: usize },
    Synthetic { n: usize, size: usize },
}

impl DatasetSource {
    pub fn image_size(&self) -> usize {
        match self {
            DatasetSource::Directory { image_size, .. } => *image_size,
            DatasetSource::Synthetic { size, .. } => *size,
        }
    }
}

/// Fully resolved description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub dataset: DatasetSource,
    pub split_seed: u64,
    pub model: UNetConfig,
    pub focal: FocalParams,
    pub augmentation: AugmentationSpec,
    pub training: TrainingConfig,
    pub output_dir: PathBuf,
    pub overlays: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        validate_name(&self.name)?;
        self.model.validate()?;
        self.focal.validate()?;
        self.augmentation.validate()?;
        self.training.validate()?;
        if self.model.input_size != self.dataset.image_size() {
            return Err(Error::Config(format!(
                "{}: model input size {} differs from dataset image size {}",
                self.name,
                self.model.input_size,
                self.dataset.image_size()
            )));
        }
        Ok(())
    }
}

fn validate_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && name != "."
        && name != "..";
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "experiment name {name:?} must be non-empty and use only [A-Za-z0-9_.-]"
        )))
    }
}

/// Command-line values that take precedence over the file or preset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub dataset_root: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub epochs: Option<usize>,
    pub parallel: bool,
}

impl CampaignConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| toml_error(path, text, &e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_file(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("campaign config always serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
            for e in &mut self.experiments {
                e.seed = None;
            }
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(root) = &o.dataset_root {
            self.dataset.root = Some(root.clone());
            self.dataset.synthetic = None;
        }
        if let Some(s) = o.synthetic {
            self.dataset.synthetic = Some(s);
            self.dataset.root = None;
        }
        for e in &mut self.experiments {
            if let Some(a) = o.alpha {
                e.focal.alpha = a;
            }
            if let Some(g) = o.gamma {
                e.focal.gamma = g;
            }
        }
        if let Some(epochs) = o.epochs {
            self.training.epochs = epochs;
        }
        self.parallel |= o.parallel;
    }

    fn dataset_source(&self) -> Result<DatasetSource> {
        match (&self.dataset.root, self.dataset.synthetic) {
            (Some(root), None) => Ok(DatasetSource::Directory {
                root: root.clone(),
                image_size: self.dataset.image_size.unwrap_or(self.model.input_size),
            }),
            (None, Some(SyntheticConfig { n, size })) => Ok(DatasetSource::Synthetic { n, size }),
            (None, None) => Err(Error::Config(
                "no dataset: set dataset.root (or --dataset-root) or dataset.synthetic (or --synthetic N,SIZE)".into(),
            )),
            (Some(_), Some(_)) => Err(Error::Config(
                "dataset.root and dataset.synthetic are mutually exclusive".into(),
            )),
        }
    }

    /// Resolves every experiment and checks the whole campaign before any
    /// work starts.
    pub fn resolve(&self) -> Result<Vec<ExperimentSpec>> {
        if self.experiments.is_empty() {
            return Err(Error::Config(format!("campaign {:?} has no experiments", self.name)));
        }
        let dataset = self.dataset_source()?;
        let mut model = self.model.clone();
        model.input_size = dataset.image_size();
        let mut seen = HashSet::new();
        let mut specs = Vec::with_capacity(self.experiments.len());
        for e in &self.experiments {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::Config(format!("duplicate experiment name {:?}", e.name)));
            }
            let seed = e.seed.unwrap_or(self.seed);
            let spec = ExperimentSpec {
                name: e.name.clone(),
                dataset: dataset.clone(),
                split_seed: self.seed,
                model: model.clone(),
                focal: e.focal,
                augmentation: AugmentationSpec {
                    seed,
                    ..e.augmentation.clone()
                },
                training: TrainingConfig {
                    seed,
                    ..self.training.clone()
                },
                output_dir: self.output_dir.join(&e.name),
                overlays: self.overlays,
            };
            spec.validate()?;
            specs.push(spec);
        }
        Ok(specs)
    }
}

pub const PRESETS: [&str; 3] = ["phase1", "phase2", "desk"];

pub const DEFAULT_SEED: u64 = 42;

fn experiment(name: &str, alpha: f64, gamma: f64, kind: AugmentationKind) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        focal: FocalParams::new(alpha, gamma).expect("preset focal parameters are valid"),
        augmentation: AugmentationSpec::new(kind),
        seed: None,
    }
}

pub fn preset(name: &str) -> Option<CampaignConfig> {
    let full_scale = |name: &str, experiments| CampaignConfig {
        name: name.into(),
        seed: DEFAULT_SEED,
        output_dir: PathBuf::from("runs").join(name),
        parallel: false,
        overlays: default_overlays(),
        dataset: DatasetConfig::default(),
        model: UNetConfig::default(),
        training: TrainingConfig::default(),
        experiments,
    };
    match name {
        "phase1" => Some(full_scale(
            "phase1",
            vec![
                experiment("alpha0.25_gamma2.0", 0.25, 2.0, AugmentationKind::None),
                experiment("alpha2.0_gamma0.75", 2.0, 0.75, AugmentationKind::None),
            ],
        )),
        "phase2" => Some(full_scale(
            "phase2",
            vec![
                experiment("none", 0.25, 2.0, AugmentationKind::None),
                experiment("hflip", 0.25, 2.0, AugmentationKind::HorizontalFlip),
                experiment("rotation", 0.25, 2.0, AugmentationKind::Rotation),
                experiment("scaling", 0.25, 2.0, AugmentationKind::Scaling),
            ],
        )),
        "desk" => Some(CampaignConfig {
            name: "desk".into(),
            seed: DEFAULT_SEED,
            output_dir: PathBuf::from("runs/desk"),
            parallel: false,
            overlays: 4,
            dataset: DatasetConfig {
                synthetic: Some(SyntheticConfig { n: 200, size: 64 }),
                ..DatasetConfig::default()
            },
            model: UNetConfig::scaled(64, 8),
            training: TrainingConfig {
                epochs: 15,
                learning_rate: 1e-3,
                ..TrainingConfig::default()
            },
            experiments: vec![experiment("desk", 0.25, 2.0, AugmentationKind::None)],
        }),
        _ => None,
    }
}
