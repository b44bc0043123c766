//! Run configuration files and flag overrides.

use std::fs;
use std::path::{Path, PathBuf};

use amfnet::data::{load_manifest, synthesize_dataset, Dataset, SyntheticSpec};
use amfnet::eval::{ExperimentConfig, TrainConfig};
use amfnet::fusion::{Modality, ModelConfig};
use serde::{Deserialize, Serialize};

/// Bad user input; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Where samples come from: a manifest on disk or an inline synthetic spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    /// Run folds on the rayon pool.
    #[serde(default)]
    pub parallel: bool,
    /// Class subset, in label order; all classes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    pub data: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
}

/// A config with flags applied, paths resolved and data loaded.
pub struct Resolved {
    pub config: RunConfig,
    pub seed: u64,
    pub modality: Modality,
    pub experiment: ExperimentConfig,
    pub data: Dataset,
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| usage(format!("{}: {}", path.display(), e.to_string().trim_end())))
}

pub fn require_seed(flag: Option<u64>, file: Option<u64>) -> anyhow::Result<u64> {
    flag.or(file)
        .ok_or_else(|| usage("a seed is required: set `seed` in the config or pass --seed"))
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let mut cfg: RunConfig = read_toml(path)?;
        // Relative paths are taken from the config's directory and made
        // absolute so the echoed copy resolves the same from anywhere.
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
        let base = std::path::absolute(parent.unwrap_or(Path::new(".")))?;
        if let Some(m) = &cfg.data.manifest {
            cfg.data.manifest = Some(base.join(m));
        }
        if let Some(o) = &cfg.out {
            cfg.out = Some(base.join(o));
        }
        Ok(cfg)
    }

    /// Applies flag overrides, loads the data and fills in defaults.
    pub fn resolve(
        mut self,
        seed: Option<u64>,
        out: Option<PathBuf>,
        modality: Option<Modality>,
    ) -> anyhow::Result<Resolved> {
        let seed = require_seed(seed, self.seed)?;
        self.seed = Some(seed);
        if out.is_some() {
            self.out = out;
        }
        if modality.is_some() {
            self.modality = modality;
        }
        let modality = *self.modality.get_or_insert(Modality::Fused);

        let data = match (&self.data.manifest, &self.data.synthetic) {
            (Some(path), None) => {
                if !path.is_file() {
                    return Err(usage(format!("manifest {} does not exist", path.display())));
                }
                load_manifest(path)?
            }
            (None, Some(spec)) => {
                spec.validate()?;
                synthesize_dataset(spec)?.dataset
            }
            _ => {
                return Err(usage(
                    "[data] needs exactly one of `manifest` or `synthetic`",
                ))
            }
        };
        let data = match &self.classes {
            Some(names) => data.select_classes(names)?,
            None => data,
        };

        let defaults = ExperimentConfig::for_dataset(&data);
        let experiment = ExperimentConfig {
            model: self.model.get_or_insert(defaults.model).clone(),
            train: self.train.get_or_insert(defaults.train).clone(),
        };
        experiment.model.validate()?;
        experiment.train.validate(experiment.model.classes)?;
        if experiment.model.classes != data.classes() {
            return Err(usage(format!(
                "model.classes = {} but the data has {} classes",
                experiment.model.classes,
                data.classes()
            )));
        }
        Ok(Resolved {
            config: self,
            seed,
            modality,
            experiment,
            data,
        })
    }
}

impl Resolved {
    pub fn out_dir(&self) -> anyhow::Result<&Path> {
        self.config
            .out
            .as_deref()
            .ok_or_else(|| usage("an output directory is required: set `out` or pass --out"))
    }

    /// Writes the fully resolved config next to the outputs.
    pub fn echo(&self, dir: &Path) -> anyhow::Result<()> {
        let mut echoed = self.config.clone();
        echoed.out = None;
        write_file(&dir.join("config.toml"), &toml::to_string(&echoed)?)
    }
}

pub fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
}
