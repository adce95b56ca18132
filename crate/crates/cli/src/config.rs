use std::path::{Path, PathBuf};

use fedkan_core::federation::FederationConfig;
use fedkan_core::model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// TOML run configuration. Every section has defaults matching the
/// reference protocol; only the data source must be given.
///
/// ```toml
/// seed = 7
/// output_dir = "out"
///
/// [data]
/// window = 5
/// train_fraction = 0.8
/// synthetic = { beams = 4, hours = 743 }
/// # files = ["beams/beam_0.csv", "beams/beam_1.csv"]
///
/// [model]
/// kind = "fed_kan"
///
/// [federation]
/// rounds = 20
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub federation: FederationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub files: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_beams")]
    pub beams: usize,
    #[serde(default = "default_hours")]
    pub hours: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_window() -> usize {
    5
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_beams() -> usize {
    4
}

fn default_hours() -> usize {
    743
}

/// Where the beams come from, with file paths already resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files(Vec<PathBuf>),
    Synthetic(SyntheticSpec),
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads and validates a config file; relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| fedkan_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = base.join(&cfg.output_dir);
        if let Some(files) = &mut cfg.data.files {
            for f in files.iter_mut() {
                *f = base.join(&*f);
            }
        }
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.federation.seed)
    }

    pub fn data_source(&self) -> DataSource {
        match (&self.data.files, &self.data.synthetic) {
            (Some(files), _) => DataSource::Files(files.clone()),
            (None, Some(spec)) => DataSource::Synthetic(spec.clone()),
            (None, None) => unreachable!("validated config has a data source"),
        }
    }

    pub fn validate(&self, origin: &Path) -> Result<(), CliError> {
        let fail = |message: String| CliError::Config {
            path: origin.to_path_buf(),
            message,
        };
        match (&self.data.files, &self.data.synthetic) {
            (Some(_), Some(_)) => return Err(fail("data: give either `files` or `synthetic`, not both".into())),
            (None, None) => return Err(fail("data: one of `files` or `synthetic` is required".into())),
            (Some(files), None) => {
                if files.is_empty() {
                    return Err(fail("data.files must list at least one CSV".into()));
                }
                if let Some(missing) = files.iter().find(|f| !f.is_file()) {
                    return Err(fail(format!("data.files: {} does not exist", missing.display())));
                }
            }
            (None, Some(spec)) => {
                if spec.beams == 0 {
                    return Err(fail("data.synthetic.beams must be at least 1".into()));
                }
            }
        }
        if self.data.window < 1 {
            return Err(fail("data.window must be at least 1".into()));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(fail(format!(
                "data.train_fraction must lie in (0, 1), got {}",
                self.data.train_fraction
            )));
        }
        if self.model.input_width != 2 * self.data.window {
            return Err(fail(format!(
                "model.input_width is {} but a {}-hour window of (downlink, uplink) needs {}",
                self.model.input_width,
                self.data.window,
                2 * self.data.window
            )));
        }
        self.model.validate().map_err(|e| fail(e.to_string()))?;
        self.federation.validate().map_err(|e| fail(e.to_string()))?;
        Ok(())
    }
}
