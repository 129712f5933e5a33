//! Run configuration, read from TOML.
//!
//! ```toml
//! out_dir = "runs/mnist-1-5"
//!
//! [data]
//! dir = "data/mnist"            # falls back to $QFID_DATA_DIR
//! classes = [1, 5]
//! test_fraction = 0.3
//! train_cap_per_class = 500
//! test_cap_per_class = 200
//!
//! [model]
//! layers = ["single", "dual", "entangle"]
//! n_out = 4
//! bond_dim = 4
//!
//! [train]
//! learning_rate = 0.002
//! epochs = 40
//! seed = 7
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use qfid_core::circuit::{CircuitSpec, LayerKind};
use qfid_core::data::PIXELS;
use qfid_core::mps::{Contraction, MpsConfig};
use qfid_core::training::TrainConfig;
use qfid_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DATA_DIR_ENV: &str = "QFID_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_images")]
    pub images: String,
    #[serde(default = "default_labels")]
    pub labels: String,
    pub classes: Vec<u8>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub train_cap_per_class: Option<usize>,
    #[serde(default)]
    pub test_cap_per_class: Option<usize>,
}

fn default_images() -> String {
    "images-idx3-ubyte".into()
}

fn default_labels() -> String {
    "labels-idx1-ubyte".into()
}

fn default_test_fraction() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: Vec<LayerKind>,
    pub n_out: usize,
    #[serde(default = "default_bond_dim")]
    pub bond_dim: usize,
    #[serde(default)]
    pub output_site: Option<usize>,
    #[serde(default = "default_init_noise")]
    pub init_noise: f64,
    #[serde(default = "default_contraction")]
    pub contraction: Contraction,
}

fn default_bond_dim() -> usize {
    4
}

fn default_init_noise() -> f64 {
    0.01
}

fn default_contraction() -> Contraction {
    Contraction::Normalized
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.layers.is_empty() {
            return Err(Error::Config("layer list is empty".into()));
        }
        if m.n_out == 0 || !m.n_out.is_multiple_of(2) {
            return Err(Error::Config(format!("n_out must be even and positive, got {}", m.n_out)));
        }
        if m.bond_dim == 0 {
            return Err(Error::Config("bond_dim must be positive".into()));
        }
        if let Some(o) = m.output_site {
            if o >= PIXELS {
                return Err(Error::Config(format!("output_site {o} outside 0..{PIXELS}")));
            }
        }
        if self.data.classes.len() < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        let f = self.data.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("test_fraction {f} must lie in (0, 1)")));
        }
        if self.train.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        self.train.validate()?;
        self.circuit()?;
        Ok(())
    }

    pub fn circuit(&self) -> Result<CircuitSpec> {
        CircuitSpec::new(self.model.n_out / 2, self.model.layers.clone())
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn mps_config(&self) -> MpsConfig {
        MpsConfig {
            num_sites: PIXELS,
            bond_dim: self.model.bond_dim,
            n_out: self.model.n_out,
            output_site: self.model.output_site,
            init_noise: self.model.init_noise,
            contraction: self.model.contraction,
        }
    }

    /// `override_dir`, then the configured directory, then `$QFID_DATA_DIR`.
    pub fn data_dir(&self, override_dir: Option<&Path>) -> Result<PathBuf> {
        if let Some(d) = override_dir {
            return Ok(d.to_path_buf());
        }
        if let Some(d) = &self.data.dir {
            return Ok(d.clone());
        }
        std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config(format!("no data directory: set data.dir or ${DATA_DIR_ENV}")))
    }
}
