//! Datasets and file formats.
//!
//! * [`synthetic`]: two-class 2-D bag generators (concentric, XOR).
//! * [`container`]: the `LFAB` binary bag container and CSV import.
//! * [`model_file`]: the `LFAM` model file.
//! * [`split`]: seeded train/test splits.

pub mod container;
pub mod model_file;
pub mod split;
pub mod synthetic;

use thiserror::Error;

use crate::encoders::FeatureBag;
use crate::error::{Error, Result};

pub use container::{read_bags, read_bags_auto, read_bags_csv, write_bags};
pub use model_file::{load_model, save_model};
pub use split::split;

/// Malformed or unreadable files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("file is truncated: {0}")]
    Truncated(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("bag `{bag}` has label {label} but the container declares {classes} classes")]
    LabelOutOfRange { bag: String, label: u32, classes: u32 },

    #[error("bag `{bag}` contains a non-finite descriptor value")]
    NonFiniteValue { bag: String },

    #[error("malformed file: {0}")]
    Malformed(String),
}

/// An ordered list of bags sharing one descriptor dimension and class count.
#[derive(Clone, Debug, PartialEq)]
pub struct BagContainer {
    pub classes: usize,
    pub dim: usize,
    pub bags: Vec<FeatureBag>,
}

impl BagContainer {
    pub fn new(classes: usize, dim: usize, bags: Vec<FeatureBag>) -> Result<Self> {
        let c = Self { classes, dim, bags };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.bags {
            if b.dim() != self.dim {
                return Err(Error::Shape(format!(
                    "bag `{}` has dimension {}, container declares {}",
                    b.id,
                    b.dim(),
                    self.dim
                )));
            }
            if b.label >= self.classes {
                return Err(FormatError::LabelOutOfRange {
                    bag: b.id.clone(),
                    label: b.label as u32,
                    classes: self.classes as u32,
                }
                .into());
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }
}
