use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LdeNetModel, Normalization};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub drift: usize,
    pub diffusion: usize,
}

/// Versioned JSON checkpoint. The header fields duplicate what the model
/// carries so a file can be inspected without decoding the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub alpha: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    pub dt: f64,
    pub d: usize,
    pub widths: Widths,
    pub attention: bool,
    pub normalization: Normalization,
    pub model: LdeNetModel,
}

impl Checkpoint {
    pub fn new(model: &LdeNetModel) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            alpha: model.integrator.alpha,
            steps: model.integrator.steps,
            dt: model.integrator.dt(),
            d: model.dim(),
            widths: Widths {
                drift: model.drift[0].width,
                diffusion: model.diffusion.width,
            },
            attention: model.attention.is_some(),
            normalization: model.normalization,
            model: model.clone(),
        }
    }

    /// Checks the header against the embedded model and returns it.
    pub fn into_model(self) -> Result<LdeNetModel> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        let m = &self.model;
        m.validate()?;
        let consistent = self.alpha == m.integrator.alpha
            && self.steps == m.integrator.steps
            && self.d == m.dim()
            && self.attention == m.attention.is_some()
            && self.normalization == m.normalization
            && self.widths.drift == m.drift[0].width
            && self.widths.diffusion == m.diffusion.width;
        if !consistent {
            return Err(Error::invalid("checkpoint header disagrees with its parameters"));
        }
        Ok(self.model)
    }
}

pub fn save_checkpoint(model: &LdeNetModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&Checkpoint::new(model))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<LdeNetModel> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_model()
}
