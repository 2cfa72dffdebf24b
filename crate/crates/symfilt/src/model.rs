//! JSON container for fitted mixtures.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use symfilt_core::gmm::{CovarianceSpec, GmmModel};
use symfilt_core::patch::PatchStack;

use crate::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub k: usize,
    pub spatial_dims: usize,
    pub range_dims: usize,
    pub h_s: f64,
    pub h_r: f64,
    pub pi: Vec<f64>,
    pub means: Vec<Vec<f64>>,
}

impl From<&GmmModel> for ModelFile {
    fn from(m: &GmmModel) -> Self {
        Self {
            version: MODEL_VERSION,
            k: m.k(),
            spatial_dims: m.cov.spatial_dims,
            range_dims: m.cov.range_dims,
            h_s: m.cov.h_s,
            h_r: m.cov.h_r,
            pi: m.pi.clone(),
            means: m.means.rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<GmmModel> {
        if self.version != MODEL_VERSION {
            return Err(Error::ModelVersion(self.version));
        }
        if self.means.len() != self.k {
            return Err(Error::Malformed("model mean count differs from k"));
        }
        let cov = CovarianceSpec::new(self.spatial_dims, self.range_dims, self.h_s, self.h_r)?;
        let means = PatchStack::from_rows(&self.means)?;
        Ok(GmmModel::new(cov, self.pi, means)?)
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &GmmModel) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&ModelFile::from(model))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GmmModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str::<ModelFile>(&text)?.into_model()
}
