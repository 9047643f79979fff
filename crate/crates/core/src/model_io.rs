//! Trained-model files.
//!
//! A model file is TOML with a `kind` key (`"tree"` or `"tobit"`). Floats are
//! written in shortest round-trip form, so loading a saved model gives back
//! the same bits.
//!
//! Tree files hold `n_features`, `feature_bounds` (per-feature training
//! `[min, max]`), `root`, and the `nodes` and `leaves` arrays. A child
//! reference is an inline table, `{ node = 1 }` or `{ leaf = 0 }`. Nodes carry
//! `beta` (intercept first), `threshold_c`, `m_lower`/`m_upper` and training
//! diagnostics; leaves carry `alpha`, `is_zero_leaf` and their bounds.
//!
//! Tobit files hold `feature_bounds` and a `[model]` table with `alpha`,
//! `sigma` and `loglik`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::milp::{encode_tobit, encode_tree, MilpBlock, MilpError};
use crate::tobit::TobitModel;
use crate::tree::RegressionTree;

#[derive(Debug, thiserror::Error)]
pub enum ModelIoError {
    #[error("cannot access model file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed model file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize model: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TobitArtifact {
    pub feature_bounds: Vec<(f64, f64)>,
    pub model: TobitModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFile {
    Tree(RegressionTree),
    Tobit(TobitArtifact),
}

impl ModelFile {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Tree(_) => "tree",
            ModelFile::Tobit(_) => "tobit",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            ModelFile::Tree(t) => t.n_features,
            ModelFile::Tobit(t) => t.model.n_features(),
        }
    }

    pub fn feature_bounds(&self) -> &[(f64, f64)] {
        match self {
            ModelFile::Tree(t) => &t.feature_bounds,
            ModelFile::Tobit(t) => &t.feature_bounds,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            ModelFile::Tree(t) => t.predict(x),
            ModelFile::Tobit(t) => t.model.predict(x),
        }
    }

    pub fn encode(&self, obs_id: usize) -> Result<MilpBlock, MilpError> {
        match self {
            ModelFile::Tree(t) => encode_tree(t, obs_id),
            ModelFile::Tobit(t) => encode_tobit(&t.model, &t.feature_bounds, obs_id),
        }
    }

    pub fn to_toml_string(&self) -> Result<String, ModelIoError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelIoError> {
        Ok(toml::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()?).map_err(|source| ModelIoError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelIoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}
