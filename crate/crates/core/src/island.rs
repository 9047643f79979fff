//! Island system description: thermal units, UFLS relay stages, load
//! damping and simulation settings, read from a TOML file.
//!
//! ```toml
//! name = "synthetic-island"
//! load_damping = 1.0            # pu/pu on the demand base
//!
//! [[units]]
//! id = "G1"
//! p_min = 1.5                   # MW
//! p_max = 4.0                   # MW
//! rated = 4.5                   # MW, machine base
//! h = 2.0                       # s
//! k_gov = 20.0                  # pu/pu
//! t_gov = 4.0                   # s
//! cost_a = 0.02                 # €/MW²h
//! cost_b = 95.0                 # €/MWh
//! cost_c = 120.0                # €/h
//!
//! [ufls]
//! f_nominal = 50.0
//! breaker_delay = 0.1
//! [[ufls.stages]]
//! f_threshold = 49.0
//! shed_fraction = 0.1
//! relay_delay = 0.1
//!
//! [simulation]
//! dt = 0.01
//! horizon = 60.0
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sfr::{GeneratingUnit, SfrError, SimConfig, UflsScheme};

const BUNDLED: &str = include_str!("../data/island.toml");

#[derive(Debug, Error)]
pub enum IslandError {
    #[error("cannot read island file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed island file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] SfrError),
    #[error("duplicate unit id `{0}`")]
    DuplicateUnit(String),
    #[error("island has no units")]
    NoUnits,
}

fn default_damping() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IslandSystem {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_damping")]
    pub load_damping: f64,
    pub units: Vec<GeneratingUnit>,
    pub ufls: UflsScheme,
    #[serde(default)]
    pub simulation: SimConfig,
}

impl IslandSystem {
    /// The five-unit synthetic island shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED).expect("bundled island file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, IslandError> {
        let system: Self = toml::from_str(text)?;
        system.validate()?;
        Ok(system)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IslandError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IslandError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), IslandError> {
        if self.units.is_empty() {
            return Err(IslandError::NoUnits);
        }
        let mut seen = BTreeSet::new();
        for unit in &self.units {
            unit.validate()?;
            if !seen.insert(unit.id.as_str()) {
                return Err(IslandError::DuplicateUnit(unit.id.clone()));
            }
        }
        if !(self.load_damping.is_finite() && self.load_damping >= 0.0) {
            return Err(SfrError::InvalidOperatingPoint("load_damping must be non-negative".into()).into());
        }
        self.ufls.validate()?;
        self.simulation.validate()?;
        Ok(())
    }
}
