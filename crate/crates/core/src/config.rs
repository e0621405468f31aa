//! Service configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::causal::StructureConfig;
use crate::data::{DEFAULT_BIN_CAP, DEFAULT_NUMERIC_THRESHOLD};
use crate::error::{Error, Result};
use crate::subgroup::DEFAULT_MAX_CONSTRAINTS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub port: u16,
    pub data_dir: PathBuf,
    /// Most constraints per feature combination.
    pub max_constraints: usize,
    pub min_support: usize,
    /// Edge threshold of the causal graph.
    pub omega: f64,
    /// L1 penalty of structure learning.
    pub lambda: f64,
    /// L2 penalty of the decision model.
    pub l2: f64,
    /// Most bins per numeric feature.
    pub k_max: usize,
    pub numeric_threshold: usize,
    pub max_upload_bytes: usize,
    pub max_rows: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            port: 8080,
            data_dir: PathBuf::from("data"),
            max_constraints: DEFAULT_MAX_CONSTRAINTS,
            min_support: 0,
            omega: 0.3,
            lambda: 0.05,
            l2: 1e-4,
            k_max: DEFAULT_BIN_CAP,
            numeric_threshold: DEFAULT_NUMERIC_THRESHOLD,
            max_upload_bytes: 50 * 1024 * 1024,
            max_rows: 100_000,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Validation(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("config: {what}")));
        if self.max_constraints == 0 {
            return bad("max_constraints must be at least 1");
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1");
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return bad("omega must be a finite non-negative number");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be a finite non-negative number");
        }
        if self.max_rows == 0 || self.max_upload_bytes == 0 {
            return bad("upload limits must be positive");
        }
        Ok(())
    }

    pub fn structure(&self) -> StructureConfig {
        StructureConfig {
            l1_penalty: self.lambda,
            edge_threshold: self.omega,
            ..StructureConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = Config::from_toml("port = 9000\nomega = 0.25\n").unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.omega, 0.25);
        assert_eq!(cfg.max_constraints, 3);
        assert_eq!(cfg.k_max, 10);
        assert_eq!(cfg.structure().edge_threshold, 0.25);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::from_toml("prot = 1").is_err());
        assert!(Config::from_toml("k_max = 0").is_err());
        assert!(Config::from_toml("omega = -1.0").is_err());
    }
}
