//! JSON configuration file schema.
//!
//! Every field except `schema_version` is optional and falls back to the
//! defaults of the numerical study (M=4, K=3, N=8, sigma2=1, Pt=10 W,
//! 1000 realizations). Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;

use risrank_core::channel::SystemDims;
use risrank_core::evaluation::{RisMode, SimulationConfig, SweepSpec, SweepVariable};
use risrank_core::optimizer::OptimizerConfig;
use risrank_core::precoding::Scheme;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: u32,
    #[serde(default = "defaults::dims")]
    pub dims: SystemDims,
    #[serde(default = "defaults::pt_watts")]
    pub pt_watts: f64,
    #[serde(default = "defaults::sigma2_watts")]
    pub sigma2_watts: f64,
    #[serde(default = "defaults::schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "defaults::realizations")]
    pub realizations: usize,
    #[serde(default = "defaults::master_seed")]
    pub master_seed: u64,
    #[serde(default = "defaults::ris_mode")]
    pub ris_mode: RisMode,
    #[serde(default)]
    pub direct_link: bool,
    /// SNR grid for `sweep-snr`, dB.
    #[serde(default = "defaults::snr_db_values")]
    pub snr_db_values: Vec<f64>,
    /// RIS element grid for `sweep-n`.
    #[serde(default = "defaults::n_values")]
    pub n_values: Vec<f64>,
    /// BS antenna grid for `sweep-m`.
    #[serde(default = "defaults::m_values")]
    pub m_values: Vec<f64>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

mod defaults {
    use super::*;

    pub fn dims() -> SystemDims {
        SimulationConfig::defaults().dims
    }
    pub fn pt_watts() -> f64 {
        SimulationConfig::defaults().pt_watts
    }
    pub fn sigma2_watts() -> f64 {
        SimulationConfig::defaults().sigma2_watts
    }
    pub fn schemes() -> Vec<Scheme> {
        SimulationConfig::defaults().schemes
    }
    pub fn realizations() -> usize {
        SimulationConfig::defaults().realizations
    }
    pub fn master_seed() -> u64 {
        SimulationConfig::defaults().master_seed
    }
    pub fn ris_mode() -> RisMode {
        RisMode::Optimized
    }
    pub fn snr_db_values() -> Vec<f64> {
        vec![0.0, 5.0, 10.0, 15.0, 20.0]
    }
    pub fn n_values() -> Vec<f64> {
        vec![4.0, 8.0, 16.0, 32.0]
    }
    pub fn m_values() -> Vec<f64> {
        vec![2.0, 4.0, 8.0]
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let parsed: FileConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if parsed.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "{}: unsupported schema_version {} (expected {SCHEMA_VERSION})",
                path.display(),
                parsed.schema_version
            )));
        }
        Ok(parsed)
    }

    /// Simulation config for a sweep over the given variable.
    pub fn simulation(&self, variable: SweepVariable) -> SimulationConfig {
        let values = match variable {
            SweepVariable::SnrDb => self.snr_db_values.clone(),
            SweepVariable::RisElements => self.n_values.clone(),
            SweepVariable::TxAntennas => self.m_values.clone(),
        };
        SimulationConfig {
            dims: self.dims,
            pt_watts: self.pt_watts,
            sigma2_watts: self.sigma2_watts,
            schemes: self.schemes.clone(),
            realizations: self.realizations,
            master_seed: self.master_seed,
            sweep: SweepSpec { variable, values },
            optimizer: self.optimizer,
            ris_mode: self.ris_mode,
            direct_link: self.direct_link,
        }
    }
}
