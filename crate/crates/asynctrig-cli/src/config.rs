//! JSON run configuration.
//!
//! One document with the sections `plant`, `discretization`, `horizons`,
//! `mode`, `certificate`, `partition`, `simulation` and `output`; matrices
//! are nested row arrays.

use std::fs;
use std::path::{Path, PathBuf};

use asynctrig::horizon::{Horizon, DEFAULT_CAP};
use asynctrig::{Disturbance, Mode, PlantModel, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "ASYNCTRIG_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub l_min: usize,
    pub l_max: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

fn default_gamma() -> f64 {
    0.35
}

fn default_substeps() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_gamma")]
    pub gamma1: f64,
    #[serde(default = "default_gamma")]
    pub gamma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_star: Option<Horizon>,
}

impl Default for CertificateSection {
    fn default() -> Self {
        Self { beta: 0.0, gamma: 0.35, gamma1: 0.35, gamma2: 0.35, sigma_star: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    #[serde(default)]
    pub regions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub x0: Vec<f64>,
    pub total_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<Disturbance>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantModel,
    pub discretization: Discretization,
    pub horizons: HorizonSection,
    pub mode: Mode,
    #[serde(default)]
    pub certificate: CertificateSection,
    #[serde(default)]
    pub partition: PartitionSection,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.to_sim_config().validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn to_sim_config(&self) -> SimConfig {
        SimConfig {
            plant: self.plant.clone(),
            t: self.discretization.t,
            l_min: self.horizons.l_min,
            l_max: self.horizons.l_max,
            horizon_cap: self.horizons.cap,
            mode: self.mode,
            beta: self.certificate.beta,
            gamma: self.certificate.gamma,
            gamma1: self.certificate.gamma1,
            gamma2: self.certificate.gamma2,
            regions: self.partition.regions,
            sigma_star: self.certificate.sigma_star.clone(),
            x0: self.simulation.x0.clone(),
            total_steps: self.simulation.total_steps,
            seed: self.simulation.seed,
            substeps: self.simulation.substeps,
            disturbance: self.simulation.disturbance.clone(),
        }
    }

    /// Seed precedence: flag, then environment, then the file.
    pub fn apply_seed(&mut self, flag: Option<u64>, env: Option<&str>) -> Result<()> {
        if let Some(seed) = flag {
            self.simulation.seed = seed;
        } else if let Some(text) = env {
            self.simulation.seed = text
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={text:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON form, in hex.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "plant": {"a": [[0, 1], [-2, 3]], "b": [[0], [1]], "k": [[1, -4]], "blocks": [1, 1]},
        "discretization": {"t": 0.3},
        "horizons": {"l_min": 1, "l_max": 3},
        "mode": "online-unperturbed",
        "simulation": {"x0": [5, -2, 5, -2], "total_steps": 20}
    }"#;

    #[test]
    fn minimal_document_uses_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.certificate, CertificateSection::default());
        assert_eq!(c.simulation.substeps, 100);
        assert_eq!(c.horizons.cap, DEFAULT_CAP);
        assert_eq!(c.to_sim_config().plant, PlantModel::second_order());
    }

    #[test]
    fn round_trip_keeps_digest() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        let mut other = c.clone();
        other.simulation.seed = 1;
        assert_ne!(other.digest(), c.digest());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("\"mode\"", "\"extra\": 1, \"mode\"");
        assert!(matches!(RunConfig::from_json(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let text = MINIMAL.replace("\"t\": 0.3", "\"t\": -1");
        assert_eq!(RunConfig::from_json(&text).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn seed_precedence() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.apply_seed(None, Some("11")).unwrap();
        assert_eq!(c.simulation.seed, 11);
        c.apply_seed(Some(5), Some("11")).unwrap();
        assert_eq!(c.simulation.seed, 5);
        assert!(c.apply_seed(None, Some("x")).is_err());
    }
}
