//! Run configuration: one JSON file drives every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envgen::RuntimeRule;
use crate::error::{Error, Result};
use crate::network::{load_network, GarageNetwork};
use crate::perception::{FailureDefinition, SensorConfig, SurrogateParams};
use crate::policy::TrainConfig;
use crate::recorder::CriticalStateRule;
use crate::sim::SimConfig;

pub const OUTPUT_ENV: &str = "FAILGEN_OUT";

/// Seeds and scenario time of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runs {
    pub seeds: Vec<u64>,
    /// Scenario seconds per seed.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Map file, relative to the config file.
    pub network: PathBuf,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub sensor: SensorConfig,
    /// Surrogate profile file; the built-in garage profile when absent.
    #[serde(default)]
    pub surrogate: Option<PathBuf>,
    /// One of `a`-`d`.
    pub definition: String,
    #[serde(default)]
    pub critical: CriticalStateRule,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub runtime: RuntimeRule,
    /// Output root, relative to the config file.
    pub output: PathBuf,
    pub baseline: Runs,
    pub evaluation: Runs,
}

/// A config with its paths resolved and files loaded.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub net: GarageNetwork,
    pub surrogate: SurrogateParams,
    pub definition: FailureDefinition,
    pub output: PathBuf,
    pub hash: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Digest of the settings that affect outputs; the output root is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Resolves paths against `base_dir`, loads referenced files and checks
    /// every invariant. `output_override` wins over the file's output root.
    pub fn resolve(self, base_dir: &Path, output_override: Option<PathBuf>) -> Result<Resolved> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        let net = load_network(base_dir.join(&self.network)).map_err(cfg_err)?;
        let surrogate = match &self.surrogate {
            Some(p) => {
                let path = base_dir.join(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                SurrogateParams::from_json(&text).map_err(cfg_err)?
            }
            None => SurrogateParams::default_garage(),
        };
        let definition = FailureDefinition::from_label(&self.definition).map_err(cfg_err)?;
        self.sim.validate().map_err(cfg_err)?;
        self.sensor.validate().map_err(cfg_err)?;
        self.critical.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        self.runtime.validate().map_err(cfg_err)?;
        for (name, runs) in [
            ("baseline", &self.baseline),
            ("evaluation", &self.evaluation),
        ] {
            if runs.seeds.is_empty() {
                return Err(Error::Config(format!("{name} needs at least one seed")));
            }
            if self.sim.steps_for(runs.duration) < 1 {
                return Err(Error::Config(format!(
                    "{name} duration is shorter than one step"
                )));
            }
        }
        let output = output_override.unwrap_or_else(|| base_dir.join(&self.output));
        let hash = self.hash();
        Ok(Resolved {
            config: self,
            net,
            surrogate,
            definition,
            output,
            hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        serde_json::from_str(
            r#"{"network":"m.json","definition":"c","output":"out",
                "baseline":{"seeds":[1],"duration":10},
                "evaluation":{"seeds":[2],"duration":10}}"#,
        )
        .unwrap()
    }

    #[test]
    fn hash_ignores_output_root() {
        let a = sample();
        let mut b = a.clone();
        b.output = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.definition = "a".into();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn missing_map_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            sample().resolve(dir.path(), None),
            Err(Error::Config(_))
        ));
    }
}
