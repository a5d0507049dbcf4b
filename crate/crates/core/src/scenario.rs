//! Scenario files: world, script, noise and driver config in one TOML document.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DriverConfig;
use crate::sim::{NoiseConfig, TrajectoryScript, WorldModel};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("parameter path '{0}' does not name a driver config field")]
    UnknownParameter(String),
}

/// Simulation settings that are not part of the world itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub dt: f64,
    pub seed: u64,
    /// Where a dropped tag lands, in the robot frame.
    pub deploy_offset: [f64; 2],
    /// Hard stop for runaway scripts.
    pub max_ticks: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 0.1,
            seed: 1,
            deploy_offset: [-2.0, 0.0],
            max_ticks: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub world: WorldModel,
    pub script: TrajectoryScript,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub driver: DriverConfig,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ScenarioError::Parse(msg) => ScenarioError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = ScenarioError::Invalid;
        if !(self.sim.dt > 0.0) {
            return Err(invalid("sim.dt must be positive".into()));
        }
        self.world.validate().map_err(|e| invalid(e.to_string()))?;
        self.script.validate().map_err(invalid)?;
        self.noise.validate().map_err(invalid)?;
        self.driver.validate().map_err(invalid)?;
        Ok(())
    }

    /// Copy with one driver parameter replaced. `path` is dotted and relative
    /// to the driver section, e.g. `alpha_r` or `min_disp.trans`.
    pub fn with_parameter(&self, path: &str, value: toml::Value) -> Result<Self, ScenarioError> {
        let mut root = toml::Value::try_from(&self.driver).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let mut slot = &mut root;
        for key in path.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(key))
                .ok_or_else(|| ScenarioError::UnknownParameter(path.to_string()))?;
        }
        // Integers are accepted where floats are expected.
        *slot = match (&*slot, value) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        let driver: DriverConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| ScenarioError::Invalid(format!("{path}: {e}")))?;
        driver.validate().map_err(ScenarioError::Invalid)?;
        Ok(Self {
            driver,
            ..self.clone()
        })
    }
}

/// Parses a command-line value as a TOML scalar, falling back to a string.
pub fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "tiny"
        [script]
        steps = [{ kind = "goto", x = 1.0, y = 0.0, speed = 0.1 }]
        [driver]
        alpha_r = 2.0
    "#;

    #[test]
    fn parses_and_round_trips() {
        let sc = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(sc.driver.alpha_r, 2.0);
        assert_eq!(sc.sim.dt, 0.1);
        let back = Scenario::from_toml_str(&sc.to_toml_string()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn parse_errors_name_the_location() {
        let err = Scenario::from_toml_str("[script]\nsteps = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = Scenario::from_toml_str("[driver]\nalpha_q = 1\n[script]\n").unwrap_err().to_string();
        assert!(err.contains("alpha_q"), "{err}");
    }

    #[test]
    fn parameter_override() {
        let sc = Scenario::from_toml_str(MINIMAL).unwrap();
        let sc2 = sc.with_parameter("alpha_r", parse_value("4")).unwrap();
        assert_eq!(sc2.driver.alpha_r, 4.0);
        let sc3 = sc.with_parameter("min_disp.trans", parse_value("0.01")).unwrap();
        assert_eq!(sc3.driver.min_disp.trans, 0.01);
        assert!(matches!(
            sc.with_parameter("alpha_z", parse_value("1")),
            Err(ScenarioError::UnknownParameter(_))
        ));
        assert!(sc.with_parameter("r2", parse_value("0.5")).is_err());
    }
}
