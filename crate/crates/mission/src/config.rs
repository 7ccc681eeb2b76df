use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use sitgraph_core::executor::ExecutorConfig;
use sitgraph_core::planner::{AutonomyLevel, RewardModel};
use sitgraph_core::recording::RecorderConfig;
use sitgraph_core::world::{load_scenario, ScenarioError, SensorConfig, WorldModel, MOCK_LAB};

/// Scenario name that resolves to the bundled mock lab when no such file exists.
pub const BUILTIN_MOCK_LAB: &str = "mock_lab";

/// When a teleop request interrupts an in-flight behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TeleopInterrupt {
    Immediate,
    #[default]
    AfterEdge,
}

/// Whether the mission hands over to the operator on its own at L1 when
/// a person or container is found. Off by default: teleop edges are then
/// only surfaced as notifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TeleopPolicy {
    pub request_at_l1: bool,
    pub interrupt: TeleopInterrupt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub scenario: String,
    pub seed: u64,
    pub autonomy: AutonomyLevel,
    pub step_limit: u64,
    pub sensors: SensorConfig,
    pub recorder: RecorderConfig,
    pub executor: ExecutorConfig,
    pub rewards: RewardModel,
    pub teleop: TeleopPolicy,
    /// Not part of the digest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            scenario: BUILTIN_MOCK_LAB.into(),
            seed: 0,
            autonomy: AutonomyLevel::L1,
            step_limit: 10_000,
            sensors: SensorConfig::default(),
            recorder: RecorderConfig::default(),
            executor: ExecutorConfig::default(),
            rewards: RewardModel::default(),
            teleop: TeleopPolicy::default(),
            log: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("step limit must be positive")]
    ZeroStepLimit,
    #[error("scenario {path}")]
    Scenario { path: String, source: ScenarioError },
}

impl MissionConfig {
    /// Reads a TOML config file; missing fields take their defaults.
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.into(),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.step_limit == 0 {
            return Err(ConfigError::ZeroStepLimit);
        }
        Ok(())
    }

    /// Scenario text: the named file, or the bundled mock lab.
    pub fn scenario_text(&self) -> Result<String, ConfigError> {
        let path = Path::new(&self.scenario);
        if self.scenario == BUILTIN_MOCK_LAB && !path.exists() {
            return Ok(MOCK_LAB.to_string());
        }
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })
    }

    pub fn load_world(&self) -> Result<WorldModel, ConfigError> {
        let text = self.scenario_text()?;
        let mut world = load_scenario(&text).map_err(|source| ConfigError::Scenario {
            path: self.scenario.clone(),
            source,
        })?;
        world.seed(self.seed);
        Ok(world)
    }

    /// SHA-256 over the canonical JSON of the config (without the log
    /// path) followed by the scenario text.
    pub fn digest(&self) -> Result<String, ConfigError> {
        let mut canonical = self.clone();
        canonical.log = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        h.update(b"\n");
        h.update(self.scenario_text()?.as_bytes());
        Ok(hex::encode(h.finalize()))
    }
}
