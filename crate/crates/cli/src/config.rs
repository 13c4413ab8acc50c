//! TOML configuration for the `planc` CLI.
//!
//! An empty document yields all defaults; unknown keys are rejected and
//! every field is range-checked at parse time with a `section.field` path
//! in the error message.

use std::path::Path;

use serde::{Deserialize, Serialize};

use planc_core::reference::PlannerConfig;
use planc_core::sim::{
    ClfConfig, DisturbanceWindow, NoiseConfig, PlanOverridesConfig, RandomPushes, SimConfig,
};
use planc_core::terrain::TerrainKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid value at `{path}`: {reason}")]
    Range { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub planner: PlannerConfig,
    pub clf: ClfConfig,
    pub terrain: TerrainSection,
    pub sim: SimSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainSection {
    pub kind: TerrainKind,
    pub difficulty: f64,
    pub n_stones: usize,
    pub stone_width: f64,
    pub seed: u64,
    /// Force every sagittal gap to this value (m), overriding the sampled
    /// difficulty-indexed ranges. Useful for probing kinematic limits.
    pub gap_override: Option<f64>,
}

impl Default for TerrainSection {
    fn default() -> Self {
        Self {
            kind: TerrainKind::FlatStones,
            difficulty: 0.5,
            n_stones: 20,
            stone_width: planc_core::terrain::DEFAULT_STONE_WIDTH,
            seed: 0,
            gap_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub max_step_reach: f64,
    pub fall_threshold: f64,
    pub noise: NoiseConfig,
    pub disturbances: Vec<DisturbanceWindow>,
    pub random_pushes: Option<RandomPushes>,
    pub disturbance_cap: f64,
    pub init_energy: Option<f64>,
    pub max_sim_time: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            dt: d.dt,
            max_step_reach: d.max_step_reach,
            fall_threshold: d.fall_threshold,
            noise: d.noise,
            disturbances: d.disturbances,
            random_pushes: d.random_pushes,
            disturbance_cap: d.disturbance_cap,
            init_energy: d.init_energy,
            max_sim_time: d.max_sim_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub families: Vec<TerrainKind>,
    pub difficulties: Vec<f64>,
    pub seeds_per_cell: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            families: TerrainKind::ALL.to_vec(),
            difficulties: vec![0.5, 1.0],
            seeds_per_cell: 100,
        }
    }
}

impl Config {
    /// Parse a config file; missing sections and fields take defaults.
    pub fn from_path(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn scoped(section: &'static str, err: planc_core::Error) -> ConfigError {
            match err {
                planc_core::Error::InvalidArgument { arg, reason } => ConfigError::Range {
                    path: format!("{section}.{arg}"),
                    reason,
                },
                other => ConfigError::Range {
                    path: section.to_string(),
                    reason: other.to_string(),
                },
            }
        }
        self.planner.validate().map_err(|e| scoped("planner", e))?;
        self.clf
            .matrix()
            .map(|_| ())
            .map_err(|e| scoped("clf", e))?;

        if !(0.0..=1.0).contains(&self.terrain.difficulty) {
            return Err(ConfigError::Range {
                path: "terrain.difficulty".into(),
                reason: format!("must lie in [0, 1], got {}", self.terrain.difficulty),
            });
        }
        if self.terrain.n_stones < 2 {
            return Err(ConfigError::Range {
                path: "terrain.n_stones".into(),
                reason: "need at least two stones".into(),
            });
        }
        if !(self.terrain.stone_width > 0.0) {
            return Err(ConfigError::Range {
                path: "terrain.stone_width".into(),
                reason: "must be positive".into(),
            });
        }
        if let Some(gap) = self.terrain.gap_override {
            if !(gap > 0.0) {
                return Err(ConfigError::Range {
                    path: "terrain.gap_override".into(),
                    reason: format!("must be positive, got {gap}"),
                });
            }
        }
        // Full simulator-side validation (noise, disturbances, caps).
        self.sim_config(&PlanOverridesConfig::default())
            .validate()
            .map_err(|e| scoped("sim", e))?;

        if self.eval.families.is_empty() {
            return Err(ConfigError::Range {
                path: "eval.families".into(),
                reason: "need at least one terrain family".into(),
            });
        }
        if self.eval.difficulties.is_empty() {
            return Err(ConfigError::Range {
                path: "eval.difficulties".into(),
                reason: "need at least one difficulty".into(),
            });
        }
        for (i, d) in self.eval.difficulties.iter().enumerate() {
            if !(0.0..=1.0).contains(d) {
                return Err(ConfigError::Range {
                    path: format!("eval.difficulties[{i}]"),
                    reason: format!("must lie in [0, 1], got {d}"),
                });
            }
        }
        if self.eval.seeds_per_cell == 0 {
            return Err(ConfigError::Range {
                path: "eval.seeds_per_cell".into(),
                reason: "need at least one seed per cell".into(),
            });
        }
        Ok(())
    }

    /// Assemble the simulator configuration with the given ablation hooks.
    pub fn sim_config(&self, overrides: &PlanOverridesConfig) -> SimConfig {
        SimConfig {
            planner: self.planner.clone(),
            clf: self.clf.clone(),
            dt: self.sim.dt,
            max_step_reach: self.sim.max_step_reach,
            fall_threshold: self.sim.fall_threshold,
            noise: self.sim.noise,
            disturbances: self.sim.disturbances.clone(),
            random_pushes: self.sim.random_pushes,
            disturbance_cap: self.sim.disturbance_cap,
            init_energy: self.sim.init_energy,
            max_sim_time: self.sim.max_sim_time,
            overrides: *overrides,
        }
    }
}
