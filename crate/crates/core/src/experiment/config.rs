//! Suite configuration, read from TOML.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discovery::{DiscoveryConfig, Exploration};
use crate::error::{Error, Result};
use crate::estimator::{short_hash, EstimatorConfig};
use crate::grid::Cell;
use crate::qlearning::LearningConfig;
use crate::scenario::{build_scenario, GeometrySet, ObstacleScenario, ScenarioKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Baseline {
    Rand,
    PiCK,
    PStar,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Rand, Baseline::PiCK, Baseline::PStar];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Rand => "Rand",
            Baseline::PiCK => "PiCK",
            Baseline::PStar => "PStar",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    pub start: Cell,
    pub goal: Cell,
}

impl Endpoints {
    /// Identifier used for seeds and file names, e.g. `r0c0-r10c10`.
    pub fn id(&self) -> String {
        format!(
            "r{}c{}-r{}c{}",
            self.start.row, self.start.col, self.goal.row, self.goal.col
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalScenario {
    pub id: String,
    pub teacher: Endpoints,
    pub learner: Endpoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSpec {
    pub id: String,
    pub kind: ScenarioKind,
}

/// Teacher of goal scenario `teacher` hands its model to the learner of
/// goal scenario `learner`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferPair {
    pub teacher: String,
    pub learner: String,
}

impl TransferPair {
    pub fn id(&self) -> String {
        format!("{}>{}", self.teacher, self.learner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDims {
    pub width: usize,
    pub height: usize,
    /// Episode step cap; defaults to `4 * width * height`.
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl GridDims {
    pub fn step_cap(&self) -> usize {
        self.max_steps.unwrap_or(4 * self.width * self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub discovery_episodes: usize,
    pub evaluation_episodes: usize,
    pub baselines: Vec<Baseline>,
    pub grid: GridDims,
    pub geometry: GeometrySet,
    pub barriers: Vec<BarrierSpec>,
    pub goal_scenarios: Vec<GoalScenario>,
    pub transfers: Vec<TransferPair>,
    /// Seeds and episode caps inside these sections are overridden per stage.
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default = "default_exploration")]
    pub exploration: Exploration,
    #[serde(default = "default_macro_cap")]
    pub macro_cap: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_exploration() -> Exploration {
    Exploration::UniformRandom
}

fn default_macro_cap() -> usize {
    100
}

/// Default suite: 11x11 grid, four barriers, four goal scenarios, each
/// learner paired with the teacher of its own scenario.
pub const DEFAULT_CONFIG: &str = include_str!("../../configs/default.toml");

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SuiteConfig::from_toml(&text)
    }

    pub fn default_suite() -> Self {
        SuiteConfig::from_toml(DEFAULT_CONFIG).expect("bundled default config parses")
    }

    /// Digest of the canonical serialisation, independent of file layout.
    /// Hash of everything that can change results; the output directory is
    /// left out.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        short_hash(toml::to_string(&canonical).expect("config serialises").as_bytes())
    }

    pub fn goal_scenario(&self, id: &str) -> Option<&GoalScenario> {
        self.goal_scenarios.iter().find(|g| g.id == id)
    }

    pub fn learning_config(&self, seed: u64) -> LearningConfig {
        LearningConfig {
            seed,
            max_steps: self.grid.step_cap(),
            ..self.learning
        }
    }

    pub fn discovery_config(&self, seed: u64) -> DiscoveryConfig {
        DiscoveryConfig {
            episodes: self.discovery_episodes,
            seed,
            exploration: self.exploration,
            macro_cap: self.macro_cap,
            max_steps: self.grid.step_cap(),
        }
    }

    /// Every distinct agent (start, goal) pair in the suite.
    pub fn endpoint_pairs(&self) -> Vec<(Cell, Cell)> {
        let set: BTreeSet<(Cell, Cell)> = self
            .goal_scenarios
            .iter()
            .flat_map(|g| [(g.teacher.start, g.teacher.goal), (g.learner.start, g.learner.goal)])
            .collect();
        set.into_iter().collect()
    }

    pub fn scenario(&self, barrier: &BarrierSpec) -> Result<ObstacleScenario> {
        build_scenario(
            barrier.kind,
            &self.geometry,
            self.grid.width,
            self.grid.height,
            &self.endpoint_pairs(),
        )
    }

    /// Checks ids, ranges and that every barrier/goal pair yields a valid grid.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid.width == 0 || self.grid.height == 0 || self.grid.step_cap() == 0 {
            return bad("grid dimensions and step cap must be positive".into());
        }
        if self.discovery_episodes == 0 || self.evaluation_episodes == 0 {
            return bad("discovery_episodes and evaluation_episodes must be positive".into());
        }
        if self.macro_cap == 0 {
            return bad("macro_cap must be positive".into());
        }
        self.learning.validate()?;
        self.estimator.validate()?;
        let mut ids = BTreeSet::new();
        for g in &self.goal_scenarios {
            if !ids.insert(g.id.as_str()) {
                return bad(format!("duplicate goal scenario {:?}", g.id));
            }
        }
        let mut barrier_ids = BTreeSet::new();
        for b in &self.barriers {
            if !barrier_ids.insert(b.id.as_str()) {
                return bad(format!("duplicate barrier {:?}", b.id));
            }
            if b.id.contains(['/', '\\', ',']) {
                return bad(format!("barrier id {:?} may not contain '/', '\\\\' or ','", b.id));
            }
            self.scenario(b)?;
        }
        for t in &self.transfers {
            for id in [&t.teacher, &t.learner] {
                if !ids.contains(id.as_str()) {
                    return bad(format!("transfer references unknown goal scenario {id:?}"));
                }
            }
        }
        Ok(())
    }
}
