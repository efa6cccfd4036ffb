use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::belief::BirlConfig;
use crate::design::ExtendedViOptions;
use crate::domains::{MazeLayout, MazeTrueReward, PerturbationSpec, RandomMdpSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    EdBirl,
    FixedEnv,
    DomainRandomization,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::EdBirl, Method::FixedEnv, Method::DomainRandomization];

    pub fn name(self) -> &'static str {
        match self {
            Method::EdBirl => "EdBirl",
            Method::FixedEnv => "FixedEnv",
            Method::DomainRandomization => "DomainRandomization",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "edbirl" => Ok(Method::EdBirl),
            "fixedenv" | "fixed" => Ok(Method::FixedEnv),
            "domainrandomization" | "dr" | "random" => Ok(Method::DomainRandomization),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainConfig {
    Maze(MazeDomain),
    RandomMdp(RandomMdpSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeDomain {
    /// Layout text, inline. Takes precedence over `layout_path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout_path: Option<PathBuf>,
    #[serde(default = "default_maze_discount")]
    pub discount: f64,
    #[serde(default)]
    pub slip: f64,
    #[serde(default)]
    pub reward: MazeTrueReward,
    /// Obstacle probability per configurable cell for domain randomisation.
    #[serde(default = "default_obstacle_probability")]
    pub obstacle_probability: f64,
}

fn default_maze_discount() -> f64 {
    0.9
}

fn default_obstacle_probability() -> f64 {
    0.3
}

impl MazeDomain {
    pub fn inline(layout: &str) -> Self {
        Self {
            layout: Some(layout.to_owned()),
            layout_path: None,
            discount: default_maze_discount(),
            slip: 0.0,
            reward: MazeTrueReward::default(),
            obstacle_probability: default_obstacle_probability(),
        }
    }

    pub fn load_layout(&self) -> Result<MazeLayout> {
        match (&self.layout, &self.layout_path) {
            (Some(text), _) => MazeLayout::parse(text),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                MazeLayout::parse(&text)
            }
            (None, None) => Err(Error::Config("maze domain needs layout or layout_path".into())),
        }
    }
}

/// How the learner's design step searches the environment set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "selector", rename_all = "snake_case")]
pub enum DesignConfig {
    Structured(ExtendedViOptions),
    /// Exhaustive scoring of a random pool of `pool_size` assembled
    /// environments (the base environment always included).
    Enumerated { pool_size: usize },
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig::Structured(ExtendedViOptions::default())
    }
}

/// Expert settings; unset fields fall back to the learner's rationality and
/// the domain's horizon.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertSettings {
    pub rationality: Option<f64>,
    pub horizon: Option<usize>,
    pub trajectories_per_round: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub rho_test: f64,
    pub n_test: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            rho_test: 0.5,
            n_test: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub rounds: usize,
    #[serde(default)]
    pub birl: BirlConfig,
    #[serde(default)]
    pub expert: ExpertSettings,
    pub domain: DomainConfig,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub design: DesignConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.birl.validate()?;
        if let Some(c) = self.expert.rationality {
            if c.is_nan() || c < 0.0 {
                return Err(Error::Config(format!("expert rationality {c} is negative")));
            }
        }
        if self.expert.horizon == Some(0) || self.expert.trajectories_per_round == Some(0) {
            return Err(Error::Config("expert horizon and trajectories must be positive".into()));
        }
        if self.eval.n_test < 1 || !(self.eval.rho_test >= 0.0) {
            return Err(Error::Config("eval needs n_test >= 1 and rho_test >= 0".into()));
        }
        if self.perturbation.choices_per_state < 1 || !(self.perturbation.rho >= 0.0) {
            return Err(Error::Config(
                "perturbation needs choices_per_state >= 1 and rho >= 0".into(),
            ));
        }
        if let DesignConfig::Enumerated { pool_size: 0 } = self.design {
            return Err(Error::Config("enumerated pool_size must be positive".into()));
        }
        if let DomainConfig::Maze(m) = &self.domain {
            if !(0.0..=1.0).contains(&m.obstacle_probability) {
                return Err(Error::Config("obstacle_probability outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file. A relative `layout_path` is resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let DomainConfig::Maze(m) = &mut cfg.domain {
            if let Some(p) = &m.layout_path {
                if p.is_relative() {
                    let dir = path.parent().unwrap_or(Path::new("."));
                    m.layout_path = Some(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    /// Directory holding the artifacts of one `(method, seed)` run.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(self.method.name()).join(format!("seed-{seed}"))
    }
}
