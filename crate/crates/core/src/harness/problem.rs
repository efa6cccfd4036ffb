use serde::{Deserialize, Serialize};

use super::config::{DomainConfig, RunConfig};
use crate::design::{Shared, StructuredSet};
use crate::domains::{
    maze_to_structured_set, perturbed_env_set, random_assignment, random_mdp, random_obstacles,
    sample_test_envs, MazeInstance, MazeLayout, PerturbationSpec,
};
use crate::error::Result;
use crate::mdp::{RewardFunction, TabularMdp, Transitions};
use crate::rng;

const INSTANCE_TAG: u64 = 0x1A;
const MENU_TAG: u64 = 0x3E;
const TEST_TAG: u64 = 0x7E57;
const RANDOMIZE_TAG: u64 = 0xD0;

/// A concrete learning problem: base MDP, designable set and hidden reward.
#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Maze {
        instance: MazeInstance,
        obstacle_probability: f64,
    },
    RandomMdp {
        base: TabularMdp,
        set: StructuredSet,
        true_reward: RewardFunction,
    },
}

impl Problem {
    /// Builds the problem for one run seed. The random-MDP instance and its
    /// menus are re-drawn per seed; the maze is the same for every seed.
    pub fn build(cfg: &RunConfig, run_seed: u64) -> Result<Self> {
        match &cfg.domain {
            DomainConfig::Maze(m) => {
                let layout = m.load_layout()?;
                Ok(Problem::Maze {
                    instance: maze_to_structured_set(&layout, m.discount, m.slip, &m.reward)?,
                    obstacle_probability: m.obstacle_probability,
                })
            }
            DomainConfig::RandomMdp(spec) => {
                let (base, true_reward) =
                    random_mdp(spec, rng::derive_seed(run_seed, &[INSTANCE_TAG]))?;
                let menus = PerturbationSpec {
                    seed: rng::derive_seed(cfg.perturbation.seed, &[run_seed, MENU_TAG]),
                    ..cfg.perturbation.clone()
                };
                let set = perturbed_env_set(&base.transitions, &menus)?;
                Ok(Problem::RandomMdp {
                    base,
                    set,
                    true_reward,
                })
            }
        }
    }

    pub fn base(&self) -> &TabularMdp {
        match self {
            Problem::Maze { instance, .. } => &instance.base,
            Problem::RandomMdp { base, .. } => base,
        }
    }

    pub fn set(&self) -> &StructuredSet {
        match self {
            Problem::Maze { instance, .. } => &instance.set,
            Problem::RandomMdp { set, .. } => set,
        }
    }

    pub fn true_reward(&self) -> &RewardFunction {
        match self {
            Problem::Maze { instance, .. } => &instance.true_reward,
            Problem::RandomMdp { true_reward, .. } => true_reward,
        }
    }

    pub fn shared(&self) -> Shared {
        Shared::of(self.base())
    }

    pub fn layout(&self) -> Option<&MazeLayout> {
        match self {
            Problem::Maze { instance, .. } => Some(&instance.layout),
            Problem::RandomMdp { .. } => None,
        }
    }

    pub fn maze(&self) -> Option<&MazeInstance> {
        match self {
            Problem::Maze { instance, .. } => Some(instance),
            Problem::RandomMdp { .. } => None,
        }
    }

    /// Expert horizon when the config leaves it unset.
    pub fn default_horizon(&self) -> usize {
        match self {
            Problem::Maze { instance, .. } => instance.horizon(),
            Problem::RandomMdp { base, .. } => 2 * base.n_states(),
        }
    }

    /// Held-out evaluation environments. The maze is evaluated on its base
    /// layout only.
    pub fn test_envs(&self, rho_test: f64, n_test: usize, run_seed: u64) -> Result<Vec<Transitions>> {
        match self {
            Problem::Maze { instance, .. } => Ok(vec![instance.base.transitions.clone()]),
            Problem::RandomMdp { base, .. } => sample_test_envs(
                &base.transitions,
                rho_test,
                n_test,
                rng::derive_seed(run_seed, &[TEST_TAG, rho_test.to_bits()]),
            ),
        }
    }

    /// Domain-randomisation draw for `round`: independent obstacles for the
    /// maze, a uniform menu entry per state otherwise.
    pub fn randomized_assignment(&self, run_seed: u64, round: usize) -> Vec<usize> {
        let mut rng = rng::stream(rng::derive_seed(run_seed, &[RANDOMIZE_TAG, round as u64]), 0);
        match self {
            Problem::Maze {
                instance,
                obstacle_probability,
            } => random_obstacles(&instance.layout, *obstacle_probability, &mut rng),
            Problem::RandomMdp { set, .. } => random_assignment(set, &mut rng),
        }
    }

    pub fn record(&self) -> InstanceRecord {
        InstanceRecord {
            layout: self.layout().cloned(),
            base: self.base().clone(),
            true_reward: self.true_reward().clone(),
            set: self.set().clone(),
        }
    }
}

/// Everything needed to rebuild a run's problem, as persisted to
/// `instance.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<MazeLayout>,
    pub base: TabularMdp,
    pub true_reward: RewardFunction,
    pub set: StructuredSet,
}
