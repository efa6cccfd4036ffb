//! Simulated Boltzmann-rational demonstrator.
//!
//! The expert only ever sees the environment it is placed in and the true
//! reward; it has no access to the learner's belief.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{boltzmann_policy, sample_trajectory, solve_optimal, RewardFunction, TabularMdp, Trajectory};
use crate::rng;

const EXPERT_STREAM: u64 = 0xE7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    /// Softmax rationality. `f64::INFINITY` gives the greedy expert with
    /// lowest-index ties; JSON configs use a large finite value instead.
    pub rationality: f64,
    pub horizon: usize,
    pub trajectories_per_round: usize,
    pub seed: u64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            rationality: 5.0,
            horizon: 40,
            trajectories_per_round: 1,
            seed: 0,
        }
    }
}

impl ExpertConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rationality.is_nan() || self.rationality < 0.0 {
            return Err(Error::Config(format!(
                "expert rationality must be non-negative, got {}",
                self.rationality
            )));
        }
        if self.horizon == 0 || self.trajectories_per_round == 0 {
            return Err(Error::Config(
                "expert horizon and trajectories_per_round must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Solves `(env, true_reward)` exactly and rolls out the softmax policy.
pub fn demonstrate(env: &TabularMdp, true_reward: &RewardFunction, cfg: &ExpertConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let solution = solve_optimal(env, true_reward, None)?;
    let policy = boltzmann_policy(&solution.q, cfg.rationality)?;
    let mut rng = rng::stream(cfg.seed, EXPERT_STREAM);
    (0..cfg.trajectories_per_round)
        .map(|_| sample_trajectory(env, &policy, cfg.horizon, &mut rng))
        .collect()
}
