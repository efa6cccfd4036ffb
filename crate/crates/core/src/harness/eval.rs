use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Method, RunConfig};
use super::io::{read_json, write_json};
use super::problem::Problem;
use crate::belief::BeliefSnapshot;
use crate::design::{loss, Shared};
use crate::error::{Error, Result};
use crate::mdp::{solve_optimal, RewardFunction, Transitions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method: Method,
    pub seed: u64,
    pub round: usize,
    pub rho_test: f64,
    pub avg_loss: f64,
}

/// Mean over `test_envs` of the true-reward loss of the policy that is
/// optimal for `belief_mean` in that environment.
pub fn evaluate(
    belief_mean: &RewardFunction,
    true_reward: &RewardFunction,
    test_envs: &[Transitions],
    shared: &Shared,
) -> Result<f64> {
    if test_envs.is_empty() {
        return Err(Error::Empty("test environment set"));
    }
    let mut total = 0.0;
    for t in test_envs {
        let mdp = shared.mdp(t.clone())?;
        let policy = solve_optimal(&mdp, belief_mean, None)?.deterministic_policy();
        total += loss(&mdp, true_reward, &policy)?;
    }
    Ok(total / test_envs.len() as f64)
}

pub(crate) fn eval_file_name(rho_test: f64) -> String {
    format!("rho-{rho_test}.json")
}

/// Re-evaluates every round belief stored in a run directory against a
/// fresh test set and writes `evals/rho-<rho_test>.json`.
pub fn evaluate_run_dir(run_dir: &Path, rho_test: f64, n_test: usize) -> Result<Vec<EvalRecord>> {
    if !(rho_test >= 0.0) || n_test == 0 {
        return Err(Error::Config("eval needs rho_test >= 0 and n_test >= 1".into()));
    }
    let cfg: RunConfig = read_json(&run_dir.join("config.json"))?;
    let seed = *cfg
        .seeds
        .first()
        .ok_or_else(|| Error::Config("run config has no seed".into()))?;
    let problem = Problem::build(&cfg, seed)?;
    let test_envs = problem.test_envs(rho_test, n_test, seed)?;
    let shared = problem.shared();
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let snap: BeliefSnapshot = read_json(&run_dir.join(super::run::belief_path(round)))?;
        let mean = RewardFunction::new(snap.mean);
        records.push(EvalRecord {
            method: cfg.method,
            seed,
            round,
            rho_test,
            avg_loss: evaluate(&mean, problem.true_reward(), &test_envs, &shared)?,
        });
    }
    write_json(&run_dir.join("evals").join(eval_file_name(rho_test)), &records)?;
    Ok(records)
}
