use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DomainConfig, Method, RunConfig};
use super::eval::{eval_file_name, evaluate, EvalRecord};
use super::grid::MazeGrid;
use super::io::write_json;
use super::learner::Learner;
use super::problem::Problem;
use crate::belief::{BeliefSnapshot, BirlConfig, EmpiricalBelief};
use crate::error::{Error, Result};
use crate::expert::{demonstrate, ExpertConfig};
use crate::rng;

const EXPERT_TAG: u64 = 0xE7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Menu entry per factor of the environment set.
    pub chosen: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocked_cells: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regret_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    /// Trajectories appended this round.
    pub observations: usize,
    /// Belief after this round, relative to the run directory.
    pub belief_snapshot: String,
    pub wall_clock_ms: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub rounds: Vec<RoundRecord>,
    pub evals: Vec<EvalRecord>,
    pub final_belief: EmpiricalBelief,
    pub learner: Learner,
}

pub(crate) fn belief_path(round: usize) -> String {
    format!("beliefs/round-{round}.json")
}

/// Expert settings for `round` of a run.
pub fn expert_config(cfg: &RunConfig, problem: &Problem, run_seed: u64, round: usize) -> ExpertConfig {
    ExpertConfig {
        rationality: cfg.expert.rationality.unwrap_or(cfg.birl.rationality),
        horizon: cfg.expert.horizon.unwrap_or_else(|| problem.default_horizon()),
        trajectories_per_round: cfg.expert.trajectories_per_round.unwrap_or(1),
        seed: rng::derive_seed(run_seed, &[EXPERT_TAG, round as u64]),
    }
}

/// The config as stored in a run directory: one seed, layout inlined.
fn pinned_config(cfg: &RunConfig, seed: u64) -> Result<RunConfig> {
    let mut pinned = cfg.clone();
    pinned.seeds = vec![seed];
    if let DomainConfig::Maze(m) = &mut pinned.domain {
        if m.layout.is_none() {
            if let Some(path) = &m.layout_path {
                m.layout = Some(std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?);
            }
        }
    }
    Ok(pinned)
}

pub fn run_ed_birl(cfg: &RunConfig, seed: u64) -> Result<RunOutcome> {
    if cfg.method != Method::EdBirl {
        return Err(Error::Config(format!("run_ed_birl called with method {}", cfg.method)));
    }
    run_seed(cfg, seed)
}

pub fn run_baseline(cfg: &RunConfig, seed: u64) -> Result<RunOutcome> {
    if cfg.method == Method::EdBirl {
        return Err(Error::Config("run_baseline called with method EdBirl".into()));
    }
    run_seed(cfg, seed)
}

/// Runs every seed in the config.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    cfg.seeds.iter().map(|&s| run_seed(cfg, s)).collect()
}

/// One full run: `rounds` rounds of design, demonstration and inference,
/// evaluated after every round. Artifacts go to `cfg.run_dir(seed)` and are
/// rewritten after each round, so a failed run leaves its partial log.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = cfg.run_dir(seed);
    let problem = Problem::build(cfg, seed)?;
    write_json(&dir.join("config.json"), &pinned_config(cfg, seed)?)?;
    write_json(&dir.join("instance.json"), &problem.record())?;

    let mut learner = Learner::new(problem.clone(), cfg.birl.clone(), cfg.design.clone(), seed)?;
    save_belief(&dir.join(belief_path(0)), learner.belief(), &learner.birl_after(0))?;

    let test_envs = problem.test_envs(cfg.eval.rho_test, cfg.eval.n_test, seed)?;
    let shared = problem.shared();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut evals = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let started = Instant::now();
        let choice = learner.choose(cfg.method)?;
        let env = shared.mdp(choice.env.clone())?;
        let trajectories = demonstrate(&env, problem.true_reward(), &expert_config(cfg, &problem, seed, round))?;
        let observations = trajectories.len();
        learner.observe(&choice.env, trajectories)?;

        save_belief(&dir.join(belief_path(round)), learner.belief(), &learner.birl_after(round))?;
        write_json(&dir.join("observations.json"), learner.log())?;
        let blocked = problem.maze().map(|m| m.blocked_cells(&choice.assignment));
        if let (Some(layout), Some(b)) = (problem.layout(), &blocked) {
            let grid = MazeGrid::new(layout, b).with_heatmap(learner.belief().mean());
            write_json(&dir.join(format!("grids/round-{round}.json")), &grid)?;
        }

        evals.push(EvalRecord {
            method: cfg.method,
            seed,
            round,
            rho_test: cfg.eval.rho_test,
            avg_loss: evaluate(learner.belief().mean(), problem.true_reward(), &test_envs, &shared)?,
        });
        rounds.push(RoundRecord {
            round,
            regret_value: choice.regret.as_ref().map(|r| r.regret),
            converged: choice.regret.as_ref().map(|r| r.converged),
            chosen: choice.assignment,
            blocked_cells: blocked,
            observations,
            belief_snapshot: belief_path(round),
            wall_clock_ms: started.elapsed().as_millis() as u64,
        });
        write_json(&dir.join("rounds.json"), &rounds)?;
        write_json(&dir.join("evals").join(eval_file_name(cfg.eval.rho_test)), &evals)?;
    }
    let final_belief = learner.belief().clone();
    save_belief(&dir.join("final_belief.json"), &final_belief, &learner.birl_after(cfg.rounds))?;
    Ok(RunOutcome {
        run_dir: dir,
        rounds,
        evals,
        final_belief,
        learner,
    })
}

fn save_belief(path: &Path, belief: &EmpiricalBelief, birl: &BirlConfig) -> Result<()> {
    write_json(path, &BeliefSnapshot::new(belief, birl))
}
