use super::config::{DesignConfig, Method};
use super::problem::Problem;
use crate::belief::{sample_posterior, BirlConfig, EmpiricalBelief, ObservationLog};
use crate::design::{select_env_enumerated, select_env_structured, ChosenEnv, RegretRecord};
use crate::error::{Error, Result};
use crate::mdp::{Trajectory, Transitions};
use crate::rng;

const POOL_TAG: u64 = 0x9001;

/// The environment picked for one round.
#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub assignment: Vec<usize>,
    pub env: Transitions,
    /// Present when the environment came from a regret-maximising design step.
    pub regret: Option<RegretRecord>,
}

/// Learner state across rounds: the observation log and the belief it
/// implies. Shared by the simulated-expert harness and interactive sessions
/// so both follow the same seeds and code path.
#[derive(Clone, Debug)]
pub struct Learner {
    problem: Problem,
    birl: BirlConfig,
    design: DesignConfig,
    run_seed: u64,
    log: ObservationLog,
    belief: EmpiricalBelief,
    completed: usize,
}

impl Learner {
    /// Starts with an empty log; the belief is sampled from the prior.
    pub fn new(problem: Problem, birl: BirlConfig, design: DesignConfig, run_seed: u64) -> Result<Self> {
        let log = ObservationLog::new(problem.base());
        let belief = sample_posterior(&log, &round_birl(&birl, run_seed, 0))?;
        Ok(Self {
            problem,
            birl,
            design,
            run_seed,
            log,
            belief,
            completed: 0,
        })
    }

    /// Rebuilds a learner from persisted state without re-sampling.
    pub fn resume(
        problem: Problem,
        birl: BirlConfig,
        design: DesignConfig,
        run_seed: u64,
        log: ObservationLog,
        belief: EmpiricalBelief,
        completed: usize,
    ) -> Result<Self> {
        if belief.n_states() != problem.base().n_states() || log.n_states() != belief.n_states() {
            return Err(Error::Dimension("persisted learner state does not match the problem".into()));
        }
        Ok(Self {
            problem,
            birl,
            design,
            run_seed,
            log,
            belief,
            completed,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn log(&self) -> &ObservationLog {
        &self.log
    }

    /// Belief after the completed rounds (the prior before any).
    pub fn belief(&self) -> &EmpiricalBelief {
        &self.belief
    }

    pub fn completed_rounds(&self) -> usize {
        self.completed
    }

    pub fn run_seed(&self) -> u64 {
        self.run_seed
    }

    /// Chain settings used for the belief after `completed` rounds.
    pub fn birl_after(&self, completed: usize) -> BirlConfig {
        round_birl(&self.birl, self.run_seed, completed)
    }

    /// Picks the environment for the next round.
    pub fn choose(&self, method: Method) -> Result<Choice> {
        let round = self.completed + 1;
        let set = self.problem.set();
        match method {
            Method::FixedEnv => self.plain(set.default_assignment()),
            Method::DomainRandomization => {
                self.plain(self.problem.randomized_assignment(self.run_seed, round))
            }
            Method::EdBirl => {
                let shared = self.problem.shared();
                match &self.design {
                    DesignConfig::Structured(opts) => {
                        let report = select_env_structured(&self.belief, set, &shared, *opts)?;
                        let ChosenEnv::ChosenChoices(assignment) = report.chosen.clone() else {
                            unreachable!("structured selection reports choices")
                        };
                        Ok(Choice {
                            assignment,
                            regret: Some(report.record()),
                            env: report.env,
                        })
                    }
                    DesignConfig::Enumerated { pool_size } => {
                        let pool_seed = rng::derive_seed(self.run_seed, &[POOL_TAG, round as u64]);
                        let mut pool = vec![set.default_assignment()];
                        pool.extend(
                            (1..*pool_size as u64)
                                .map(|i| self.problem.randomized_assignment(pool_seed, i as usize)),
                        );
                        let envs = pool
                            .iter()
                            .map(|a| set.assemble(a))
                            .collect::<Result<Vec<_>>>()?;
                        let report = select_env_enumerated(&self.belief, &envs, &shared)?;
                        let ChosenEnv::ChosenEnvIndex(i) = report.chosen else {
                            unreachable!("enumerated selection reports an index")
                        };
                        let mut record = report.record();
                        record.chosen = ChosenEnv::ChosenChoices(pool[i].clone());
                        Ok(Choice {
                            assignment: pool.swap_remove(i),
                            regret: Some(record),
                            env: report.env,
                        })
                    }
                }
            }
        }
    }

    fn plain(&self, assignment: Vec<usize>) -> Result<Choice> {
        Ok(Choice {
            env: self.problem.set().assemble(&assignment)?,
            assignment,
            regret: None,
        })
    }

    /// Appends the round's trajectories and re-samples the posterior over
    /// the full log.
    pub fn observe(&mut self, env: &Transitions, trajectories: Vec<Trajectory>) -> Result<()> {
        if trajectories.is_empty() {
            return Err(Error::Empty("round trajectories"));
        }
        let mut log = self.log.clone();
        for t in trajectories {
            log.record(t, env)?;
        }
        let belief = sample_posterior(&log, &round_birl(&self.birl, self.run_seed, self.completed + 1))?;
        self.log = log;
        self.belief = belief;
        self.completed += 1;
        Ok(())
    }
}

fn round_birl(birl: &BirlConfig, run_seed: u64, completed: usize) -> BirlConfig {
    BirlConfig {
        seed: rng::derive_seed(birl.seed, &[run_seed, completed as u64]),
        ..birl.clone()
    }
}
