//! Posterior sampling over state rewards from demonstrations gathered in
//! several environments.
//!
//! Each demonstration is scored by the Boltzmann-rational model of its own
//! environment, and the log-likelihood of the whole log is the sum over
//! demonstrations. Sampling is a Metropolis–Hastings random walk on the
//! reward vector under a uniform box prior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    log_softmax_into, solve_optimal, RewardFunction, TabularMdp, Trajectory, Transitions,
    WarmSolver,
};
use crate::rng;

const CHAIN_STREAM: u64 = 0xB1;

/// One expert trajectory and the dynamics it was produced under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub trajectory: Trajectory,
    pub env: Transitions,
}

/// Observations `D_1..D_k`, all sharing one state/action space, discount and
/// start distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationLog {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    initial_dist: Vec<f64>,
    items: Vec<Observation>,
}

impl ObservationLog {
    pub fn new(shared: &TabularMdp) -> Self {
        Self {
            n_states: shared.n_states(),
            n_actions: shared.n_actions(),
            discount: shared.discount,
            initial_dist: shared.initial_dist.clone(),
            items: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if obs.env.n_states() != self.n_states || obs.env.n_actions() != self.n_actions {
            return Err(Error::Dimension(format!(
                "observation env is {}x{}, log is {}x{}",
                obs.env.n_states(),
                obs.env.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        obs.trajectory.check_dims(self.n_states, self.n_actions)?;
        self.items.push(obs);
        Ok(())
    }

    pub fn record(&mut self, trajectory: Trajectory, env: &Transitions) -> Result<()> {
        self.push(Observation {
            trajectory,
            env: env.clone(),
        })
    }

    pub fn items(&self) -> &[Observation] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// The MDP of observation environment `env`.
    pub fn mdp_for(&self, env: &Transitions) -> Result<TabularMdp> {
        TabularMdp::new(env.clone(), self.discount, self.initial_dist.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BirlConfig {
    /// Assumed expert rationality `c`.
    pub rationality: f64,
    pub prior_low: f64,
    pub prior_high: f64,
    pub proposal_step: f64,
    pub n_samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl Default for BirlConfig {
    fn default() -> Self {
        Self {
            rationality: 5.0,
            prior_low: -1.0,
            prior_high: 1.0,
            proposal_step: 0.05,
            n_samples: 200,
            burn_in: 500,
            thinning: 5,
            seed: 0,
        }
    }
}

impl BirlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.prior_low < self.prior_high) {
            return bad(format!(
                "prior box [{}, {}] is empty",
                self.prior_low, self.prior_high
            ));
        }
        if !(self.proposal_step > 0.0) || !self.proposal_step.is_finite() {
            return bad(format!("proposal_step must be positive, got {}", self.proposal_step));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        if self.thinning == 0 {
            return bad("thinning must be at least 1".into());
        }
        if self.rationality.is_nan() || self.rationality < 0.0 {
            return bad(format!("rationality must be non-negative, got {}", self.rationality));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.prior_low + self.prior_high)
    }
}

/// Equally weighted reward samples with their cached mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBelief")]
pub struct EmpiricalBelief {
    samples: Vec<RewardFunction>,
    mean: RewardFunction,
}

#[derive(Deserialize)]
struct RawBelief {
    samples: Vec<RewardFunction>,
}

impl TryFrom<RawBelief> for EmpiricalBelief {
    type Error = Error;

    fn try_from(raw: RawBelief) -> Result<Self> {
        EmpiricalBelief::new(raw.samples)
    }
}

impl EmpiricalBelief {
    pub fn new(samples: Vec<RewardFunction>) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("belief"))?;
        let n = first.len();
        if samples.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("belief samples differ in length".into()));
        }
        let mut mean = vec![0.0; n];
        for r in &samples {
            for (m, x) in mean.iter_mut().zip(r.values()) {
                *m += x;
            }
        }
        let k = samples.len() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        Ok(Self {
            samples,
            mean: RewardFunction::new(mean),
        })
    }

    /// A belief concentrated on one reward.
    pub fn point_mass(reward: RewardFunction) -> Self {
        Self {
            mean: reward.clone(),
            samples: vec![reward],
        }
    }

    pub fn samples(&self) -> &[RewardFunction] {
        &self.samples
    }

    pub fn mean(&self) -> &RewardFunction {
        &self.mean
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.mean.len()
    }

    /// Every sample multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self::new(self.samples.iter().map(|r| r.scaled(alpha)).collect())
            .expect("non-empty by construction")
    }
}

pub fn posterior_mean(belief: &EmpiricalBelief) -> RewardFunction {
    belief.mean().clone()
}

/// Persisted form of a belief.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub samples: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub config: BirlConfig,
}

impl BeliefSnapshot {
    pub fn new(belief: &EmpiricalBelief, config: &BirlConfig) -> Self {
        Self {
            samples: belief.samples.iter().map(|r| r.values().to_vec()).collect(),
            mean: belief.mean.values().to_vec(),
            config: config.clone(),
        }
    }

    pub fn to_belief(&self) -> Result<EmpiricalBelief> {
        EmpiricalBelief::new(self.samples.iter().cloned().map(RewardFunction::new).collect())
    }
}

/// Demonstrations sharing one environment, reduced to `(state, action)`
/// visit counts.
struct EnvGroup {
    mdp: TabularMdp,
    counts: Vec<(usize, usize, f64)>,
}

fn group_log(log: &ObservationLog) -> Result<Vec<EnvGroup>> {
    let mut envs: Vec<&Transitions> = Vec::new();
    let mut counts: Vec<Vec<f64>> = Vec::new();
    let n_a = log.n_actions;
    for obs in &log.items {
        let g = match envs.iter().position(|e| **e == obs.env) {
            Some(g) => g,
            None => {
                envs.push(&obs.env);
                counts.push(vec![0.0; log.n_states * n_a]);
                envs.len() - 1
            }
        };
        for (s, a) in &obs.trajectory.steps {
            counts[g][s * n_a + a] += 1.0;
        }
    }
    envs.into_iter()
        .zip(counts)
        .map(|(env, c)| {
            let counts = c
                .iter()
                .enumerate()
                .filter(|(_, n)| **n > 0.0)
                .map(|(i, n)| (i / n_a, i % n_a, *n))
                .collect();
            Ok(EnvGroup {
                mdp: log.mdp_for(env)?,
                counts,
            })
        })
        .collect()
}

fn group_log_likelihood(
    group: &EnvGroup,
    q: &crate::mdp::QFunction,
    rationality: f64,
    scratch: &mut [f64],
) -> f64 {
    let mut total = 0.0;
    let mut last_state = usize::MAX;
    for (s, a, n) in &group.counts {
        if *s != last_state {
            log_softmax_into(q.state(*s), rationality, scratch);
            last_state = *s;
        }
        total += n * scratch[*a];
    }
    total
}

/// `Σ_i Σ_{(s,a)∈τ_i} log π_softmax(a | s)` where each softmax policy comes
/// from a fresh optimal solve of `(T_i, reward)`.
pub fn log_likelihood(reward: &RewardFunction, log: &ObservationLog, rationality: f64) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Empty("observation log"));
    }
    if rationality.is_nan() || rationality < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rationality must be non-negative, got {rationality}"
        )));
    }
    let mut scratch = vec![0.0; log.n_actions];
    let mut total = 0.0;
    for group in group_log(log)? {
        let sol = solve_optimal(&group.mdp, reward, None)?;
        total += group_log_likelihood(&group, &sol.q, rationality, &mut scratch);
    }
    Ok(total)
}

/// Log-likelihood evaluator that keeps one warm policy-iteration state per
/// environment, advanced only when a proposal is accepted.
pub struct LikelihoodModel {
    groups: Vec<EnvGroup>,
    solvers: Vec<WarmSolver>,
    rationality: f64,
    scratch: Vec<f64>,
}

/// A scored proposal; pass it back to [`LikelihoodModel::accept`] to move
/// the warm starts to it.
pub struct Scored {
    pub log_likelihood: f64,
    next: Vec<Option<WarmSolver>>,
}

impl LikelihoodModel {
    pub fn new(log: &ObservationLog, rationality: f64) -> Result<Self> {
        let groups = group_log(log)?;
        let solvers = groups
            .iter()
            .map(|g| WarmSolver::new(&g.mdp))
            .collect::<Result<_>>()?;
        Ok(Self {
            groups,
            solvers,
            rationality,
            scratch: vec![0.0; log.n_actions],
        })
    }

    pub fn score(&mut self, reward: &RewardFunction) -> Result<Scored> {
        let mut total = 0.0;
        let mut next = Vec::with_capacity(self.groups.len());
        for (group, solver) in self.groups.iter().zip(&self.solvers) {
            let (sol, moved) = solver.solve(&group.mdp, reward)?;
            total += group_log_likelihood(group, &sol.q, self.rationality, &mut self.scratch);
            next.push(moved);
        }
        Ok(Scored {
            log_likelihood: total,
            next,
        })
    }

    pub fn accept(&mut self, scored: Scored) {
        for (slot, moved) in self.solvers.iter_mut().zip(scored.next) {
            if let Some(m) = moved {
                *slot = m;
            }
        }
    }
}

fn reflect(mut x: f64, low: f64, high: f64) -> f64 {
    loop {
        if x > high {
            x = 2.0 * high - x;
        } else if x < low {
            x = 2.0 * low - x;
        } else {
            return x;
        }
    }
}

/// Metropolis–Hastings posterior sampling (PolicyWalk-style random walk).
///
/// The chain starts at the prior box midpoint. Each step moves one uniformly
/// chosen coordinate by `±proposal_step`, reflected into the box, and accepts
/// with probability `min(1, exp(ΔlogL))`. After `burn_in` steps every
/// `thinning`-th state is kept until `n_samples` are collected.
pub fn sample_posterior(log: &ObservationLog, cfg: &BirlConfig) -> Result<EmpiricalBelief> {
    sample_tempered_posterior(log, cfg, 1.0)
}

/// As [`sample_posterior`] with the log-likelihood multiplied by
/// `likelihood_scale`.
pub fn sample_tempered_posterior(
    log: &ObservationLog,
    cfg: &BirlConfig,
    likelihood_scale: f64,
) -> Result<EmpiricalBelief> {
    cfg.validate()?;
    let n = log.n_states;
    let mut rng = rng::stream(cfg.seed, CHAIN_STREAM);
    let mut model = if log.is_empty() {
        None
    } else {
        Some(LikelihoodModel::new(log, cfg.rationality)?)
    };
    let score = |m: &mut Option<LikelihoodModel>, r: &RewardFunction| -> Result<Option<Scored>> {
        m.as_mut().map(|m| m.score(r)).transpose()
    };

    let mut current = RewardFunction::new(vec![cfg.midpoint(); n]);
    let mut current_ll = match score(&mut model, &current)? {
        Some(s) => {
            let ll = s.log_likelihood;
            if let Some(m) = model.as_mut() {
                m.accept(s);
            }
            ll
        }
        None => 0.0,
    };

    let total = cfg.burn_in + cfg.n_samples * cfg.thinning;
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut proposal = current.clone();
    for step in 1..=total {
        let i = rng.random_range(0..n);
        let delta = if rng.random::<bool>() {
            cfg.proposal_step
        } else {
            -cfg.proposal_step
        };
        let u: f64 = rng.random();
        proposal.values_mut()[i] =
            reflect(current.values()[i] + delta, cfg.prior_low, cfg.prior_high);

        match score(&mut model, &proposal)? {
            Some(s) => {
                let log_ratio = likelihood_scale * (s.log_likelihood - current_ll);
                if u.ln() < log_ratio {
                    current_ll = s.log_likelihood;
                    current.values_mut()[i] = proposal.values()[i];
                    if let Some(m) = model.as_mut() {
                        m.accept(s);
                    }
                } else {
                    proposal.values_mut()[i] = current.values()[i];
                }
            }
            None => current.values_mut()[i] = proposal.values()[i],
        }

        if step > cfg.burn_in && (step - cfg.burn_in) % cfg.thinning == 0 {
            samples.push(current.clone());
        }
    }
    EmpiricalBelief::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Transitions;

    fn two_state() -> TabularMdp {
        // a0 stays, a1 switches.
        let t = Transitions::new(2, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        TabularMdp::new(t, 0.9, vec![1.0, 0.0]).unwrap()
    }

    fn log_with(steps: Vec<(usize, usize)>) -> ObservationLog {
        let mdp = two_state();
        let mut log = ObservationLog::new(&mdp);
        log.record(Trajectory::new(steps).unwrap(), &mdp.transitions)
            .unwrap();
        log
    }

    #[test]
    fn uniform_expert_likelihood() {
        let log = log_with(vec![(0, 0), (0, 1), (1, 0)]);
        let ll = log_likelihood(&vec![0.3, -0.2].into(), &log, 0.0).unwrap();
        assert!((ll - 3.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_log_is_rejected() {
        let log = ObservationLog::new(&two_state());
        assert!(matches!(
            log_likelihood(&vec![0.0, 0.0].into(), &log, 1.0),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn log_rejects_out_of_range_steps() {
        let mdp = two_state();
        let mut log = ObservationLog::new(&mdp);
        assert!(log
            .record(Trajectory::new(vec![(2, 0)]).unwrap(), &mdp.transitions)
            .is_err());
    }

    #[test]
    fn posterior_mean_cases() {
        let b = EmpiricalBelief::new(vec![vec![0.0, 1.0].into(), vec![1.0, 0.0].into()]).unwrap();
        assert_eq!(posterior_mean(&b).values(), &[0.5, 0.5]);
        let single = EmpiricalBelief::new(vec![vec![0.25, -1.0].into()]).unwrap();
        assert_eq!(posterior_mean(&single).values(), &[0.25, -1.0]);
        let v = vec![0.1, 0.7, -0.3];
        let many = EmpiricalBelief::new(vec![RewardFunction::new(v.clone()); 100]).unwrap();
        for (m, x) in posterior_mean(&many).values().iter().zip(&v) {
            assert!((m - x).abs() < 1e-12);
        }
        assert!(EmpiricalBelief::new(vec![]).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = BirlConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            BirlConfig { prior_low: 1.0, prior_high: 1.0, ..ok.clone() },
            BirlConfig { proposal_step: 0.0, ..ok.clone() },
            BirlConfig { n_samples: 0, ..ok.clone() },
            BirlConfig { thinning: 0, ..ok.clone() },
            BirlConfig { rationality: -1.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn reflection_stays_in_box() {
        assert_eq!(reflect(1.2, -1.0, 1.0), 0.8);
        assert_eq!(reflect(-1.5, -1.0, 1.0), -0.5);
        assert_eq!(reflect(5.5, 0.0, 1.0), 0.5);
    }

    #[test]
    fn chain_is_reproducible() {
        let log = log_with(vec![(0, 1), (1, 0), (0, 1)]);
        let cfg = BirlConfig {
            n_samples: 50,
            burn_in: 20,
            seed: 7,
            ..BirlConfig::default()
        };
        let a = sample_posterior(&log, &cfg).unwrap();
        let b = sample_posterior(&log, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn snapshot_round_trip() {
        let b = EmpiricalBelief::new(vec![vec![0.0, 1.0].into(), vec![0.5, 0.5].into()]).unwrap();
        let snap = BeliefSnapshot::new(&b, &BirlConfig::default());
        let json = serde_json::to_string(&snap).unwrap();
        let back: BeliefSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_belief().unwrap(), b);
    }
}
