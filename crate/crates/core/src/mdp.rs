//! Tabular MDPs with state-only rewards and the exact dynamic-programming
//! routines everything else is built on.
//!
//! Transition tensors are stored densely, indexed `(state, action, next)`.
//! Rewards are per state, so `Q(s, a) = r(s) + γ Σ_s' T(s' | s, a) V(s')`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums and distribution sums must match 1 to this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

/// Dense transition tensor `T(next | state, action)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransitions")]
pub struct Transitions {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTransitions {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawTransitions> for Transitions {
    type Error = Error;

    fn try_from(raw: RawTransitions) -> Result<Self> {
        Transitions::new(raw.n_states, raw.n_actions, raw.probs)
    }
}

impl Transitions {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel(
                "need at least one state and one action".into(),
            ));
        }
        if probs.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition tensor has {} entries, expected {}",
                probs.len(),
                n_states * n_actions * n_states
            )));
        }
        let t = Self {
            n_states,
            n_actions,
            probs,
        };
        t.validate()?;
        Ok(t)
    }

    /// Builds a tensor from a closure returning each `(state, action)` row.
    pub fn from_rows(
        n_states: usize,
        n_actions: usize,
        mut row: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(n_states * n_actions * n_states);
        for s in 0..n_states {
            for a in 0..n_actions {
                let r = row(s, a);
                if r.len() != n_states {
                    return Err(Error::Dimension(format!(
                        "row ({s}, {a}) has length {}, expected {n_states}",
                        r.len()
                    )));
                }
                probs.extend_from_slice(&r);
            }
        }
        Self::new(n_states, n_actions, probs)
    }

    /// Every action in every state stays put.
    pub fn identity(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::from_rows(n_states, n_actions, |s, _| {
            let mut r = vec![0.0; n_states];
            r[s] = 1.0;
            r
        })
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.row(s, a);
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "row ({s}, {a}) has a negative or non-finite entry"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidModel(format!(
                        "row ({s}, {a}) sums to {sum}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    /// All rows of state `s`, `n_actions × n_states`, action-major.
    #[inline]
    pub fn block(&self, s: usize) -> &[f64] {
        let len = self.n_actions * self.n_states;
        &self.probs[s * len..(s + 1) * len]
    }

    /// Replaces the rows of state `s`. The block must be row-stochastic.
    pub fn set_block(&mut self, s: usize, block: &[f64]) -> Result<()> {
        let len = self.n_actions * self.n_states;
        if block.len() != len {
            return Err(Error::Dimension(format!(
                "state block has length {}, expected {len}",
                block.len()
            )));
        }
        check_block_stochastic(block, self.n_states)?;
        self.probs[s * len..(s + 1) * len].copy_from_slice(block);
        Ok(())
    }

    /// True when every action self-loops with probability one.
    pub fn is_absorbing(&self, s: usize) -> bool {
        (0..self.n_actions).all(|a| self.row(s, a)[s] >= 1.0 - 1e-12)
    }

    /// `max_{s,a} ‖T(·|s,a) − other(·|s,a)‖₁`.
    pub fn max_row_l1_distance(&self, other: &Transitions) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut worst = 0.0f64;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                worst = worst.max(l1_distance(self.row(s, a), other.row(s, a)));
            }
        }
        Ok(worst)
    }

    pub fn check_same_shape(&self, other: &Transitions) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::Dimension(format!(
                "transition shapes differ: {}x{} vs {}x{}",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_block_stochastic(block: &[f64], n_states: usize) -> Result<()> {
    for (a, row) in block.chunks(n_states).enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidModel(format!(
                "state block row for action {a} is not a distribution (sum {sum})"
            )));
        }
    }
    Ok(())
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn check_distribution(dist: &[f64], what: &str) -> Result<()> {
    let sum: f64 = dist.iter().sum();
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!(
            "{what} is not a probability vector (sum {sum})"
        )));
    }
    Ok(())
}

/// An MDP without its reward: transitions, discount and start distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub transitions: Transitions,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
}

impl TabularMdp {
    pub fn new(transitions: Transitions, discount: f64, initial_dist: Vec<f64>) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        if initial_dist.len() != transitions.n_states() {
            return Err(Error::Dimension(format!(
                "initial distribution has length {}, expected {}",
                initial_dist.len(),
                transitions.n_states()
            )));
        }
        check_distribution(&initial_dist, "initial distribution")?;
        Ok(Self {
            transitions,
            discount,
            initial_dist,
        })
    }

    pub fn n_states(&self) -> usize {
        self.transitions.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.n_actions()
    }

    /// Same discount and start distribution, different dynamics.
    pub fn with_transitions(&self, transitions: Transitions) -> Result<Self> {
        self.transitions.check_same_shape(&transitions)?;
        Ok(Self {
            transitions,
            discount: self.discount,
            initial_dist: self.initial_dist.clone(),
        })
    }

    fn check_reward(&self, reward: &RewardFunction) -> Result<()> {
        if reward.len() != self.n_states() {
            return Err(Error::Dimension(format!(
                "reward has length {}, expected {}",
                reward.len(),
                self.n_states()
            )));
        }
        if reward.values().iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("reward has non-finite entries".into()));
        }
        Ok(())
    }

    #[inline]
    fn q_value(&self, reward: &[f64], v: &[f64], s: usize, a: usize) -> f64 {
        let row = self.transitions.row(s, a);
        let ev: f64 = row.iter().zip(v).map(|(p, x)| p * x).sum();
        reward[s] + self.discount * ev
    }
}

/// Per-state reward vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardFunction(Vec<f64>);

impl RewardFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n_states: usize) -> Self {
        Self(vec![0.0; n_states])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|r| alpha * r).collect())
    }
}

impl From<Vec<f64>> for RewardFunction {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Action values, state-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QFunction {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QFunction {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "Q table has {} entries, expected {}",
                values.len(),
                n_states * n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn state(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    /// Greedy policy, ties to the lowest action index.
    pub fn greedy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| argmax(self.state(s))).collect()
    }
}

/// Index of the first maximal entry.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Deterministic(Vec<usize>),
    Stochastic { n_actions: usize, probs: Vec<f64> },
}

impl Policy {
    pub fn n_states(&self) -> usize {
        match self {
            Policy::Deterministic(actions) => actions.len(),
            Policy::Stochastic { n_actions, probs } => probs.len() / n_actions,
        }
    }

    /// Probability of `a` in `s`.
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        match self {
            Policy::Deterministic(actions) => f64::from(u8::from(actions[s] == a)),
            Policy::Stochastic { n_actions, probs } => probs[s * n_actions + a],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        match self {
            Policy::Deterministic(actions) => actions[s],
            Policy::Stochastic { n_actions, probs } => {
                sample_index(&probs[s * n_actions..(s + 1) * n_actions], rng)
            }
        }
    }

    fn check_dims(&self, mdp: &TabularMdp) -> Result<()> {
        let ok = match self {
            Policy::Deterministic(actions) => {
                actions.len() == mdp.n_states() && actions.iter().all(|a| *a < mdp.n_actions())
            }
            Policy::Stochastic { n_actions, probs } => {
                *n_actions == mdp.n_actions() && probs.len() == mdp.n_states() * n_actions
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "policy does not match a {}-state, {}-action MDP",
                mdp.n_states(),
                mdp.n_actions()
            )))
        }
    }
}

/// Draws an index from a probability vector. Falls back to the last
/// positive entry when rounding leaves the cumulative sum short of `u`.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn new(steps: Vec<(usize, usize)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Empty("trajectory"));
        }
        Ok(Self { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn check_dims(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Empty("trajectory"));
        }
        if let Some((s, a)) = self
            .steps
            .iter()
            .find(|(s, a)| *s >= n_states || *a >= n_actions)
        {
            return Err(Error::Dimension(format!(
                "trajectory step ({s}, {a}) outside a {n_states}-state, {n_actions}-action MDP"
            )));
        }
        Ok(())
    }
}

/// Output of an optimal solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub value: ValueFunction,
    pub q: QFunction,
    /// Greedy with respect to `q`, ties to the lowest action index.
    pub policy: Vec<usize>,
}

impl Solution {
    pub fn deterministic_policy(&self) -> Policy {
        Policy::Deterministic(self.policy.clone())
    }
}

/// One application of the Bellman optimality operator.
/// Returns `(B v, Q)` where `Q` is computed from `v`.
pub fn bellman_backup(
    mdp: &TabularMdp,
    reward: &RewardFunction,
    v: &[f64],
) -> Result<(Vec<f64>, QFunction)> {
    mdp.check_reward(reward)?;
    if v.len() != mdp.n_states() {
        return Err(Error::Dimension("value vector length".into()));
    }
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let r = reward.values();
    let mut q = vec![0.0; n_s * n_a];
    let mut next = vec![0.0; n_s];
    for s in 0..n_s {
        let mut best = f64::NEG_INFINITY;
        for a in 0..n_a {
            let qa = mdp.q_value(r, v, s, a);
            q[s * n_a + a] = qa;
            best = best.max(qa);
        }
        next[s] = best;
    }
    Ok((next, QFunction::new(n_s, n_a, q)?))
}

/// Bellman optimality solve by repeated backups from `V = 0`.
///
/// Stops once `‖V_{k+1} − V_k‖∞ ≤ (1 − γ)·tol`, so the returned iterate is
/// within `γ·tol` of `V*` and its Bellman residual is below `tol`. `Q` is the
/// last backup's action values, so `max_a Q(s, a) = V(s)` exactly.
pub fn value_iteration(
    mdp: &TabularMdp,
    reward: &RewardFunction,
    opts: SolverOptions,
) -> Result<Solution> {
    if opts.tol <= 0.0 || opts.tol.is_nan() {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {}", opts.tol)));
    }
    let stop = opts.tol * (1.0 - mdp.discount);
    let mut v = vec![0.0; mdp.n_states()];
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let (next, q) = bellman_backup(mdp, reward, &v)?;
        residual = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual <= stop {
            let policy = q.greedy();
            return Ok(Solution {
                value: ValueFunction(v),
                q,
                policy,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

/// Transition matrix of the Markov chain induced by `policy`.
fn induced_chain(mdp: &TabularMdp, prob: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let w = prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (s2, t) in mdp.transitions.row(s, a).iter().enumerate() {
                p[(s, s2)] += w * t;
            }
        }
    }
    p
}

/// Exact policy evaluation for a fixed policy, reusable across rewards.
///
/// Factorises `I − γ P_π` once; each [`PolicyEvaluator::evaluate`] is then a
/// pair of triangular solves.
pub struct PolicyEvaluator {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n_states: usize,
}

impl PolicyEvaluator {
    pub fn new(mdp: &TabularMdp, policy: &Policy) -> Result<Self> {
        policy.check_dims(mdp)?;
        Ok(Self::factor(mdp, induced_chain(mdp, |s, a| policy.prob(s, a))))
    }

    /// Same as [`PolicyEvaluator::new`] for a deterministic action table.
    pub fn deterministic(mdp: &TabularMdp, actions: &[usize]) -> Result<Self> {
        if actions.len() != mdp.n_states() || actions.iter().any(|a| *a >= mdp.n_actions()) {
            return Err(Error::Dimension("deterministic policy does not match MDP".into()));
        }
        Ok(Self::factor(
            mdp,
            induced_chain(mdp, |s, a| f64::from(u8::from(actions[s] == a))),
        ))
    }

    fn factor(mdp: &TabularMdp, chain: DMatrix<f64>) -> Self {
        let n = mdp.n_states();
        let a = DMatrix::identity(n, n) - chain * mdp.discount;
        Self {
            lu: a.lu(),
            n_states: n,
        }
    }

    pub fn evaluate(&self, reward: &RewardFunction) -> Result<ValueFunction> {
        if reward.len() != self.n_states {
            return Err(Error::Dimension(format!(
                "reward has length {}, expected {}",
                reward.len(),
                self.n_states
            )));
        }
        let b = DVector::from_column_slice(reward.values());
        let x = self.lu.solve(&b).ok_or(Error::Singular)?;
        Ok(ValueFunction(x.as_slice().to_vec()))
    }
}

/// `V^π` for a deterministic or stochastic policy, by a direct linear solve.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    reward: &RewardFunction,
    policy: &Policy,
) -> Result<ValueFunction> {
    mdp.check_reward(reward)?;
    PolicyEvaluator::new(mdp, policy)?.evaluate(reward)
}

/// Optimal solve by policy iteration with exact evaluation.
///
/// Accurate to linear-solve precision regardless of the starting policy,
/// which makes `warm_start` a pure speedup: callers that re-solve after a
/// small reward change pass the previous greedy policy.
pub fn solve_optimal(
    mdp: &TabularMdp,
    reward: &RewardFunction,
    warm_start: Option<&[usize]>,
) -> Result<Solution> {
    mdp.check_reward(reward)?;
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let start = match warm_start {
        Some(p) if p.len() == n_s && p.iter().all(|a| *a < n_a) => p.to_vec(),
        _ => vec![0; n_s],
    };
    Ok(policy_iteration(mdp, reward, start, None)?.solution)
}

struct PiOutcome {
    solution: Solution,
    /// The iteration's own policy; may differ from `solution.policy` at ties.
    policy: Vec<usize>,
    /// Factorisation for `policy`, when it is not the one passed in.
    evaluator: Option<PolicyEvaluator>,
}

fn policy_iteration(
    mdp: &TabularMdp,
    reward: &RewardFunction,
    mut policy: Vec<usize>,
    cached: Option<&PolicyEvaluator>,
) -> Result<PiOutcome> {
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let r = reward.values();
    let max_rounds = 10 * n_s * n_a + 100;
    let mut owned = match cached {
        Some(_) => None,
        None => Some(PolicyEvaluator::deterministic(mdp, &policy)?),
    };
    let mut q = vec![0.0; n_s * n_a];
    for _ in 0..max_rounds {
        let evaluator = owned.as_ref().or(cached).expect("an evaluator is always set");
        let v = evaluator.evaluate(reward)?.into_inner();
        let mut changed = false;
        for s in 0..n_s {
            for a in 0..n_a {
                q[s * n_a + a] = mdp.q_value(r, &v, s, a);
            }
            let qs = &q[s * n_a..(s + 1) * n_a];
            let cur = qs[policy[s]];
            let best = argmax(qs);
            // Strict improvement with a relative margin so rounding noise
            // cannot make the iteration cycle.
            if qs[best] > cur + 1e-12 * (1.0 + cur.abs()) {
                policy[s] = best;
                changed = true;
            }
        }
        if !changed {
            let q = QFunction::new(n_s, n_a, q)?;
            let value = (0..n_s)
                .map(|s| q.state(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let greedy = q.greedy();
            return Ok(PiOutcome {
                solution: Solution {
                    value: ValueFunction(value),
                    q,
                    policy: greedy,
                },
                policy,
                evaluator: owned,
            });
        }
        owned = Some(PolicyEvaluator::deterministic(mdp, &policy)?);
    }
    Err(Error::PolicyIterationStalled(max_rounds))
}

/// Policy-iteration state carried between solves of one set of dynamics.
///
/// Re-solving after a small reward change usually keeps the same optimal
/// policy, in which case [`WarmSolver::solve`] costs one pair of triangular
/// solves instead of a fresh factorisation.
pub struct WarmSolver {
    policy: Vec<usize>,
    evaluator: PolicyEvaluator,
}

impl WarmSolver {
    pub fn new(mdp: &TabularMdp) -> Result<Self> {
        let policy = vec![0; mdp.n_states()];
        let evaluator = PolicyEvaluator::deterministic(mdp, &policy)?;
        Ok(Self { policy, evaluator })
    }

    /// Solves `(mdp, reward)` starting from the stored policy. Returns the
    /// solution and, when the optimal policy moved, the state to continue
    /// from; the caller decides whether to keep it.
    pub fn solve(
        &self,
        mdp: &TabularMdp,
        reward: &RewardFunction,
    ) -> Result<(Solution, Option<WarmSolver>)> {
        mdp.check_reward(reward)?;
        let out = policy_iteration(mdp, reward, self.policy.clone(), Some(&self.evaluator))?;
        let next = out.evaluator.map(|evaluator| WarmSolver {
            policy: out.policy,
            evaluator,
        });
        Ok((out.solution, next))
    }
}

/// `Σ_s v(s) · dist(s)`.
pub fn expected_return(v: &ValueFunction, initial_dist: &[f64]) -> Result<f64> {
    if v.0.len() != initial_dist.len() {
        return Err(Error::Dimension(format!(
            "value has length {}, distribution has length {}",
            v.0.len(),
            initial_dist.len()
        )));
    }
    Ok(v.0.iter().zip(initial_dist).map(|(a, b)| a * b).sum())
}

/// Softmax policy `π(a|s) ∝ exp(c·Q(s,a))`.
///
/// `c = ∞` is accepted as a sentinel for the greedy policy with
/// lowest-index tie breaking.
pub fn boltzmann_policy(q: &QFunction, rationality: f64) -> Result<Policy> {
    if rationality.is_nan() || rationality < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rationality must be non-negative, got {rationality}"
        )));
    }
    let (n_s, n_a) = (q.n_states(), q.n_actions());
    let mut probs = vec![0.0; n_s * n_a];
    for s in 0..n_s {
        let row = &mut probs[s * n_a..(s + 1) * n_a];
        if rationality.is_infinite() {
            row[argmax(q.state(s))] = 1.0;
        } else {
            softmax_into(q.state(s), rationality, row);
        }
    }
    Ok(Policy::Stochastic {
        n_actions: n_a,
        probs,
    })
}

fn softmax_into(q: &[f64], c: f64, out: &mut [f64]) {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, x) in out.iter_mut().zip(q) {
        *o = (c * (x - max)).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// `log π(·|s)` of the softmax policy, written into `out`.
pub(crate) fn log_softmax_into(q: &[f64], c: f64, out: &mut [f64]) {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = q.iter().map(|x| (c * (x - max)).exp()).sum();
    let log_z = z.ln();
    for (o, x) in out.iter_mut().zip(q) {
        *o = c * (x - max) - log_z;
    }
}

/// Rolls out `policy` from a start state drawn from the initial distribution.
///
/// The first step is always recorded. The rollout ends after `horizon`
/// steps or as soon as the next state is absorbing; the absorbing state
/// itself is not recorded since every action there is equivalent.
pub fn sample_trajectory<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    policy.check_dims(mdp)?;
    let mut s = sample_index(&mdp.initial_dist, rng);
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let a = policy.sample(s, rng);
        steps.push((s, a));
        let next = sample_index(mdp.transitions.row(s, a), rng);
        if mdp.transitions.is_absorbing(next) {
            break;
        }
        s = next;
    }
    Ok(Trajectory { steps })
}
