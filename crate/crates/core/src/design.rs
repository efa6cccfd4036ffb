//! Demonstration-environment selection by maximin Bayesian regret.
//!
//! For a belief `P` and dynamics `T`, the regret of a policy is
//! `BR_P(T, π) = E_{r∼P}[V*_{r,T} − V^π_{r,T}]` (values under the start
//! distribution). Values are linear in the reward, so the minimising policy
//! is the optimal policy of the posterior mean `r̄`. The selectors search for
//! the `T` where even that policy does worst.

use serde::{Deserialize, Serialize};

use crate::belief::EmpiricalBelief;
use crate::error::{Error, Result};
use crate::mdp::{
    expected_return, solve_optimal, Policy, PolicyEvaluator, RewardFunction, TabularMdp,
    Transitions,
};

/// Discount and start distribution shared by every environment in a set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shared {
    pub discount: f64,
    pub initial_dist: Vec<f64>,
}

impl Shared {
    pub fn of(mdp: &TabularMdp) -> Self {
        Self {
            discount: mdp.discount,
            initial_dist: mdp.initial_dist.clone(),
        }
    }

    pub fn mdp(&self, transitions: Transitions) -> Result<TabularMdp> {
        TabularMdp::new(transitions, self.discount, self.initial_dist.clone())
    }
}

/// Per-state menus of transition blocks. Choice `c` at state `s` is an
/// `n_actions × n_states` row-stochastic block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerStateChoices {
    n_states: usize,
    n_actions: usize,
    choices: Vec<Vec<Vec<f64>>>,
}

impl PerStateChoices {
    pub fn new(n_states: usize, n_actions: usize, choices: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if choices.len() != n_states {
            return Err(Error::Dimension(format!(
                "{} choice menus for {n_states} states",
                choices.len()
            )));
        }
        for (s, menu) in choices.iter().enumerate() {
            if menu.is_empty() {
                return Err(Error::InvalidModel(format!("state {s} has no transition choice")));
            }
            for block in menu {
                if block.len() != n_states * n_actions {
                    return Err(Error::Dimension(format!(
                        "choice block at state {s} has length {}",
                        block.len()
                    )));
                }
                crate::mdp::check_block_stochastic(block, n_states)?;
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            choices,
        })
    }

    /// Menus where every state only offers the rows of `t`.
    pub fn fixed(t: &Transitions) -> Self {
        Self {
            n_states: t.n_states(),
            n_actions: t.n_actions(),
            choices: (0..t.n_states()).map(|s| vec![t.block(s).to_vec()]).collect(),
        }
    }

    pub fn menu(&self, s: usize) -> &[Vec<f64>] {
        &self.choices[s]
    }
}

/// Obstacle placement on a fixed base dynamics: each configurable cell is
/// either open or blocked, and any move into a blocked cell leaves the agent
/// where it was.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleFamily {
    base: Transitions,
    cells: Vec<usize>,
    /// States with positive base probability of moving into each cell.
    predecessors: Vec<Vec<usize>>,
    /// Factor index of each state, if it is configurable.
    factor_of: Vec<Option<usize>>,
}

impl ObstacleFamily {
    pub const OPEN: usize = 0;
    pub const BLOCKED: usize = 1;

    pub fn new(base: Transitions, cells: Vec<usize>) -> Result<Self> {
        let n = base.n_states();
        let mut factor_of = vec![None; n];
        for (f, c) in cells.iter().enumerate() {
            if *c >= n {
                return Err(Error::Dimension(format!("configurable cell {c} out of range")));
            }
            if factor_of[*c].replace(f).is_some() {
                return Err(Error::InvalidModel(format!("cell {c} listed twice")));
            }
        }
        let predecessors = cells
            .iter()
            .map(|&c| {
                (0..n)
                    .filter(|&u| {
                        u != c && (0..base.n_actions()).any(|a| base.row(u, a)[c] > 0.0)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            base,
            cells,
            predecessors,
            factor_of,
        })
    }

    pub fn base(&self) -> &Transitions {
        &self.base
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructuredSet {
    PerState(PerStateChoices),
    Obstacles(ObstacleFamily),
}

impl StructuredSet {
    pub fn n_states(&self) -> usize {
        match self {
            StructuredSet::PerState(p) => p.n_states,
            StructuredSet::Obstacles(o) => o.base.n_states(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            StructuredSet::PerState(p) => p.n_actions,
            StructuredSet::Obstacles(o) => o.base.n_actions(),
        }
    }

    /// Number of independent choices (states for per-state menus,
    /// configurable cells for obstacle families).
    pub fn n_factors(&self) -> usize {
        match self {
            StructuredSet::PerState(p) => p.n_states,
            StructuredSet::Obstacles(o) => o.cells.len(),
        }
    }

    pub fn n_choices(&self, factor: usize) -> usize {
        match self {
            StructuredSet::PerState(p) => p.choices[factor].len(),
            StructuredSet::Obstacles(_) => 2,
        }
    }

    /// Factor whose choice is made when the sweep reaches state `s`.
    pub fn factor_at(&self, s: usize) -> Option<usize> {
        match self {
            StructuredSet::PerState(_) => Some(s),
            StructuredSet::Obstacles(o) => o.factor_of[s],
        }
    }

    /// States whose rows depend on `factor`.
    pub fn affected(&self, factor: usize) -> Vec<usize> {
        match self {
            StructuredSet::PerState(_) => vec![factor],
            StructuredSet::Obstacles(o) => o.predecessors[factor].clone(),
        }
    }

    /// Number of environments the set represents, saturating.
    pub fn size(&self) -> u128 {
        (0..self.n_factors()).fold(1u128, |acc, f| acc.saturating_mul(self.n_choices(f) as u128))
    }

    pub fn default_assignment(&self) -> Vec<usize> {
        vec![0; self.n_factors()]
    }

    pub fn check_assignment(&self, assignment: &[usize]) -> Result<()> {
        if assignment.len() != self.n_factors()
            || assignment
                .iter()
                .enumerate()
                .any(|(f, c)| *c >= self.n_choices(f))
        {
            return Err(Error::Dimension("assignment does not match the set".into()));
        }
        Ok(())
    }

    /// Rows of state `u` under `assignment`, written to `out`
    /// (`n_actions × n_states`).
    pub fn fill_block(&self, u: usize, assignment: &[usize], out: &mut [f64]) {
        match self {
            StructuredSet::PerState(p) => out.copy_from_slice(&p.choices[u][assignment[u]]),
            StructuredSet::Obstacles(o) => {
                let n = o.base.n_states();
                out.copy_from_slice(o.base.block(u));
                for (f, &c) in o.cells.iter().enumerate() {
                    if assignment[f] != ObstacleFamily::BLOCKED || c == u {
                        continue;
                    }
                    for row in out.chunks_mut(n) {
                        let bounced = row[c];
                        if bounced > 0.0 {
                            row[c] = 0.0;
                            row[u] += bounced;
                        }
                    }
                }
            }
        }
    }

    pub fn assemble(&self, assignment: &[usize]) -> Result<Transitions> {
        self.check_assignment(assignment)?;
        let (n, m) = (self.n_states(), self.n_actions());
        let mut probs = vec![0.0; n * m * n];
        for (u, block) in probs.chunks_mut(m * n).enumerate() {
            self.fill_block(u, assignment, block);
        }
        Transitions::new(n, m, probs)
    }

    /// Every assignment in lexicographic order (last factor fastest).
    pub fn assignments(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let sizes: Vec<usize> = (0..self.n_factors()).map(|f| self.n_choices(f)).collect();
        let mut next = Some(vec![0; sizes.len()]);
        std::iter::from_fn(move || {
            let out = next.take()?;
            let mut succ = out.clone();
            for f in (0..sizes.len()).rev() {
                succ[f] += 1;
                if succ[f] < sizes[f] {
                    next = Some(succ);
                    break;
                }
                succ[f] = 0;
            }
            Some(out)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSet {
    Enumerated { envs: Vec<Transitions> },
    Structured(StructuredSet),
}

/// Which member of a set was selected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChosenEnv {
    ChosenEnvIndex(usize),
    ChosenChoices(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegretReport {
    pub chosen: ChosenEnv,
    pub env: Transitions,
    pub regret: f64,
    /// Loss of the regret-minimising policy under each belief sample.
    pub per_sample_losses: Vec<f64>,
    /// False when extended value iteration hit its sweep limit.
    pub converged: bool,
}

/// Serializable part of a [`RegretReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    #[serde(flatten)]
    pub chosen: ChosenEnv,
    pub regret: f64,
    pub per_sample_losses: Vec<f64>,
    pub converged: bool,
}

impl RegretReport {
    pub fn record(&self) -> RegretRecord {
        RegretRecord {
            chosen: self.chosen.clone(),
            regret: self.regret,
            per_sample_losses: self.per_sample_losses.clone(),
            converged: self.converged,
        }
    }
}

/// `ℓ_R(T, π) = V*_{R,T} − V^π_{R,T}` under the start distribution.
pub fn loss(mdp: &TabularMdp, reward: &RewardFunction, policy: &Policy) -> Result<f64> {
    let opt = solve_optimal(mdp, reward, None)?;
    let v_pi = PolicyEvaluator::new(mdp, policy)?.evaluate(reward)?;
    Ok(expected_return(&opt.value, &mdp.initial_dist)? - expected_return(&v_pi, &mdp.initial_dist)?)
}

/// Optimal policy for the posterior mean; minimises Bayesian regret over
/// all policies.
pub fn min_regret_policy(belief: &EmpiricalBelief, mdp: &TabularMdp) -> Result<Policy> {
    Ok(solve_optimal(mdp, belief.mean(), None)?.deterministic_policy())
}

/// Per-sample losses of `policy` and their mean.
pub fn bayesian_regret(
    belief: &EmpiricalBelief,
    mdp: &TabularMdp,
    policy: &Policy,
) -> Result<(f64, Vec<f64>)> {
    if belief.n_states() != mdp.n_states() {
        return Err(Error::Dimension(format!(
            "belief over {} states, MDP has {}",
            belief.n_states(),
            mdp.n_states()
        )));
    }
    let evaluator = PolicyEvaluator::new(mdp, policy)?;
    let warm = match policy {
        Policy::Deterministic(a) => Some(a.as_slice()),
        Policy::Stochastic { .. } => None,
    };
    let omega = &mdp.initial_dist;
    let losses = belief
        .samples()
        .iter()
        .map(|r| {
            let opt = solve_optimal(mdp, r, warm)?;
            let v_pi = evaluator.evaluate(r)?;
            Ok(expected_return(&opt.value, omega)? - expected_return(&v_pi, omega)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok((mean, losses))
}

/// `min_π BR_P(T, π)`, attained by [`min_regret_policy`].
pub fn min_bayesian_regret(belief: &EmpiricalBelief, mdp: &TabularMdp) -> Result<(f64, Vec<f64>)> {
    let policy = min_regret_policy(belief, mdp)?;
    bayesian_regret(belief, mdp, &policy)
}

/// Scores every environment and returns the one with maximal minimum
/// regret; ties go to the lowest index.
pub fn select_env_enumerated(
    belief: &EmpiricalBelief,
    envs: &[Transitions],
    shared: &Shared,
) -> Result<RegretReport> {
    if envs.is_empty() {
        return Err(Error::Empty("environment set"));
    }
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    for (i, t) in envs.iter().enumerate() {
        let mdp = shared.mdp(t.clone())?;
        let (regret, losses) = min_bayesian_regret(belief, &mdp)?;
        if best.as_ref().is_none_or(|(_, b, _)| regret > *b) {
            best = Some((i, regret, losses));
        }
    }
    let (i, regret, per_sample_losses) = best.expect("non-empty set");
    Ok(RegretReport {
        chosen: ChosenEnv::ChosenEnvIndex(i),
        env: envs[i].clone(),
        regret,
        per_sample_losses,
        converged: true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtendedViOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Passes of exact single-factor improvement applied to the result of
    /// extended value iteration. Zero runs the plain algorithm.
    pub flip_passes: usize,
}

impl Default for ExtendedViOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 2_000,
            flip_passes: 0,
        }
    }
}

/// Sparse copy of one state's rows.
type SparseBlock = Vec<Vec<(usize, f64)>>;

fn sparsify(block: &[f64], n_states: usize) -> SparseBlock {
    block
        .chunks(n_states)
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, p)| **p != 0.0)
                .map(|(j, p)| (j, *p))
                .collect()
        })
        .collect()
}

#[inline]
fn dot(row: &[(usize, f64)], v: &[f64]) -> f64 {
    row.iter().map(|(j, p)| p * v[*j]).sum()
}

#[inline]
fn max_action_value(block: &SparseBlock, v: &[f64]) -> f64 {
    block.iter().map(|row| dot(row, v)).fold(f64::NEG_INFINITY, f64::max)
}

/// Value functions tracked by extended value iteration: one per belief
/// sample plus one for the mean.
struct TrackedValues<'a> {
    rewards: Vec<&'a [f64]>,
    mean: &'a [f64],
    values: Vec<Vec<f64>>,
    mean_values: Vec<f64>,
    discount: f64,
}

impl TrackedValues<'_> {
    /// `E_r[max_a T_aᵀ V_r] − max_b T_bᵀ V_r̄` for one state's rows.
    fn local_gap(&self, block: &SparseBlock) -> f64 {
        let k = self.values.len() as f64;
        let expected: f64 = self
            .values
            .iter()
            .map(|v| max_action_value(block, v))
            .sum::<f64>()
            / k;
        expected - max_action_value(block, &self.mean_values)
    }

    /// Bellman backup of every tracked value at `s`; returns the largest
    /// change.
    fn backup(&mut self, s: usize, block: &SparseBlock) -> f64 {
        let mut change = 0.0f64;
        for (r, v) in self.rewards.iter().zip(self.values.iter_mut()) {
            let new = r[s] + self.discount * max_action_value(block, v);
            change = change.max((new - v[s]).abs());
            v[s] = new;
        }
        let new = self.mean[s] + self.discount * max_action_value(block, &self.mean_values);
        change = change.max((new - self.mean_values[s]).abs());
        self.mean_values[s] = new;
        change
    }
}

/// Extended value iteration over a structured environment set.
///
/// Sweeps states in order. At a state that anchors a choice, picks the option
/// maximising the summed local gap `E_r[max_a T_aᵀ V_r] − max_b T_bᵀ V_r̄`
/// over the states whose rows the choice controls, then backs up every
/// tracked value function at those states and at the anchor. Stops when a
/// full sweep moves no value by `tol` or more. The assembled environment is
/// then re-scored exactly and, if `opts.flip_passes > 0`, refined by exact
/// single-factor changes.
pub fn select_env_structured(
    belief: &EmpiricalBelief,
    set: &StructuredSet,
    shared: &Shared,
    opts: ExtendedViOptions,
) -> Result<RegretReport> {
    let report = extended_value_iteration(belief, set, shared, opts)?;
    improve_by_flips(belief, set, shared, report, opts.flip_passes)
}

/// First-improvement local search over single-factor changes, each scored
/// exactly.
fn improve_by_flips(
    belief: &EmpiricalBelief,
    set: &StructuredSet,
    shared: &Shared,
    mut best: RegretReport,
    passes: usize,
) -> Result<RegretReport> {
    let converged = best.converged;
    for _ in 0..passes {
        let mut improved = false;
        for f in 0..set.n_factors() {
            for c in 0..set.n_choices(f) {
                let ChosenEnv::ChosenChoices(current) = &best.chosen else {
                    unreachable!("structured reports carry choices")
                };
                if current[f] == c {
                    continue;
                }
                let mut candidate = current.clone();
                candidate[f] = c;
                let report = score_assignment(belief, set, shared, candidate, converged)?;
                if report.regret > best.regret + 1e-12 * (1.0 + best.regret.abs()) {
                    best = report;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best)
}

fn extended_value_iteration(
    belief: &EmpiricalBelief,
    set: &StructuredSet,
    shared: &Shared,
    opts: ExtendedViOptions,
) -> Result<RegretReport> {
    let (n, m) = (set.n_states(), set.n_actions());
    if belief.n_states() != n {
        return Err(Error::Dimension(format!(
            "belief over {} states, set has {n}",
            belief.n_states()
        )));
    }
    let mut assignment = set.default_assignment();
    let mut scratch = vec![0.0; m * n];
    let mut blocks: Vec<SparseBlock> = (0..n)
        .map(|u| {
            set.fill_block(u, &assignment, &mut scratch);
            sparsify(&scratch, n)
        })
        .collect();
    let mut tracked = TrackedValues {
        rewards: belief.samples().iter().map(|r| r.values()).collect(),
        mean: belief.mean().values(),
        values: vec![vec![0.0; n]; belief.len()],
        mean_values: vec![0.0; n],
        discount: shared.discount,
    };

    let mut converged = false;
    let mut recent: Vec<Vec<usize>> = Vec::new();
    for _ in 0..opts.max_sweeps {
        let mut change = 0.0f64;
        for s in 0..n {
            let mut backed_up_anchor = false;
            if let Some(f) = set.factor_at(s) {
                let affected = set.affected(f);
                if set.n_choices(f) > 1 {
                    let mut best = (f64::NEG_INFINITY, assignment[f]);
                    let mut candidate = assignment.clone();
                    for c in 0..set.n_choices(f) {
                        candidate[f] = c;
                        let gap: f64 = affected
                            .iter()
                            .map(|&u| {
                                set.fill_block(u, &candidate, &mut scratch);
                                tracked.local_gap(&sparsify(&scratch, n))
                            })
                            .sum();
                        if gap > best.0 {
                            best = (gap, c);
                        }
                    }
                    if best.1 != assignment[f] {
                        assignment[f] = best.1;
                        for &u in &affected {
                            set.fill_block(u, &assignment, &mut scratch);
                            blocks[u] = sparsify(&scratch, n);
                        }
                    }
                }
                for &u in &affected {
                    change = change.max(tracked.backup(u, &blocks[u]));
                    backed_up_anchor |= u == s;
                }
            }
            if !backed_up_anchor {
                change = change.max(tracked.backup(s, &blocks[s]));
            }
        }
        if change < opts.tol {
            converged = true;
            break;
        }
        if !recent.contains(&assignment) {
            recent.push(assignment.clone());
            if recent.len() > 8 {
                recent.remove(0);
            }
        }
    }

    if converged {
        return score_assignment(belief, set, shared, assignment, true);
    }
    // Choices kept oscillating: fall back to the best recently visited
    // assignment under the exact score.
    if !recent.contains(&assignment) {
        recent.push(assignment);
    }
    let mut best: Option<RegretReport> = None;
    for a in recent {
        let report = score_assignment(belief, set, shared, a, false)?;
        if best.as_ref().is_none_or(|b| report.regret > b.regret) {
            best = Some(report);
        }
    }
    Ok(best.expect("at least one assignment"))
}

fn score_assignment(
    belief: &EmpiricalBelief,
    set: &StructuredSet,
    shared: &Shared,
    assignment: Vec<usize>,
    converged: bool,
) -> Result<RegretReport> {
    let env = set.assemble(&assignment)?;
    let mdp = shared.mdp(env)?;
    let (regret, per_sample_losses) = min_bayesian_regret(belief, &mdp)?;
    Ok(RegretReport {
        chosen: ChosenEnv::ChosenChoices(assignment),
        env: mdp.transitions,
        regret,
        per_sample_losses,
        converged,
    })
}

/// Dispatches to the selector matching the set's representation.
pub fn select_env(
    belief: &EmpiricalBelief,
    set: &EnvironmentSet,
    shared: &Shared,
    opts: ExtendedViOptions,
) -> Result<RegretReport> {
    match set {
        EnvironmentSet::Enumerated { envs } => select_env_enumerated(belief, envs, shared),
        EnvironmentSet::Structured(s) => select_env_structured(belief, s, shared, opts),
    }
}

/// `max_T min_π BR_P(T, π)` as found by the applicable selector.
pub fn maximin_regret_value(
    belief: &EmpiricalBelief,
    set: &EnvironmentSet,
    shared: &Shared,
) -> Result<f64> {
    Ok(select_env(belief, set, shared, ExtendedViOptions::default())?.regret)
}
