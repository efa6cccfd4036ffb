//! Random tabular MDPs and bounded perturbations of their dynamics.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{PerStateChoices, StructuredSet};
use crate::error::{Error, Result};
use crate::mdp::{l1_distance, RewardFunction, TabularMdp, Transitions};
use crate::rng;

const BASE_STREAM: u64 = 0x1D;
const DEMO_STREAM: u64 = 0xDE;
const TEST_STREAM: u64 = 0x7E;

const MAX_PERTURBATION_TRIES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub dirichlet_alpha: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub discount: f64,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        Self {
            n_states: 20,
            n_actions: 4,
            dirichlet_alpha: 0.5,
            beta_a: 1.0,
            beta_b: 1.0,
            discount: 0.9,
        }
    }
}

/// Samples a base MDP: every `(s, a)` row from a symmetric Dirichlet,
/// every reward entry from a Beta distribution, uniform start distribution.
pub fn random_mdp(spec: &RandomMdpSpec, seed: u64) -> Result<(TabularMdp, RewardFunction)> {
    if spec.n_states < 2 || spec.n_actions < 2 {
        return Err(Error::InvalidArgument(format!(
            "random MDP needs at least 2 states and 2 actions, got {}x{}",
            spec.n_states, spec.n_actions
        )));
    }
    let shape = |x: f64, name: &str| {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{name} must be positive, got {x}")))
        }
    };
    shape(spec.dirichlet_alpha, "dirichlet_alpha")?;
    shape(spec.beta_a, "beta_a")?;
    shape(spec.beta_b, "beta_b")?;

    let mut rng = rng::stream(seed, BASE_STREAM);
    let gamma = Gamma::new(spec.dirichlet_alpha, 1.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n = spec.n_states;
    let transitions = Transitions::from_rows(n, spec.n_actions, |_, _| {
        dirichlet_row(&gamma, n, &mut rng)
    })?;
    let beta = Beta::new(spec.beta_a, spec.beta_b).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let reward: Vec<f64> = (0..n).map(|_| beta.sample(&mut rng)).collect();
    let mdp = TabularMdp::new(transitions, spec.discount, vec![1.0 / n as f64; n])?;
    Ok((mdp, reward.into()))
}

/// Normalised Gamma draws. For tiny concentrations every draw can
/// underflow to zero; that row is redrawn as a one-hot at a uniform index.
fn dirichlet_row<R: Rng + ?Sized>(gamma: &Gamma<f64>, n: usize, rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        row.iter_mut().for_each(|x| *x /= sum);
    } else {
        row = vec![0.0; n];
        row[rng.random_range(0..n)] = 1.0;
    }
    row
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    /// ℓ1 budget per `(s, a)` row.
    pub rho: f64,
    pub choices_per_state: usize,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            rho: 0.5,
            choices_per_state: 5,
            seed: 0,
        }
    }
}

/// A random distribution within ℓ1 distance `rho` of `base`.
///
/// Draws a zero-sum Gaussian direction, scales it to ℓ1 norm `u·rho` with
/// `u ~ U(0, 1)`, adds it to the base row, clips negatives and renormalises.
/// Candidates that end up farther than `rho` are redrawn; after repeated
/// failures the base row itself is returned.
pub fn perturb_row<R: Rng + ?Sized>(base: &[f64], rho: f64, rng: &mut R) -> Vec<f64> {
    if rho <= 0.0 {
        return base.to_vec();
    }
    let n = base.len() as f64;
    for _ in 0..MAX_PERTURBATION_TRIES {
        let g: Vec<f64> = base.iter().map(|_| rng.sample(StandardNormal)).collect();
        let mean = g.iter().sum::<f64>() / n;
        let norm: f64 = g.iter().map(|x| (x - mean).abs()).sum();
        let radius = rho * rng.random::<f64>();
        if norm == 0.0 {
            continue;
        }
        let mut row: Vec<f64> = base
            .iter()
            .zip(&g)
            .map(|(b, x)| (b + (x - mean) * radius / norm).max(0.0))
            .collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
        if l1_distance(&row, base) <= rho {
            return row;
        }
    }
    base.to_vec()
}

fn perturb_block<R: Rng + ?Sized>(block: &[f64], n_states: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    block
        .chunks(n_states)
        .flat_map(|row| perturb_row(row, rho, rng))
        .collect()
}

/// Per-state menus: the base rows plus `choices_per_state − 1` perturbed
/// copies with ℓ1 budget `rho` on every row.
pub fn perturbed_env_set(base: &Transitions, spec: &PerturbationSpec) -> Result<StructuredSet> {
    if spec.choices_per_state < 1 {
        return Err(Error::InvalidArgument("choices_per_state must be at least 1".into()));
    }
    if !(spec.rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be non-negative, got {}", spec.rho)));
    }
    let mut rng = rng::stream(spec.seed, DEMO_STREAM);
    let n = base.n_states();
    let choices = (0..n)
        .map(|s| {
            let block = base.block(s);
            let mut menu = vec![block.to_vec()];
            menu.extend(
                (1..spec.choices_per_state).map(|_| perturb_block(block, n, spec.rho, &mut rng)),
            );
            menu
        })
        .collect();
    Ok(StructuredSet::PerState(PerStateChoices::new(
        n,
        base.n_actions(),
        choices,
    )?))
}

/// Held-out environments: the base tensor first, then `count − 1` tensors
/// with every row perturbed within `rho_test`. Drawn from a stream disjoint
/// from the demonstration set's.
pub fn sample_test_envs(base: &Transitions, rho_test: f64, count: usize, seed: u64) -> Result<Vec<Transitions>> {
    if count < 1 {
        return Err(Error::InvalidArgument("test set needs at least one environment".into()));
    }
    let mut rng = rng::stream(seed, TEST_STREAM);
    let n = base.n_states();
    let mut envs = vec![base.clone()];
    for _ in 1..count {
        let probs = perturb_block(base.as_slice(), n, rho_test, &mut rng);
        envs.push(Transitions::new(n, base.n_actions(), probs)?);
    }
    Ok(envs)
}

/// Picks one menu entry per state uniformly at random.
pub fn random_assignment<R: Rng + ?Sized>(set: &StructuredSet, rng: &mut R) -> Vec<usize> {
    (0..set.n_factors())
        .map(|f| rng.random_range(0..set.n_choices(f)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        let ok = RandomMdpSpec::default();
        assert!(random_mdp(&RandomMdpSpec { n_states: 1, ..ok.clone() }, 0).is_err());
        assert!(random_mdp(&RandomMdpSpec { dirichlet_alpha: 0.0, ..ok.clone() }, 0).is_err());
        assert!(random_mdp(&RandomMdpSpec { beta_b: -1.0, ..ok.clone() }, 0).is_err());
        let base = Transitions::identity(2, 2).unwrap();
        let bad = PerturbationSpec { choices_per_state: 0, ..PerturbationSpec::default() };
        assert!(perturbed_env_set(&base, &bad).is_err());
        assert!(sample_test_envs(&base, 0.1, 0, 0).is_err());
    }

    #[test]
    fn zero_budget_keeps_base() {
        let (mdp, _) = random_mdp(&RandomMdpSpec::default(), 4).unwrap();
        let spec = PerturbationSpec { rho: 0.0, choices_per_state: 3, seed: 1 };
        let StructuredSet::PerState(menus) = perturbed_env_set(&mdp.transitions, &spec).unwrap() else {
            unreachable!()
        };
        for s in 0..mdp.n_states() {
            for block in menus.menu(s) {
                assert_eq!(block.as_slice(), mdp.transitions.block(s));
            }
        }
        for t in sample_test_envs(&mdp.transitions, 0.0, 5, 1).unwrap() {
            assert_eq!(t, mdp.transitions);
        }
    }

    #[test]
    fn generators_are_reproducible() {
        let spec = RandomMdpSpec::default();
        assert_eq!(random_mdp(&spec, 11).unwrap(), random_mdp(&spec, 11).unwrap());
        assert_ne!(random_mdp(&spec, 11).unwrap().0, random_mdp(&spec, 12).unwrap().0);
        let (mdp, _) = random_mdp(&spec, 11).unwrap();
        let p = PerturbationSpec { rho: 0.3, choices_per_state: 4, seed: 2 };
        assert_eq!(
            perturbed_env_set(&mdp.transitions, &p).unwrap(),
            perturbed_env_set(&mdp.transitions, &p).unwrap()
        );
        assert_eq!(
            sample_test_envs(&mdp.transitions, 0.3, 4, 9).unwrap(),
            sample_test_envs(&mdp.transitions, 0.3, 4, 9).unwrap()
        );
    }
}
