use edirl::belief::{
    log_likelihood, posterior_mean, sample_posterior, sample_tempered_posterior, BirlConfig,
    EmpiricalBelief, LikelihoodModel, ObservationLog,
};
use edirl::expert::{demonstrate, ExpertConfig};
use edirl::mdp::{RewardFunction, TabularMdp, Trajectory, Transitions};
use proptest::prelude::*;

fn two_state(t: Vec<f64>, gamma: f64) -> TabularMdp {
    TabularMdp::new(Transitions::new(2, 2, t).unwrap(), gamma, vec![0.5, 0.5]).unwrap()
}

fn traj(steps: &[(usize, usize)]) -> Trajectory {
    Trajectory::new(steps.to_vec()).unwrap()
}

/// Q* of a 2-state, 2-action MDP by enumerating the four deterministic
/// policies and inverting `I − γP` in closed form.
fn oracle_q(t: &[f64], gamma: f64, r: &[f64]) -> [[f64; 2]; 2] {
    let row = |s: usize, a: usize| [t[(s * 2 + a) * 2], t[(s * 2 + a) * 2 + 1]];
    let mut v_star = [f64::NEG_INFINITY; 2];
    for a0 in 0..2 {
        for a1 in 0..2 {
            let (p0, p1) = (row(0, a0), row(1, a1));
            let (a, b, c, d) = (
                1.0 - gamma * p0[0],
                -gamma * p0[1],
                -gamma * p1[0],
                1.0 - gamma * p1[1],
            );
            let det = a * d - b * c;
            let v = [(d * r[0] - b * r[1]) / det, (a * r[1] - c * r[0]) / det];
            v_star[0] = v_star[0].max(v[0]);
            v_star[1] = v_star[1].max(v[1]);
        }
    }
    let mut q = [[0.0; 2]; 2];
    for s in 0..2 {
        for a in 0..2 {
            let p = row(s, a);
            q[s][a] = r[s] + gamma * (p[0] * v_star[0] + p[1] * v_star[1]);
        }
    }
    q
}

fn oracle_log_softmax(q: [f64; 2], c: f64, a: usize) -> f64 {
    let m = (c * q[0]).max(c * q[1]);
    c * q[a] - (m + ((c * q[0] - m).exp() + (c * q[1] - m).exp()).ln())
}

#[test]
fn single_step_matches_softmax_of_exact_q() {
    let t = vec![0.8, 0.2, 0.1, 0.9, 0.6, 0.4, 0.3, 0.7];
    let (gamma, c) = (0.85, 3.0);
    let mdp = two_state(t.clone(), gamma);
    for (r, s, a) in [
        ([0.3, -0.7], 0, 1),
        ([1.0, 0.0], 1, 0),
        ([-0.2, 0.9], 0, 0),
        ([0.5, 0.5], 1, 1),
    ] {
        let mut log = ObservationLog::new(&mdp);
        log.record(traj(&[(s, a)]), &mdp.transitions).unwrap();
        let got = log_likelihood(&RewardFunction::new(r.to_vec()), &log, c).unwrap();
        let want = oracle_log_softmax(oracle_q(&t, gamma, &r)[s], c, a);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn zero_rationality_gives_uniform_likelihood() {
    let mdp = two_state(vec![0.8, 0.2, 0.1, 0.9, 0.6, 0.4, 0.3, 0.7], 0.9);
    let mut log = ObservationLog::new(&mdp);
    log.record(traj(&[(0, 1), (1, 1), (1, 0), (0, 0), (0, 1)]), &mdp.transitions)
        .unwrap();
    let ll = log_likelihood(&RewardFunction::new(vec![0.4, -0.9]), &log, 0.0).unwrap();
    assert!((ll - 5.0 * 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn empty_log_is_rejected() {
    let mdp = two_state(vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0], 0.9);
    let log = ObservationLog::new(&mdp);
    assert!(log_likelihood(&RewardFunction::zeros(2), &log, 1.0).is_err());
}

/// Kolmogorov–Smirnov distance of `xs` against U(low, high).
fn ks_uniform(mut xs: Vec<f64>, low: f64, high: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = (x - low) / (high - low);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn empty_log_samples_the_uniform_prior() {
    let mdp = two_state(vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0], 0.9);
    let log = ObservationLog::new(&mdp);
    let cfg = BirlConfig {
        proposal_step: 0.1 * 2f64.sqrt(),
        n_samples: 5000,
        burn_in: 2000,
        thinning: 400,
        seed: 3,
        ..BirlConfig::default()
    };
    let belief = sample_posterior(&log, &cfg).unwrap();
    assert_eq!(belief.len(), 5000);
    for coord in 0..2 {
        let xs: Vec<f64> = belief.samples().iter().map(|r| r.values()[coord]).collect();
        assert!(xs.iter().all(|x| (-1.0..=1.0).contains(x)));
        let d = ks_uniform(xs, -1.0, 1.0);
        assert!(d < 0.05, "coordinate {coord}: KS = {d}");
    }
}

#[test]
fn prior_sample_mean_is_near_the_midpoint() {
    let mdp = two_state(vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0], 0.9);
    let log = ObservationLog::new(&mdp);
    for seed in 0..5 {
        let cfg = BirlConfig {
            proposal_step: 0.3,
            n_samples: 2000,
            thinning: 50,
            seed,
            ..BirlConfig::default()
        };
        let mean = posterior_mean(&sample_posterior(&log, &cfg).unwrap());
        for m in mean.values() {
            assert!((m - cfg.midpoint()).abs() < 0.1, "{m}");
        }
    }
}

/// Three states in a line; action 0 moves left, action 1 moves right.
fn line3() -> TabularMdp {
    let t = Transitions::new(
        3,
        2,
        vec![
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, 0.0, 1.0, //
            0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ],
    )
    .unwrap();
    TabularMdp::new(t, 0.9, vec![1.0 / 3.0; 3]).unwrap()
}

#[test]
fn posterior_ranks_the_rewarding_state_highest() {
    let mdp = line3();
    let truth = RewardFunction::new(vec![0.0, 0.0, 1.0]);
    let mut hits = 0;
    for run in 0..20u64 {
        let expert = ExpertConfig {
            rationality: 5.0,
            horizon: 6,
            trajectories_per_round: 20,
            seed: 1000 + run,
        };
        let mut log = ObservationLog::new(&mdp);
        for tr in demonstrate(&mdp, &truth, &expert).unwrap() {
            log.record(tr, &mdp.transitions).unwrap();
        }
        let cfg = BirlConfig {
            proposal_step: 0.1,
            n_samples: 300,
            burn_in: 1000,
            thinning: 5,
            seed: run,
            ..BirlConfig::default()
        };
        let mean = posterior_mean(&sample_posterior(&log, &cfg).unwrap());
        let v = mean.values();
        if v[2] > v[0] && v[2] > v[1] {
            hits += 1;
        }
    }
    assert!(hits >= 19, "state 2 ranked highest in {hits}/20 runs");
}

#[test]
fn duplicated_observations_equal_a_tempered_chain() {
    let mdp = line3();
    let tr = traj(&[(0, 1), (1, 1), (2, 1), (2, 0), (1, 1)]);
    let cfg = BirlConfig {
        proposal_step: 0.2,
        n_samples: 200,
        seed: 11,
        ..BirlConfig::default()
    };
    let mut single = ObservationLog::new(&mdp);
    single.record(tr.clone(), &mdp.transitions).unwrap();
    for k in [2usize, 4] {
        let mut dup = ObservationLog::new(&mdp);
        for _ in 0..k {
            dup.record(tr.clone(), &mdp.transitions).unwrap();
        }
        let a = sample_posterior(&dup, &cfg).unwrap();
        let b = sample_tempered_posterior(&single, &cfg, k as f64).unwrap();
        assert_eq!(a, b, "k = {k}");
    }
}

#[test]
fn same_inputs_give_identical_samples() {
    let mdp = line3();
    let mut log = ObservationLog::new(&mdp);
    log.record(traj(&[(0, 1), (1, 1), (2, 1)]), &mdp.transitions).unwrap();
    let cfg = BirlConfig { seed: 5, ..BirlConfig::default() };
    let a = sample_posterior(&log, &cfg).unwrap();
    let b = sample_posterior(&log, &cfg).unwrap();
    let bits = |e: &EmpiricalBelief| -> Vec<u64> {
        e.samples().iter().flat_map(|r| r.values().iter().map(|x| x.to_bits())).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    let other = sample_posterior(&log, &BirlConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(bits(&a), bits(&other));
}

#[test]
fn posterior_mean_examples() {
    let b = EmpiricalBelief::new(vec![
        RewardFunction::new(vec![0.0, 1.0]),
        RewardFunction::new(vec![1.0, 0.0]),
    ])
    .unwrap();
    assert_eq!(posterior_mean(&b).values(), &[0.5, 0.5]);
    let v = vec![0.25, -3.0, 7.5];
    let constant = EmpiricalBelief::new(vec![RewardFunction::new(v.clone()); 100]).unwrap();
    assert_eq!(posterior_mean(&constant).values(), v.as_slice());
    assert!(EmpiricalBelief::new(Vec::new()).is_err());
}

fn stochastic_mdp() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(0.01f64..1.0, 4), 0.1f64..0.95).prop_map(|(p, gamma)| {
        (p.iter().flat_map(|x| [*x, 1.0 - x]).collect(), gamma)
    })
}

fn steps() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..2, 0usize..2), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn warm_cache_matches_fresh_solves(
        (t, gamma) in stochastic_mdp(),
        (t2, _) in stochastic_mdp(),
        obs in prop::collection::vec(steps(), 1..4),
        rewards in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..12),
        c in 0.0f64..10.0,
    ) {
        let mdp = two_state(t, gamma);
        let other = Transitions::new(2, 2, t2).unwrap();
        let mut log = ObservationLog::new(&mdp);
        for (i, s) in obs.iter().enumerate() {
            let env = if i % 2 == 0 { &mdp.transitions } else { &other };
            log.record(traj(s), env).unwrap();
        }
        let mut model = LikelihoodModel::new(&log, c).unwrap();
        for r in rewards {
            let r = RewardFunction::new(r);
            let scored = model.score(&r).unwrap();
            let fresh = log_likelihood(&r, &log, c).unwrap();
            prop_assert!((scored.log_likelihood - fresh).abs() <= 1e-10 * (1.0 + fresh.abs()));
            model.accept(scored);
        }
    }

    #[test]
    fn appended_evidence_never_favours_the_less_likely_reward(
        (t, gamma) in stochastic_mdp(),
        base in steps(),
        r in prop::collection::vec(-1.0f64..1.0, 2),
        r2 in prop::collection::vec(-1.0f64..1.0, 2),
        c in 0.1f64..10.0,
        s0 in 0usize..2,
    ) {
        let mdp = two_state(t.clone(), gamma);
        let (r, r2) = (RewardFunction::new(r), RewardFunction::new(r2));
        // Optimal single-step trajectory under r.
        let q = oracle_q(&t, gamma, r.values());
        let a = usize::from(q[s0][1] > q[s0][0]);
        let new_obs = traj(&[(s0, a)]);

        let mut alone = ObservationLog::new(&mdp);
        alone.record(new_obs.clone(), &mdp.transitions).unwrap();
        let p_r = log_likelihood(&r, &alone, c).unwrap();
        let p_r2 = log_likelihood(&r2, &alone, c).unwrap();
        prop_assume!(p_r2 <= p_r);

        let mut log = ObservationLog::new(&mdp);
        log.record(traj(&base), &mdp.transitions).unwrap();
        let before = (log_likelihood(&r, &log, c).unwrap(), log_likelihood(&r2, &log, c).unwrap());
        log.record(new_obs, &mdp.transitions).unwrap();
        let after = (log_likelihood(&r, &log, c).unwrap(), log_likelihood(&r2, &log, c).unwrap());
        prop_assert!((after.1 - before.1) - (after.0 - before.0) <= 1e-12);
    }
}
