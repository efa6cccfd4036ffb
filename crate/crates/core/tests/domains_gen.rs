use edirl::design::{ObstacleFamily, StructuredSet};
use edirl::domains::{
    maze_to_structured_set, perturbed_env_set, random_assignment, random_mdp, random_obstacles,
    sample_test_envs, Action, CellKind, MazeLayout, MazeTrueReward, PerturbationSpec,
    RandomMdpSpec, DEMO_LAYOUT,
};
use edirl::mdp::{l1_distance, Transitions};
use edirl::rng;
use proptest::prelude::*;

fn rows_stochastic(t: &Transitions) -> bool {
    t.as_slice().chunks(t.n_states()).all(|row| {
        row.iter().all(|p| *p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9
    })
}

#[test]
fn dirichlet_rows_and_beta_rewards() {
    let spec = RandomMdpSpec {
        n_states: 50,
        n_actions: 20,
        ..RandomMdpSpec::default()
    };
    let (mdp, reward) = random_mdp(&spec, 7).unwrap();
    assert_eq!(mdp.transitions.as_slice().len() / 50, 1000);
    assert!(rows_stochastic(&mdp.transitions));
    assert!(reward.values().iter().all(|r| (0.0..=1.0).contains(r)));
    assert!(mdp.initial_dist.iter().all(|p| (p - 1.0 / 50.0).abs() < 1e-15));
}

#[test]
fn huge_concentration_gives_near_uniform_rows() {
    let spec = RandomMdpSpec {
        n_states: 10,
        n_actions: 4,
        dirichlet_alpha: 1e6,
        ..RandomMdpSpec::default()
    };
    for seed in 0..3 {
        let (mdp, _) = random_mdp(&spec, seed).unwrap();
        assert!(mdp.transitions.as_slice().iter().all(|p| (p - 0.1).abs() < 0.01));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn perturbations_respect_the_budget(
        n in 2usize..8,
        m in 1usize..4,
        rho in 0.0f64..2.0,
        choices in 1usize..5,
        seed in any::<u64>(),
    ) {
        let spec = RandomMdpSpec { n_states: n, n_actions: m.max(2), ..RandomMdpSpec::default() };
        let (mdp, _) = random_mdp(&spec, seed).unwrap();
        let p = PerturbationSpec { rho, choices_per_state: choices, seed };
        let set = perturbed_env_set(&mdp.transitions, &p).unwrap();
        let StructuredSet::PerState(menus) = &set else { unreachable!() };
        for s in 0..n {
            let base = mdp.transitions.block(s);
            prop_assert_eq!(menus.menu(s)[0].as_slice(), base);
            for block in menus.menu(s) {
                for (row, b) in block.chunks(n).zip(base.chunks(n)) {
                    prop_assert!(l1_distance(row, b) <= rho + 1e-12);
                    prop_assert!(row.iter().all(|x| *x >= 0.0));
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
        prop_assert_eq!(set.assemble(&set.default_assignment()).unwrap(), mdp.transitions);
    }

    #[test]
    fn blocking_keeps_rows_stochastic(seed in any::<u64>(), p in 0.0f64..1.0, slip in 0.0f64..0.5) {
        let layout = MazeLayout::parse(DEMO_LAYOUT).unwrap();
        let maze = maze_to_structured_set(&layout, 0.9, slip, &MazeTrueReward::default()).unwrap();
        let assignment = random_obstacles(&layout, p, &mut rng::stream(seed, 0));
        let t = maze.assemble(&assignment).unwrap();
        prop_assert!(rows_stochastic(&t));
        let blocked = maze.blocked_cells(&assignment);
        for s in 0..layout.n_cells() {
            for a in 0..4 {
                for &c in &blocked {
                    if c != s {
                        prop_assert_eq!(t.row(s, a)[c], 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn fifteen_choices_on_fifty_states_saturate_enumeration() {
    let spec = RandomMdpSpec {
        n_states: 50,
        n_actions: 4,
        ..RandomMdpSpec::default()
    };
    let (mdp, _) = random_mdp(&spec, 3).unwrap();
    let rho = 0.4;
    let set = perturbed_env_set(
        &mdp.transitions,
        &PerturbationSpec {
            rho,
            choices_per_state: 15,
            seed: 3,
        },
    )
    .unwrap();
    assert_eq!(set.n_factors(), 50);
    assert!((0..50).all(|f| set.n_choices(f) == 15));
    let log_size: f64 = (0..50).map(|f| (set.n_choices(f) as f64).ln()).sum();
    assert!((log_size - 50.0 * 15f64.ln()).abs() < 1e-9);
    assert_eq!(set.size(), u128::MAX);

    let mut r = rng::stream(3, 1);
    for _ in 0..100 {
        let env = set.assemble(&random_assignment(&set, &mut r)).unwrap();
        let mut worst: f64 = 0.0;
        for s in 0..50 {
            for a in 0..4 {
                worst = worst.max(l1_distance(env.row(s, a), mdp.transitions.row(s, a)));
            }
        }
        assert!(worst <= rho + 1e-12);
        assert_eq!(env.max_row_l1_distance(&mdp.transitions).unwrap(), worst);
    }
}

#[test]
fn test_envs_start_with_base_and_are_stochastic() {
    let (mdp, _) = random_mdp(&RandomMdpSpec::default(), 5).unwrap();
    let envs = sample_test_envs(&mdp.transitions, 0.3, 100, 5).unwrap();
    assert_eq!(envs.len(), 100);
    assert_eq!(envs[0], mdp.transitions);
    assert!(envs.iter().all(rows_stochastic));
    assert!(envs
        .iter()
        .all(|e| e.max_row_l1_distance(&mdp.transitions).unwrap() <= 0.3 + 1e-12));
}

#[test]
fn test_distance_grows_with_budget() {
    let avg_distance = |rho: f64| -> f64 {
        let mut total = 0.0;
        let mut count = 0.0;
        for seed in 0..3 {
            let (mdp, _) = random_mdp(&RandomMdpSpec::default(), seed).unwrap();
            for e in &sample_test_envs(&mdp.transitions, rho, 50, seed).unwrap()[1..] {
                total += e.max_row_l1_distance(&mdp.transitions).unwrap();
                count += 1.0;
            }
        }
        total / count
    };
    let d: Vec<f64> = [0.1, 0.2, 0.4].into_iter().map(avg_distance).collect();
    assert!(d[0] < d[1] && d[1] < d[2], "{d:?}");
}

#[test]
fn demo_layout_matches_the_shipped_file() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/maze8.txt");
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.trim_end(), DEMO_LAYOUT.trim_end());
    let layout = MazeLayout::parse(&text).unwrap();
    assert_eq!((layout.width, layout.height), (8, 8));
    assert_eq!(layout.cells_of(CellKind::Goal).len(), 3);
    assert_eq!(layout.start_cells(), vec![layout.index(7, 0)]);
}

#[test]
fn open_assignment_reproduces_the_base_maze() {
    let layout = MazeLayout::parse(DEMO_LAYOUT).unwrap();
    let maze = maze_to_structured_set(&layout, 0.9, 0.1, &MazeTrueReward::default()).unwrap();
    let open = vec![ObstacleFamily::OPEN; layout.configurable_cells().len()];
    assert_eq!(maze.assemble(&open).unwrap(), maze.base.transitions);
    for s in layout.cells_of(CellKind::Goal).into_iter().chain(layout.cells_of(CellKind::Lava)) {
        assert!(maze.base.transitions.is_absorbing(s));
    }
}

#[test]
fn open_grid_counts_and_mask_free_layouts() {
    let layout = MazeLayout::parse("S??\n???\n??G").unwrap();
    let maze = maze_to_structured_set(&layout, 0.9, 0.0, &MazeTrueReward::default()).unwrap();
    assert_eq!(maze.set.size(), 1 << 7);

    let plain = MazeLayout::parse("S..\n.#.\n..G").unwrap();
    let maze = maze_to_structured_set(&plain, 0.9, 0.0, &MazeTrueReward::default()).unwrap();
    assert_eq!(maze.set.size(), 1);
    assert_eq!(maze.assemble(&[]).unwrap(), maze.base.transitions);
    let wall_bump = maze.base.transitions.row(plain.index(0, 1), Action::Down.index());
    assert_eq!(wall_bump[plain.index(0, 1)], 1.0);
}

#[test]
fn invalid_layouts_are_rejected() {
    assert!(MazeLayout::parse("..\n.G").is_err());
    assert!(MazeLayout::parse("S").is_err());
    assert!(MazeLayout::parse("S.\n.").is_err());
    let layout = MazeLayout::parse("SG").unwrap();
    assert!(maze_to_structured_set(&layout, 0.9, 1.0, &MazeTrueReward::default()).is_err());
}

#[test]
fn generators_are_reproducible() {
    let layout = MazeLayout::parse(DEMO_LAYOUT).unwrap();
    let a = random_obstacles(&layout, 0.3, &mut rng::stream(9, 4));
    let b = random_obstacles(&layout, 0.3, &mut rng::stream(9, 4));
    assert_eq!(a, b);
    let (mdp, _) = random_mdp(&RandomMdpSpec::default(), 2).unwrap();
    assert_eq!(
        sample_test_envs(&mdp.transitions, 0.2, 5, 8).unwrap(),
        sample_test_envs(&mdp.transitions, 0.2, 5, 8).unwrap()
    );
}
