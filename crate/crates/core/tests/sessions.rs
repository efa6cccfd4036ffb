use std::sync::Arc;
use std::thread;

use edirl::belief::{BeliefSnapshot, BirlConfig};
use edirl::domains::Action;
use edirl::error::Error;
use edirl::harness::{read_json, run_ed_birl, DomainConfig, MazeDomain, Problem, RunConfig};
use edirl::mdp::solve_optimal;
use edirl::session::{
    default_session_config, CreateRequest, Session, SessionRecord, SessionStatus, SessionStore,
};
use tempfile::TempDir;

fn small_chain() -> BirlConfig {
    BirlConfig {
        proposal_step: 0.3,
        n_samples: 60,
        burn_in: 300,
        thinning: 5,
        ..BirlConfig::default()
    }
}

fn config(layout: &str, rounds: usize) -> RunConfig {
    RunConfig {
        rounds,
        birl: small_chain(),
        domain: DomainConfig::Maze(MazeDomain::inline(layout)),
        ..default_session_config()
    }
}

fn create(store: &SessionStore, cfg: RunConfig, seed: u64) -> String {
    store
        .create(CreateRequest {
            config: Some(cfg),
            seed: Some(seed),
        })
        .unwrap()
        .id
}

#[test]
fn default_session_starts_at_round_one_on_the_start_cell() {
    let store = SessionStore::in_memory();
    let view = store.create(CreateRequest::default()).unwrap();
    assert_eq!((view.round, view.rounds), (1, 3));
    assert_eq!(view.status, SessionStatus::Playing);
    assert_eq!((view.grid.width, view.grid.height), (8, 8));
    assert_eq!(view.position, 7 * 8);
    assert_eq!(view.steps_taken, 0);
    assert!(view.grid.heatmap.is_none());
    assert!(view.regret_value.is_some());
    let json = serde_json::to_value(&view).unwrap();
    assert!(json["grid"].get("heatmap").is_none());
    assert_eq!(json["grid"]["cells"][0], "goal");
    assert_eq!(json["status"], "playing");
}

#[test]
fn zero_rounds_and_non_maze_configs_are_rejected() {
    let store = SessionStore::in_memory();
    let bad = store.create(CreateRequest {
        config: Some(config("S.G", 0)),
        seed: Some(1),
    });
    assert!(matches!(bad, Err(Error::Config(_))));
    let mut random = config("S.G", 2);
    random.domain = DomainConfig::RandomMdp(Default::default());
    assert!(matches!(Session::create("x".into(), random, 0), Err(Error::Config(_))));
}

#[test]
fn sessions_get_independent_ids_and_seeds() {
    let store = SessionStore::in_memory();
    let a = store.create(CreateRequest { config: Some(config("S.G", 1)), seed: None }).unwrap();
    let b = store.create(CreateRequest { config: Some(config("S.G", 1)), seed: None }).unwrap();
    assert_ne!(a.id, b.id);
    assert_ne!(a.birl.seed, b.birl.seed);
    store.step(&a.id, Action::Right).unwrap();
    assert_eq!(store.get(&b.id).unwrap().steps_taken, 0);
}

#[test]
fn wall_bumps_goals_and_horizon() {
    let store = SessionStore::in_memory();
    let id = create(&store, config("S.G\n...", 2), 0);

    let bump = store.step(&id, Action::Left).unwrap();
    assert_eq!((bump.position, bump.terminal, bump.steps_taken), (0, false, 1));
    let bump = store.step(&id, Action::Up).unwrap();
    assert_eq!((bump.position, bump.steps_taken), (0, 2));

    store.step(&id, Action::Right).unwrap();
    let goal = store.step(&id, Action::Right).unwrap();
    assert_eq!((goal.position, goal.terminal), (2, true));
    let view = store.get(&id).unwrap();
    assert_eq!(view.status, SessionStatus::BetweenRounds);
    assert!(matches!(store.step(&id, Action::Left), Err(Error::SessionState(_))));

    // No goal reachable from the start row: only the horizon ends the walk.
    let id = create(&store, config("S.#\n..#\n##G", 1), 0);
    let horizon = store.get(&id).unwrap().horizon;
    assert_eq!(horizon, 4 * (3 + 3));
    for k in 1..=horizon {
        let out = store.step(&id, Action::Left).unwrap();
        assert_eq!(out.terminal, k == horizon);
    }
}

#[test]
fn commit_flow_and_errors() {
    let store = SessionStore::in_memory();
    let id = create(&store, config("S.G\n...", 2), 3);
    assert!(matches!(store.commit(&id), Err(Error::SessionState(_))));
    assert!(matches!(store.result(&id), Err(Error::SessionState(_))));

    store.step(&id, Action::Right).unwrap();
    store.step(&id, Action::Right).unwrap();
    let view = store.commit(&id).unwrap();
    assert_eq!((view.round, view.status, view.steps_taken), (2, SessionStatus::Playing, 0));
    assert_eq!(view.position, 0);
    let heat = view.grid.heatmap.as_ref().unwrap();
    assert_eq!(heat.len(), 6);
    assert!(heat.iter().all(|x| (0.0..=1.0).contains(x)));
    assert!(matches!(store.commit(&id), Err(Error::SessionState(_))));

    store.step(&id, Action::Down).unwrap();
    for _ in 0..2 {
        store.step(&id, Action::Right).unwrap();
    }
    store.step(&id, Action::Up).unwrap();
    let done = store.commit(&id).unwrap();
    assert_eq!(done.status, SessionStatus::Complete);
    assert!(matches!(store.commit(&id), Err(Error::SessionState(_))));
    let result = store.result(&id).unwrap();
    assert_eq!(result.rounds.len(), 2);
    assert_eq!(result.rounds[1].steps, 4);
    assert!(result.grid.heatmap.is_some());
    assert_eq!(result.final_belief.samples.len(), small_chain().n_samples);
}

#[test]
fn unknown_ids_are_not_found() {
    let dir = TempDir::new().unwrap();
    for store in [SessionStore::in_memory(), SessionStore::persistent(dir.path()).unwrap()] {
        for id in ["nope", "../etc/passwd", ""] {
            assert!(matches!(store.get(id), Err(Error::UnknownSession(_))));
            assert!(matches!(store.step(id, Action::Up), Err(Error::UnknownSession(_))));
            assert!(matches!(store.commit(id), Err(Error::UnknownSession(_))));
            assert!(matches!(store.result(id), Err(Error::UnknownSession(_))));
        }
    }
}

#[test]
fn persisted_sessions_resume_after_restart() {
    let dir = TempDir::new().unwrap();
    let id = {
        let store = SessionStore::persistent(dir.path()).unwrap();
        let id = create(&store, config("S.G\n...", 3), 5);
        store.step(&id, Action::Right).unwrap();
        store.step(&id, Action::Right).unwrap();
        store.commit(&id).unwrap();
        store.step(&id, Action::Down).unwrap();
        id
    };
    let reference = SessionStore::in_memory();
    let ref_id = create(&reference, config("S.G\n...", 3), 5);
    reference.step(&ref_id, Action::Right).unwrap();
    reference.step(&ref_id, Action::Right).unwrap();
    reference.commit(&ref_id).unwrap();
    reference.step(&ref_id, Action::Down).unwrap();

    let store = SessionStore::persistent(dir.path()).unwrap();
    let mut view = store.get(&id).unwrap();
    assert_eq!((view.round, view.steps_taken, view.position), (2, 1, 3));
    view.id = ref_id.clone();
    assert_eq!(view, reference.get(&ref_id).unwrap());

    for (s, sid) in [(&store, &id), (&reference, &ref_id)] {
        s.step(sid, Action::Right).unwrap();
        s.step(sid, Action::Right).unwrap();
        s.step(sid, Action::Up).unwrap();
        s.commit(sid).unwrap();
    }
    assert_eq!(
        store.get(&id).unwrap().grid.heatmap,
        reference.get(&ref_id).unwrap().grid.heatmap
    );
}

#[test]
fn concurrent_steps_are_all_applied() {
    let store = Arc::new(SessionStore::in_memory());
    let id = create(&store, config(&format!("S{}\n{}", ".".repeat(19), ".".repeat(19) + "G"), 1), 0);
    let horizon = store.get(&id).unwrap().horizon;
    assert!(horizon >= 80);
    let handles: Vec<_> = (0..4)
        .map(|t| {
            let (store, id) = (store.clone(), id.clone());
            thread::spawn(move || {
                let action = if t % 2 == 0 { Action::Left } else { Action::Up };
                (0..15).map(|_| store.step(&id, action).unwrap().steps_taken).collect::<Vec<_>>()
            })
        })
        .collect();
    let mut seen: Vec<usize> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    seen.sort_unstable();
    assert_eq!(seen, (1..=60).collect::<Vec<_>>());
    assert_eq!(store.get(&id).unwrap().steps_taken, 60);
}

#[test]
fn first_commit_moves_to_a_new_maze_when_regret_is_positive() {
    let store = SessionStore::in_memory();
    let mut cfg = default_session_config();
    cfg.birl = small_chain();
    let id = create(&store, cfg.clone(), 7);
    let view = store.get(&id).unwrap();
    let first_blocked = view.grid.blocked.clone();

    // Walk the true-reward optimal path in the designed maze.
    let problem = Problem::build(&cfg, 7).unwrap();
    let maze = problem.maze().unwrap();
    let assignment: Vec<usize> = maze
        .layout
        .configurable_cells()
        .iter()
        .map(|c| usize::from(first_blocked.contains(c)))
        .collect();
    let env = problem.base().with_transitions(maze.assemble(&assignment).unwrap()).unwrap();
    let policy = solve_optimal(&env, problem.true_reward(), None).unwrap().q.greedy();
    let mut pos = view.position;
    loop {
        let out = store.step(&id, Action::from_index(policy[pos]).unwrap()).unwrap();
        pos = out.position;
        if out.terminal {
            break;
        }
    }
    assert!(maze.layout.cells_of(edirl::domains::CellKind::Goal).contains(&pos));
    let next = store.commit(&id).unwrap();
    assert_eq!(next.round, 2);
    if next.regret_value.unwrap() > 1e-9 {
        assert_ne!(next.grid.blocked, first_blocked);
    }
}

/// Replaying the simulated expert's moves through a session gives the same
/// belief snapshots as the harness.
#[test]
fn replayed_expert_reproduces_harness_beliefs() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(edirl::domains::DEMO_LAYOUT, 3);
    cfg.output_dir = dir.path().to_path_buf();
    cfg.expert.trajectories_per_round = Some(1);
    let seed = 12;
    let out = run_ed_birl(&cfg, seed).unwrap();

    let sessions = TempDir::new().unwrap();
    let store = SessionStore::persistent(sessions.path()).unwrap();
    let id = create(&store, cfg.clone(), seed);
    let bits = |b: &BeliefSnapshot| -> Vec<u64> {
        b.samples.iter().flatten().chain(&b.mean).map(|x| x.to_bits()).collect()
    };
    for (k, obs) in out.learner.log().items().iter().enumerate() {
        let view = store.get(&id).unwrap();
        assert_eq!(view.grid.blocked, out.rounds[k].blocked_cells.clone().unwrap());
        assert_eq!(view.position, obs.trajectory.steps[0].0);
        for (i, (_, a)) in obs.trajectory.steps.iter().enumerate() {
            let step = store.step(&id, Action::from_index(*a).unwrap()).unwrap();
            assert_eq!(step.terminal, i + 1 == obs.trajectory.steps.len(), "round {}", k + 1);
            if let Some((next, _)) = obs.trajectory.steps.get(i + 1) {
                assert_eq!(step.position, *next);
            }
        }
        store.commit(&id).unwrap();
        let record: SessionRecord = read_json(&sessions.path().join(format!("{id}.json"))).unwrap();
        let harness: BeliefSnapshot =
            read_json(&out.run_dir.join(format!("beliefs/round-{}.json", k + 1))).unwrap();
        assert_eq!(bits(&record.belief), bits(&harness), "round {}", k + 1);
        assert_eq!(record.belief, harness);
    }
    let result = store.result(&id).unwrap();
    let final_harness: BeliefSnapshot = read_json(&out.run_dir.join("final_belief.json")).unwrap();
    assert_eq!(bits(&result.final_belief), bits(&final_harness));
}
