//! Interactive sessions in which a human plays the expert.
//!
//! A session walks through the same rounds as a simulated run: the learner
//! designs a maze, the human moves through it step by step, and committing
//! the finished trajectory updates the posterior and designs the next maze.
//! Inference and design go through [`Learner`], so replaying a simulated
//! expert's moves reproduces the harness's beliefs exactly.

use std::collections::HashMap;
use std::hash::{BuildHasher, Hasher, RandomState};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefSnapshot, BirlConfig, ObservationLog};
use crate::design::ExtendedViOptions;
use crate::domains::{Action, DEMO_LAYOUT};
use crate::error::{Error, Result};
use crate::harness::{
    expert_config, read_json, write_json, DesignConfig, DomainConfig, EvalConfig, Learner,
    MazeDomain, MazeGrid, Method, Problem, RunConfig,
};
use crate::mdp::{sample_index, Trajectory, Transitions};
use crate::rng;

const STEP_TAG: u64 = 0x57E9;
const START_TAG: u64 = 0x57A7;

/// Shorter chain so a commit returns within a few seconds.
pub fn fast_feedback_birl() -> BirlConfig {
    BirlConfig {
        proposal_step: 0.3,
        n_samples: 300,
        burn_in: 3_000,
        thinning: 30,
        ..BirlConfig::default()
    }
}

/// Three rounds on the demo layout with the fast-feedback chain.
pub fn default_session_config() -> RunConfig {
    RunConfig {
        method: Method::EdBirl,
        rounds: 3,
        birl: fast_feedback_birl(),
        expert: Default::default(),
        domain: DomainConfig::Maze(MazeDomain::inline(DEMO_LAYOUT)),
        perturbation: Default::default(),
        eval: EvalConfig::default(),
        design: DesignConfig::Structured(ExtendedViOptions {
            flip_passes: 2,
            ..ExtendedViOptions::default()
        }),
        seeds: vec![0],
        output_dir: PathBuf::from("sessions"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Playing,
    BetweenRounds,
    Complete,
}

/// Body of a create request. Both fields are optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreateRequest {
    pub config: Option<RunConfig>,
    /// Seed for inference, design and dynamics. Fresh per session when unset.
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub chosen: Vec<usize>,
    pub blocked_cells: Vec<usize>,
    pub regret_value: Option<f64>,
    pub steps: usize,
}

/// Everything persisted for a session; the learner is rebuilt from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub config: RunConfig,
    pub seed: u64,
    pub round: usize,
    pub status: SessionStatus,
    pub assignment: Vec<usize>,
    pub regret_value: Option<f64>,
    pub position: usize,
    pub pending: Vec<(usize, usize)>,
    pub log: ObservationLog,
    pub belief: BeliefSnapshot,
    pub history: Vec<RoundSummary>,
}

/// Snapshot served to clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub round: usize,
    pub rounds: usize,
    pub status: SessionStatus,
    /// Current maze; carries the posterior-mean heatmap once a round has
    /// been committed.
    pub grid: MazeGrid,
    pub position: usize,
    pub steps_taken: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regret_value: Option<f64>,
    pub birl: BirlConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub position: usize,
    pub terminal: bool,
    pub steps_taken: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub id: String,
    pub rounds: Vec<RoundSummary>,
    pub final_belief: BeliefSnapshot,
    /// Final maze with the posterior-mean heatmap.
    pub grid: MazeGrid,
}

pub struct Session {
    record: SessionRecord,
    learner: Learner,
    env: Transitions,
    horizon: usize,
}

impl Session {
    pub fn create(id: String, config: RunConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if !matches!(config.domain, DomainConfig::Maze(_)) {
            return Err(Error::Config("sessions only support maze domains".into()));
        }
        let problem = Problem::build(&config, seed)?;
        let horizon = expert_config(&config, &problem, seed, 1).horizon;
        let learner = Learner::new(problem, config.birl.clone(), config.design.clone(), seed)?;
        let choice = learner.choose(Method::EdBirl)?;
        let record = SessionRecord {
            id,
            seed,
            round: 1,
            status: SessionStatus::Playing,
            position: start_position(&learner, seed, 1),
            assignment: choice.assignment,
            regret_value: choice.regret.map(|r| r.regret),
            pending: Vec::new(),
            log: learner.log().clone(),
            belief: BeliefSnapshot::new(learner.belief(), &learner.birl_after(0)),
            history: Vec::new(),
            config,
        };
        Ok(Self {
            record,
            learner,
            env: choice.env,
            horizon,
        })
    }

    pub fn restore(record: SessionRecord) -> Result<Self> {
        let problem = Problem::build(&record.config, record.seed)?;
        let horizon = expert_config(&record.config, &problem, record.seed, 1).horizon;
        let completed = record.history.len();
        let learner = Learner::resume(
            problem,
            record.config.birl.clone(),
            record.config.design.clone(),
            record.seed,
            record.log.clone(),
            record.belief.to_belief()?,
            completed,
        )?;
        let env = learner.problem().set().assemble(&record.assignment)?;
        Ok(Self {
            record,
            learner,
            env,
            horizon,
        })
    }

    pub fn record(&self) -> &SessionRecord {
        &self.record
    }

    pub fn id(&self) -> &str {
        &self.record.id
    }

    pub fn status(&self) -> SessionStatus {
        self.record.status
    }

    fn grid(&self) -> MazeGrid {
        let maze = self.learner.problem().maze().expect("sessions are mazes");
        let grid = MazeGrid::new(&maze.layout, &maze.blocked_cells(&self.record.assignment));
        if self.record.history.is_empty() {
            grid
        } else {
            grid.with_heatmap(self.learner.belief().mean())
        }
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.record.id.clone(),
            round: self.record.round,
            rounds: self.record.config.rounds,
            status: self.record.status,
            grid: self.grid(),
            position: self.record.position,
            steps_taken: self.record.pending.len(),
            horizon: self.horizon,
            regret_value: self.record.regret_value,
            birl: self.learner.birl_after(self.record.history.len()),
        }
    }

    /// Applies one move. The step is recorded even when it bumps into a
    /// wall. The trajectory ends on reaching an absorbing cell or the
    /// horizon.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.record.status != SessionStatus::Playing {
            return Err(Error::SessionState(format!(
                "cannot step while {:?}",
                self.record.status
            )));
        }
        let s = self.record.position;
        let a = action.index();
        let mut rng = rng::stream(
            rng::derive_seed(
                self.record.seed,
                &[STEP_TAG, self.record.round as u64, self.record.pending.len() as u64],
            ),
            0,
        );
        let next = sample_index(self.env.row(s, a), &mut rng);
        self.record.pending.push((s, a));
        let terminal = self.env.is_absorbing(next) || self.record.pending.len() >= self.horizon;
        self.record.position = next;
        if terminal {
            self.record.status = SessionStatus::BetweenRounds;
        }
        Ok(StepOutcome {
            position: next,
            terminal,
            steps_taken: self.record.pending.len(),
        })
    }

    /// Submits the finished trajectory: updates the posterior and either
    /// designs the next maze or completes the session.
    pub fn commit(&mut self) -> Result<SessionView> {
        if self.record.status != SessionStatus::BetweenRounds {
            return Err(Error::SessionState(format!(
                "nothing to commit while {:?}",
                self.record.status
            )));
        }
        let trajectory = Trajectory::new(self.record.pending.clone())?;
        let mut learner = self.learner.clone();
        learner.observe(&self.env, vec![trajectory])?;
        let maze = learner.problem().maze().expect("sessions are mazes");
        let summary = RoundSummary {
            round: self.record.round,
            chosen: self.record.assignment.clone(),
            blocked_cells: maze.blocked_cells(&self.record.assignment),
            regret_value: self.record.regret_value,
            steps: self.record.pending.len(),
        };
        let completed = learner.completed_rounds();
        let next = if completed < self.record.config.rounds {
            Some(learner.choose(Method::EdBirl)?)
        } else {
            None
        };

        self.record.history.push(summary);
        self.record.log = learner.log().clone();
        self.record.belief = BeliefSnapshot::new(learner.belief(), &learner.birl_after(completed));
        self.record.pending.clear();
        match next {
            Some(choice) => {
                self.record.round += 1;
                self.record.status = SessionStatus::Playing;
                self.record.assignment = choice.assignment;
                self.record.regret_value = choice.regret.map(|r| r.regret);
                self.record.position = start_position(&learner, self.record.seed, self.record.round);
                self.env = choice.env;
            }
            None => self.record.status = SessionStatus::Complete,
        }
        self.learner = learner;
        Ok(self.view())
    }

    pub fn result(&self) -> Result<SessionResult> {
        if self.record.status != SessionStatus::Complete {
            return Err(Error::SessionState(format!(
                "session is not complete (round {} of {})",
                self.record.round, self.record.config.rounds
            )));
        }
        Ok(SessionResult {
            id: self.record.id.clone(),
            rounds: self.record.history.clone(),
            final_belief: self.record.belief.clone(),
            grid: self.grid(),
        })
    }
}

fn start_position(learner: &Learner, seed: u64, round: usize) -> usize {
    let mut rng = rng::stream(rng::derive_seed(seed, &[START_TAG, round as u64]), 0);
    sample_index(&learner.problem().base().initial_dist, &mut rng)
}

/// A fresh 64-bit value from the process's random hasher keys.
pub fn random_u64() -> u64 {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let mut h = RandomState::new().build_hasher();
    h.write_u64(COUNTER.fetch_add(1, Ordering::Relaxed));
    if let Ok(t) = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
        h.write_u128(t.as_nanos());
    }
    h.finish()
}

struct Entry {
    session: Mutex<Session>,
    view: RwLock<SessionView>,
}

/// Sessions by id. Mutations of one session are serialised by its own
/// mutex; reads return the last published snapshot without waiting on it.
/// With a directory, every mutation is written to `<dir>/<id>.json` and
/// unknown ids are looked up there.
pub struct SessionStore {
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<String, Arc<Entry>>>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir: Some(dir),
            entries: RwLock::new(HashMap::new()),
        })
    }

    fn path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.json"))
    }

    fn persist(&self, session: &Session) -> Result<()> {
        match &self.dir {
            Some(dir) => write_json(&Self::path(dir, session.id()), session.record()),
            None => Ok(()),
        }
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>> {
        if let Some(e) = self.entries.read().expect("store lock").get(id) {
            return Ok(e.clone());
        }
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        let path = match &self.dir {
            Some(dir) if valid => Self::path(dir, id),
            _ => return Err(Error::UnknownSession(id.to_owned())),
        };
        if !path.exists() {
            return Err(Error::UnknownSession(id.to_owned()));
        }
        let session = Session::restore(read_json(&path)?)?;
        let entry = Arc::new(Entry {
            view: RwLock::new(session.view()),
            session: Mutex::new(session),
        });
        Ok(self
            .entries
            .write()
            .expect("store lock")
            .entry(id.to_owned())
            .or_insert(entry)
            .clone())
    }

    pub fn create(&self, request: CreateRequest) -> Result<SessionView> {
        let config = request.config.unwrap_or_else(default_session_config);
        let seed = request.seed.unwrap_or_else(random_u64);
        let id = format!("{:016x}{:016x}", random_u64(), random_u64());
        let session = Session::create(id.clone(), config, seed)?;
        self.persist(&session)?;
        let view = session.view();
        let entry = Arc::new(Entry {
            view: RwLock::new(view.clone()),
            session: Mutex::new(session),
        });
        self.entries.write().expect("store lock").insert(id, entry);
        Ok(view)
    }

    pub fn get(&self, id: &str) -> Result<SessionView> {
        Ok(self.entry(id)?.view.read().expect("view lock").clone())
    }

    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let entry = self.entry(id)?;
        let mut session = entry.session.lock().expect("session lock");
        let out = f(&mut session)?;
        self.persist(&session)?;
        *entry.view.write().expect("view lock") = session.view();
        Ok(out)
    }

    pub fn step(&self, id: &str, action: Action) -> Result<StepOutcome> {
        self.mutate(id, |s| s.step(action))
    }

    pub fn commit(&self, id: &str) -> Result<SessionView> {
        self.mutate(id, Session::commit)
    }

    pub fn result(&self, id: &str) -> Result<SessionResult> {
        let entry = self.entry(id)?;
        let session = entry.session.lock().expect("session lock");
        session.result()
    }
}
