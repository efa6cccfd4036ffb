use edirl::belief::{posterior_mean, sample_posterior, BirlConfig, ObservationLog};
use edirl::design::{select_env_structured, ChosenEnv, ExtendedViOptions, ObstacleFamily, Shared};
use edirl::domains::{maze_to_structured_set, scale_to_unit, MazeInstance, MazeLayout, MazeTrueReward};
use edirl::error::Result;
use edirl::expert::{demonstrate, ExpertConfig};
use edirl::harness::MazeGrid;
use edirl::mdp::{solve_optimal, RewardFunction, TabularMdp, Trajectory};
use edirl::session::fast_feedback_birl;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Parses `request`, applies `op` and serialises the answer.
pub fn run<Q: DeserializeOwned, A: Serialize>(request: &str, op: impl FnOnce(Q) -> Result<A>) -> Result<String, String> {
    let q: Q = serde_json::from_str(request).map_err(|e| format!("request: {e}"))?;
    let a = op(q).map_err(|e| e.to_string())?;
    serde_json::to_string(&a).map_err(|e| e.to_string())
}

fn default_discount() -> f64 {
    0.9
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MazeSpec {
    pub layout: String,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default)]
    pub slip: f64,
    /// Cells currently blocked; each must be configurable.
    #[serde(default)]
    pub blocked: Vec<usize>,
}

impl MazeSpec {
    fn instance(&self) -> Result<MazeInstance> {
        let layout = MazeLayout::parse(&self.layout)?;
        maze_to_structured_set(&layout, self.discount, self.slip, &MazeTrueReward::default())
    }
}

fn assignment_for(maze: &MazeInstance, blocked: &[usize]) -> Result<Vec<usize>> {
    let cells = maze.layout.configurable_cells();
    if let Some(bad) = blocked.iter().find(|c| !cells.contains(c)) {
        return Err(edirl::error::Error::InvalidArgument(format!("cell {bad} is not configurable")));
    }
    Ok(cells
        .iter()
        .map(|c| if blocked.contains(c) { ObstacleFamily::BLOCKED } else { ObstacleFamily::OPEN })
        .collect())
}

fn env_mdp(maze: &MazeInstance, blocked: &[usize]) -> Result<TabularMdp> {
    let t = maze.assemble(&assignment_for(maze, blocked)?)?;
    maze.base.with_transitions(t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveRequest {
    #[serde(flatten)]
    pub maze: MazeSpec,
    /// Per-cell reward; the maze's true reward when absent.
    #[serde(default)]
    pub reward: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResponse {
    pub grid: MazeGrid,
    pub values: Vec<f64>,
    /// `values` mapped onto `[0, 1]`.
    pub scaled: Vec<f64>,
    /// Greedy action index per cell: 0 up, 1 down, 2 right, 3 left.
    pub policy: Vec<usize>,
}

pub fn solve(q: SolveRequest) -> Result<SolveResponse> {
    let maze = q.maze.instance()?;
    let mdp = env_mdp(&maze, &q.maze.blocked)?;
    let reward = q.reward.map(RewardFunction::new).unwrap_or_else(|| maze.true_reward.clone());
    let sol = solve_optimal(&mdp, &reward, None)?;
    let values = sol.value.values().to_vec();
    Ok(SolveResponse {
        grid: MazeGrid::new(&maze.layout, &q.maze.blocked),
        scaled: scale_to_unit(&values),
        policy: sol.q.greedy(),
        values,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Demonstration {
    pub blocked: Vec<usize>,
    pub trajectory: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignRequest {
    #[serde(flatten)]
    pub maze: MazeSpec,
    #[serde(default)]
    pub demonstrations: Vec<Demonstration>,
    #[serde(default)]
    pub seed: u64,
    /// Chain settings; the fast-feedback preset when absent.
    #[serde(default)]
    pub birl: Option<BirlConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignResponse {
    /// Next maze, with the posterior-mean heatmap once there is data.
    pub grid: MazeGrid,
    pub regret: f64,
    pub posterior_mean: Vec<f64>,
}

pub fn design(q: DesignRequest) -> Result<DesignResponse> {
    let maze = q.maze.instance()?;
    let mut log = ObservationLog::new(&maze.base);
    for d in &q.demonstrations {
        let env = maze.assemble(&assignment_for(&maze, &d.blocked)?)?;
        log.record(Trajectory::new(d.trajectory.clone())?, &env)?;
    }
    let birl = BirlConfig {
        seed: q.seed,
        ..q.birl.unwrap_or_else(fast_feedback_birl)
    };
    let belief = sample_posterior(&log, &birl)?;
    let opts = ExtendedViOptions {
        flip_passes: 2,
        ..ExtendedViOptions::default()
    };
    let report = select_env_structured(&belief, &maze.set, &Shared::of(&maze.base), opts)?;
    let ChosenEnv::ChosenChoices(assignment) = &report.chosen else {
        unreachable!("structured selection returns choices")
    };
    let mean = posterior_mean(&belief);
    let grid = MazeGrid::new(&maze.layout, &maze.blocked_cells(assignment));
    Ok(DesignResponse {
        grid: if log.is_empty() { grid } else { grid.with_heatmap(&mean) },
        regret: report.regret,
        posterior_mean: mean.into_inner(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulateRequest {
    #[serde(flatten)]
    pub maze: MazeSpec,
    #[serde(default = "default_rationality")]
    pub rationality: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rationality() -> f64 {
    5.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub trajectory: Vec<(usize, usize)>,
    /// Cells visited, including the one the last move lands on.
    pub path: Vec<usize>,
}

pub fn simulate(q: SimulateRequest) -> Result<SimulateResponse> {
    let maze = q.maze.instance()?;
    let mdp = env_mdp(&maze, &q.maze.blocked)?;
    let cfg = ExpertConfig {
        rationality: q.rationality,
        horizon: maze.horizon(),
        trajectories_per_round: 1,
        seed: q.seed,
    };
    let steps = demonstrate(&mdp, &maze.true_reward, &cfg)?.remove(0).steps;
    let mut path: Vec<usize> = steps.iter().map(|(s, _)| *s).collect();
    if let Some(&(s, a)) = steps.last() {
        // Most likely landing cell; exact when slip is zero.
        let row = mdp.transitions.row(s, a);
        let next = (0..row.len()).max_by(|x, y| row[*x].total_cmp(&row[*y])).unwrap_or(s);
        path.push(next);
    }
    Ok(SimulateResponse { trajectory: steps, path })
}
