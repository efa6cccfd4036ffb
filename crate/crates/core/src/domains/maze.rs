//! Gridworld mazes whose free cells the designer may block.
//!
//! States are grid cells in row-major order (row 0 is the first line of the
//! layout text). Moving into a wall, an obstacle or off the grid leaves the
//! agent in place. Goal and lava cells are absorbing.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{ObstacleFamily, StructuredSet};
use crate::error::{Error, Result};
use crate::mdp::{RewardFunction, TabularMdp, Transitions};

/// 8×8 layout with three goals and lava strips used by the demos.
pub const DEMO_LAYOUT: &str = "\
G#....#G
?#.LL...
.#..?...
.##L#.#.
....#.L.
.LL.?...
......##
S..#..?G
";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Free,
    Wall,
    Goal,
    Lava,
    Start,
}

impl CellKind {
    pub fn is_absorbing(self) -> bool {
        matches!(self, CellKind::Goal | CellKind::Lava)
    }
}

/// Moves in action-index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Right,
    Left,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Right, Action::Left];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Right => (0, 1),
            Action::Left => (0, -1),
        }
    }

    fn sideways(self) -> [Action; 2] {
        match self {
            Action::Up | Action::Down => [Action::Left, Action::Right],
            Action::Left | Action::Right => [Action::Up, Action::Down],
        }
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Ok(Action::Up),
            "down" => Ok(Action::Down),
            "right" => Ok(Action::Right),
            "left" => Ok(Action::Left),
            other => Err(Error::InvalidArgument(format!("unknown action {other:?}"))),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Right => "right",
            Action::Left => "left",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeLayout {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<CellKind>,
    pub configurable: Vec<bool>,
}

impl MazeLayout {
    /// Parses the ASCII format: `#` wall, `.` free, `G` goal, `L` lava,
    /// `S` start, `?` free cell that may be blocked. One row per line;
    /// blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut cells = Vec::with_capacity(width * height);
        let mut configurable = Vec::with_capacity(width * height);
        for (i, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Layout(format!(
                    "row {i} has {} cells, expected {width}",
                    row.chars().count()
                )));
            }
            for ch in row.chars() {
                let (kind, conf) = match ch {
                    '#' => (CellKind::Wall, false),
                    '.' => (CellKind::Free, false),
                    '?' => (CellKind::Free, true),
                    'G' => (CellKind::Goal, false),
                    'L' => (CellKind::Lava, false),
                    'S' => (CellKind::Start, false),
                    other => {
                        return Err(Error::Layout(format!("unknown cell character {other:?}")))
                    }
                };
                cells.push(kind);
                configurable.push(conf);
            }
        }
        let layout = Self {
            width,
            height,
            cells,
            configurable,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width * self.height < 2 {
            return Err(Error::Layout(format!(
                "degenerate {}x{} grid",
                self.width, self.height
            )));
        }
        let n = self.width * self.height;
        if self.cells.len() != n || self.configurable.len() != n {
            return Err(Error::Layout("grid dimensions do not match".into()));
        }
        if !self.cells.contains(&CellKind::Start) {
            return Err(Error::Layout("no start cell".into()));
        }
        if let Some(i) = (0..n).find(|&i| self.configurable[i] && self.cells[i] != CellKind::Free) {
            return Err(Error::Layout(format!(
                "cell {i} is configurable but not free"
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    pub fn start_cells(&self) -> Vec<usize> {
        self.cells_of(CellKind::Start)
    }

    pub fn cells_of(&self, kind: CellKind) -> Vec<usize> {
        (0..self.n_cells()).filter(|&i| self.cells[i] == kind).collect()
    }

    pub fn configurable_cells(&self) -> Vec<usize> {
        (0..self.n_cells()).filter(|&i| self.configurable[i]).collect()
    }

    /// Cell reached by moving from `cell` in direction `action` in the base
    /// layout (no obstacles).
    fn neighbour(&self, cell: usize, action: Action) -> usize {
        let (r, c) = self.coords(cell);
        let (dr, dc) = action.delta();
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return cell;
        }
        let next = self.index(nr as usize, nc as usize);
        if self.cells[next] == CellKind::Wall {
            cell
        } else {
            next
        }
    }

    /// Renders back to the ASCII format, with `blocked` cells drawn as `#`.
    pub fn render(&self, blocked: &[usize]) -> String {
        let mut out = String::with_capacity(self.n_cells() + self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let i = self.index(r, c);
                let ch = if blocked.contains(&i) {
                    '#'
                } else {
                    match (self.cells[i], self.configurable[i]) {
                        (CellKind::Free, true) => '?',
                        (CellKind::Free, false) => '.',
                        (CellKind::Wall, _) => '#',
                        (CellKind::Goal, _) => 'G',
                        (CellKind::Lava, _) => 'L',
                        (CellKind::Start, _) => 'S',
                    }
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

impl FromStr for MazeLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MazeTrueReward {
    pub goal_reward: f64,
    pub lava_reward: f64,
    pub step_reward: f64,
}

impl Default for MazeTrueReward {
    fn default() -> Self {
        Self {
            goal_reward: 1.0,
            lava_reward: -1.0,
            step_reward: 0.0,
        }
    }
}

impl MazeTrueReward {
    pub fn reward_for(&self, layout: &MazeLayout) -> RewardFunction {
        layout
            .cells
            .iter()
            .map(|k| match k {
                CellKind::Goal => self.goal_reward,
                CellKind::Lava => self.lava_reward,
                CellKind::Free | CellKind::Start => self.step_reward,
                CellKind::Wall => 0.0,
            })
            .collect::<Vec<_>>()
            .into()
    }
}

/// A maze turned into an obstacle-configurable environment family.
#[derive(Clone, Debug, PartialEq)]
pub struct MazeInstance {
    pub layout: MazeLayout,
    pub base: TabularMdp,
    pub set: StructuredSet,
    pub true_reward: RewardFunction,
    pub slip: f64,
}

impl MazeInstance {
    /// Configurable cells blocked by `assignment`.
    pub fn blocked_cells(&self, assignment: &[usize]) -> Vec<usize> {
        self.layout
            .configurable_cells()
            .into_iter()
            .zip(assignment)
            .filter(|(_, c)| **c == ObstacleFamily::BLOCKED)
            .map(|(cell, _)| cell)
            .collect()
    }

    pub fn assemble(&self, assignment: &[usize]) -> Result<Transitions> {
        self.set.assemble(assignment)
    }

    pub fn horizon(&self) -> usize {
        4 * (self.layout.width + self.layout.height)
    }
}

/// Builds the base maze MDP and its obstacle family.
///
/// Each action moves in its direction with probability `1 − slip` and to
/// either side with probability `slip / 2`. The start distribution is
/// uniform over start cells.
pub fn maze_to_structured_set(
    layout: &MazeLayout,
    discount: f64,
    slip: f64,
    reward: &MazeTrueReward,
) -> Result<MazeInstance> {
    layout.validate()?;
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::InvalidArgument(format!("slip {slip} outside [0, 1)")));
    }
    let n = layout.n_cells();
    let transitions = Transitions::from_rows(n, Action::ALL.len(), |s, a| {
        let mut row = vec![0.0; n];
        let kind = layout.cells[s];
        if kind == CellKind::Wall || kind.is_absorbing() {
            row[s] = 1.0;
            return row;
        }
        let action = Action::ALL[a];
        row[layout.neighbour(s, action)] += 1.0 - slip;
        for side in action.sideways() {
            row[layout.neighbour(s, side)] += 0.5 * slip;
        }
        row
    })?;
    let starts = layout.start_cells();
    let mut initial = vec![0.0; n];
    for s in &starts {
        initial[*s] = 1.0 / starts.len() as f64;
    }
    let base = TabularMdp::new(transitions, discount, initial)?;
    let set = StructuredSet::Obstacles(ObstacleFamily::new(
        base.transitions.clone(),
        layout.configurable_cells(),
    )?);
    Ok(MazeInstance {
        layout: layout.clone(),
        base,
        set,
        true_reward: reward.reward_for(layout),
        slip,
    })
}

/// Blocks each configurable cell independently with probability `p`.
pub fn random_obstacles<R: Rng + ?Sized>(layout: &MazeLayout, p: f64, rng: &mut R) -> Vec<usize> {
    layout
        .configurable_cells()
        .iter()
        .map(|_| usize::from(rng.random::<f64>() < p))
        .collect()
}

/// Affinely maps values onto `[0, 1]` (minimum to 0, maximum to 1).
/// A constant vector maps to all zeros.
pub fn scale_to_unit(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Rounds to one decimal place.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn parse_rejects_bad_layouts() {
        assert!(MazeLayout::parse("S").is_err());
        assert!(MazeLayout::parse("..\n..").is_err());
        assert!(MazeLayout::parse("S.\n.").is_err());
        assert!(MazeLayout::parse("SX").is_err());
        assert!(MazeLayout::parse("S.\n.G\n").is_ok());
    }

    #[test]
    fn render_round_trips() {
        let text = "S?#\n.LG\n";
        let layout = MazeLayout::parse(text).unwrap();
        assert_eq!(layout.render(&[]), text);
        assert_eq!(layout.render(&[1]), "S##\n.LG\n");
    }

    #[test]
    fn right_move_into_goal() {
        let layout = MazeLayout::parse("SG").unwrap();
        let maze = maze_to_structured_set(&layout, 0.9, 0.0, &MazeTrueReward::default()).unwrap();
        assert_eq!(maze.base.transitions.row(0, Action::Right.index()), &[0.0, 1.0]);
        assert_eq!(maze.base.transitions.row(0, Action::Left.index()), &[1.0, 0.0]);
        assert!(maze.base.transitions.is_absorbing(1));
        assert_eq!(maze.true_reward.values(), &[0.0, 1.0]);
    }

    #[test]
    fn empty_mask_gives_base_maze() {
        let layout = MazeLayout::parse("S..\n.#G\n..L").unwrap();
        let maze = maze_to_structured_set(&layout, 0.9, 0.1, &MazeTrueReward::default()).unwrap();
        assert_eq!(maze.set.n_factors(), 0);
        assert_eq!(maze.set.size(), 1);
        assert_eq!(maze.assemble(&[]).unwrap(), maze.base.transitions);
    }

    #[test]
    fn open_grid_representable_mazes() {
        let layout = MazeLayout::parse("S??\n???\n???").unwrap();
        let maze = maze_to_structured_set(&layout, 0.9, 0.0, &MazeTrueReward::default()).unwrap();
        let mut seen: Vec<Transitions> = Vec::new();
        for a in maze.set.assignments() {
            let t = maze.assemble(&a).unwrap();
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
        assert_eq!(seen.len(), 1 << 8);
    }

    #[test]
    fn blocking_bounces_back_and_absorbing_cells_stay() {
        let layout = MazeLayout::parse("S?G\n.LL").unwrap();
        let maze = maze_to_structured_set(&layout, 0.9, 0.2, &MazeTrueReward::default()).unwrap();
        let t = maze.assemble(&[ObstacleFamily::BLOCKED]).unwrap();
        // With cell 1 blocked, nothing can enter it.
        for s in 0..6 {
            for a in 0..4 {
                if s != 1 {
                    assert_eq!(t.row(s, a)[1], 0.0);
                }
            }
        }
        // Start moving right: the intended move bounces, the slips go up
        // (off-grid, stays) or down.
        let right = t.row(0, Action::Right.index());
        assert!((right[0] - 0.9).abs() < 1e-12);
        assert!((right[3] - 0.1).abs() < 1e-12);
        for s in [2, 4, 5] {
            assert!(t.is_absorbing(s));
        }
    }

    #[test]
    fn random_obstacles_probability() {
        let layout = MazeLayout::parse(&format!("S{}", "?".repeat(999))).unwrap();
        let mut r = rng::stream(3, 0);
        let a = random_obstacles(&layout, 0.3, &mut r);
        let frac = a.iter().sum::<usize>() as f64 / a.len() as f64;
        assert!((frac - 0.3).abs() < 0.05, "{frac}");
    }

    #[test]
    fn scaling() {
        assert_eq!(scale_to_unit(&[-1.0, 0.0, 1.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(scale_to_unit(&[2.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(round1(0.96), 1.0);
        assert_eq!(round1(0.94), 0.9);
    }

    #[test]
    fn actions_parse() {
        assert_eq!("Up".parse::<Action>().unwrap(), Action::Up);
        assert!("jump".parse::<Action>().is_err());
        assert_eq!(Action::from_index(3), Some(Action::Left));
        assert_eq!(Action::Right.to_string(), "right");
    }
}
