use serde::{Deserialize, Serialize};

use crate::domains::{scale_to_unit, CellKind, MazeLayout};
use crate::mdp::RewardFunction;

/// Row-major maze picture. Blocked configurable cells are shown as walls
/// and also listed in `blocked`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<CellKind>,
    pub blocked: Vec<usize>,
    /// Posterior-mean reward mapped onto `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<Vec<f64>>,
}

impl MazeGrid {
    pub fn new(layout: &MazeLayout, blocked: &[usize]) -> Self {
        let mut cells = layout.cells.clone();
        for &b in blocked {
            cells[b] = CellKind::Wall;
        }
        Self {
            width: layout.width,
            height: layout.height,
            cells,
            blocked: blocked.to_vec(),
            heatmap: None,
        }
    }

    pub fn with_heatmap(mut self, mean: &RewardFunction) -> Self {
        self.heatmap = Some(scale_to_unit(mean.values()));
        self
    }
}
