//! The two experimental domains: obstacle-configurable mazes and randomly
//! generated MDPs with perturbed dynamics.

pub mod maze;
pub mod random;

pub use maze::{
    maze_to_structured_set, random_obstacles, Action, CellKind, MazeInstance, MazeLayout,
    MazeTrueReward, DEMO_LAYOUT, round1, scale_to_unit,
};
pub use random::{
    perturbed_env_set, random_assignment, random_mdp, sample_test_envs, PerturbationSpec,
    RandomMdpSpec,
};
