//! Experiment harness: run configuration, the round loop shared by all
//! methods, evaluation on held-out dynamics and result files.
//!
//! A run directory `<output_dir>/<method>/seed-<seed>/` holds
//!
//! ```text
//! config.json          run config pinned to this seed
//! instance.json        base MDP, true reward, environment set
//! observations.json    all trajectories with their environments
//! rounds.json          one RoundRecord per completed round
//! beliefs/round-k.json belief after k rounds (k = 0 is the prior)
//! final_belief.json
//! evals/rho-<x>.json   EvalRecords per round
//! grids/round-k.json   maze only: designed maze and reward heatmap
//! ```

mod config;
mod eval;
mod grid;
mod io;
mod learner;
mod problem;
mod report;
mod run;

pub use config::{
    DesignConfig, DomainConfig, EvalConfig, ExpertSettings, MazeDomain, Method, RunConfig,
};
pub use eval::{evaluate, evaluate_run_dir, EvalRecord};
pub use grid::MazeGrid;
pub use io::{read_json, write_json};
pub use learner::{Choice, Learner};
pub use problem::{InstanceRecord, Problem};
pub use report::{collect_eval_records, emit_results, mean_and_se, summarize, to_csv, SummaryRow, CSV_HEADER};
pub use run::{expert_config, run_all, run_baseline, run_ed_birl, run_seed, RoundRecord, RunOutcome};
