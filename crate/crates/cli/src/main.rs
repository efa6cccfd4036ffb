use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edirl::domains::{round1, scale_to_unit};
use edirl::error::Error;
use edirl::harness::{
    collect_eval_records, emit_results, evaluate_run_dir, run_seed, Method, RunConfig, RunOutcome,
};
use edirl::session::SessionStore;

/// Environment design for Bayesian inverse reinforcement learning.
#[derive(Parser)]
#[command(name = "edirl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method over the configured seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// EdBirl, FixedEnv or DomainRandomization.
        #[arg(long)]
        method: Option<Method>,
        /// Run only this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<usize>,
        /// Output root; runs go to `<out>/<method>/seed-<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate the stored beliefs of a run on a fresh test set.
    Eval {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        rho_test: f64,
        #[arg(long, default_value_t = 100)]
        n_test: usize,
    },
    /// Collect evaluations into results.csv and summary.json.
    Report {
        /// Run directories, or directories searched for them.
        #[arg(long, num_args = 1.., required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Serve interactive sessions over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Persist sessions here; in memory when unset.
        #[arg(long)]
        sessions_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Layout(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(command: Command) -> edirl::error::Result<()> {
    match command {
        Command::Run {
            config,
            method,
            seed,
            rounds,
            out,
        } => {
            let mut cfg = RunConfig::load(&config).map_err(|e| match e {
                Error::Io { .. } | Error::Json { .. } => Error::Config(e.to_string()),
                e => e,
            })?;
            if let Some(m) = method {
                cfg.method = m;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(r) = rounds {
                cfg.rounds = r;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.validate()?;
            for &s in &cfg.seeds {
                let outcome = run_seed(&cfg, s)?;
                print_outcome(&cfg, s, &outcome);
            }
            Ok(())
        }
        Command::Eval {
            run_dir,
            rho_test,
            n_test,
        } => {
            for r in evaluate_run_dir(&run_dir, rho_test, n_test)? {
                println!("{} seed {} round {} rho_test {}: avg_loss {:.6}", r.method, r.seed, r.round, r.rho_test, r.avg_loss);
            }
            Ok(())
        }
        Command::Report { run_dirs, out } => {
            let mut found = Vec::new();
            for d in &run_dirs {
                find_run_dirs(d, &mut found)?;
            }
            if found.is_empty() {
                return Err(Error::Config("no run directories found".into()));
            }
            let summary = emit_results(&collect_eval_records(&found)?, &out)?;
            for row in summary {
                println!(
                    "{:<20} rho_test {:<5} round {:>3}: {:.6} ± {:.6} (n={})",
                    row.method.name(),
                    row.rho_test,
                    row.round,
                    row.mean,
                    row.std_error,
                    row.n_seeds
                );
            }
            println!("wrote {} and {}", out.join("results.csv").display(), out.join("summary.json").display());
            Ok(())
        }
        Command::Serve { addr, sessions_dir } => {
            let store = match sessions_dir {
                Some(dir) => SessionStore::persistent(dir)?,
                None => SessionStore::in_memory(),
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(edirl_service::serve(addr, store))
                .map_err(|e| Error::io(addr.to_string(), e))
        }
    }
}

/// A directory with a `config.json` is a run; anything else is searched.
fn find_run_dirs(dir: &Path, out: &mut Vec<PathBuf>) -> edirl::error::Result<()> {
    if dir.join("config.json").is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    let mut children: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for c in children {
        find_run_dirs(&c, out)?;
    }
    Ok(())
}

fn print_outcome(cfg: &RunConfig, seed: u64, outcome: &RunOutcome) {
    if let Some(last) = outcome.evals.last() {
        println!(
            "{} seed {seed}: round {} avg_loss {:.6} (rho_test {}) -> {}",
            cfg.method,
            last.round,
            last.avg_loss,
            last.rho_test,
            outcome.run_dir.display()
        );
    }
    if let Some(layout) = outcome.learner.problem().layout() {
        let scaled = scale_to_unit(outcome.final_belief.mean().values());
        for r in 0..layout.height {
            let row: Vec<String> = (0..layout.width)
                .map(|c| format!("{:.1}", round1(scaled[layout.index(r, c)])))
                .collect();
            println!("  {}", row.join(" "));
        }
    }
}
