use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::eval::EvalRecord;
use super::io::{read_json, write_json, write_text};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "method,seed,round,rho_test,avg_loss";

/// Cross-seed statistics for one `(method, rho_test, round)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub rho_test: f64,
    pub round: usize,
    pub n_seeds: usize,
    pub mean: f64,
    /// Sample standard deviation over seeds divided by `sqrt(n_seeds)`;
    /// zero for a single seed.
    pub std_error: f64,
}

/// Loads every `evals/*.json` file under each run directory.
pub fn collect_eval_records(run_dirs: &[PathBuf]) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::new();
    for dir in run_dirs {
        let evals = dir.join("evals");
        let entries = fs::read_dir(&evals).map_err(|e| Error::io(&evals, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&evals, e))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                files.push(path);
            }
        }
        files.sort();
        for f in files {
            records.extend(read_json::<Vec<EvalRecord>>(&f)?);
        }
    }
    Ok(records)
}

fn sorted(records: &[EvalRecord]) -> Vec<EvalRecord> {
    let mut out = records.to_vec();
    out.sort_by(|a, b| {
        (a.method, a.seed, a.round)
            .cmp(&(b.method, b.seed, b.round))
            .then(a.rho_test.total_cmp(&b.rho_test))
    });
    out.dedup_by(|a, b| {
        a.method == b.method && a.seed == b.seed && a.round == b.round && a.rho_test == b.rho_test
    });
    out
}

pub fn summarize(records: &[EvalRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, u64, usize), (f64, Vec<f64>)> = BTreeMap::new();
    for r in sorted(records) {
        groups
            .entry((r.method, r.rho_test.to_bits(), r.round))
            .or_insert_with(|| (r.rho_test, Vec::new()))
            .1
            .push(r.avg_loss);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((method, _, round), (rho_test, xs))| {
            let (mean, std_error) = mean_and_se(&xs);
            SummaryRow {
                method,
                rho_test,
                round,
                n_seeds: xs.len(),
                mean,
                std_error,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.rho_test.total_cmp(&b.rho_test))
            .then(a.round.cmp(&b.round))
    });
    rows
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn to_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in sorted(records) {
        let _ = writeln!(out, "{},{},{},{},{}", r.method, r.seed, r.round, r.rho_test, r.avg_loss);
    }
    out
}

/// Writes `results.csv` and `summary.json` into `out_dir`. Records are
/// sorted and de-duplicated first, so the output only depends on the set of
/// records.
pub fn emit_results(records: &[EvalRecord], out_dir: &Path) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation records"));
    }
    write_text(&out_dir.join("results.csv"), &to_csv(records))?;
    let summary = summarize(records);
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
