use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::run::{RunRecord, CSV_HEADER};
use crate::error::{Error, Result};

/// Eval points averaged per seed for the final return.
pub const FINAL_WINDOW: usize = 5;

/// Mean of the last `FINAL_WINDOW` values (or all, if fewer).
pub fn final_window_mean(returns: &[f64]) -> Option<f64> {
    if returns.is_empty() {
        return None;
    }
    let tail = &returns[returns.len().saturating_sub(FINAL_WINDOW)..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Mean and 95% Student-t half-width `t_{0.975, n−1} · sd / √n`.
pub fn mean_and_half_width(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 seeds, got {n}")));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::NumericFailure(e.to_string()))?
        .inverse_cdf(0.975);
    Ok((mean, t * var.sqrt() / nf.sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub env: String,
    pub algo: String,
    pub n_seeds: usize,
    pub mean: f64,
    pub half_width: f64,
    /// Per-seed final-window returns, in seed order.
    pub per_seed: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn row(&self, env: &str, algo: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.env == env && r.algo == algo)
    }

    /// `env,algo,n_seeds,mean,half_width` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("env,algo,n_seeds,mean,half_width\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.env, r.algo, r.n_seeds, r.mean, r.half_width));
        }
        s
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ew = self.rows.iter().map(|r| r.env.len()).max().unwrap_or(3).max(3);
        let aw = self.rows.iter().map(|r| r.algo.len()).max().unwrap_or(4).max(4);
        writeln!(f, "{:<ew$}  {:<aw$}  {:>5}  {:>12}  {:>10}", "env", "algo", "seeds", "mean", "95% ±")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<ew$}  {:<aw$}  {:>5}  {:>12.4}  {:>10.4}",
                r.env, r.algo, r.n_seeds, r.mean, r.half_width
            )?;
        }
        Ok(())
    }
}

/// Groups records by `(env, algo)` and summarizes each group's final-window
/// returns.
pub fn summarize(records: &[RunRecord]) -> Result<SummaryTable> {
    let mut groups: BTreeMap<(String, String), Vec<(u64, f64)>> = BTreeMap::new();
    for r in records {
        let returns: Vec<f64> = r.points.iter().map(|p| p.mean_return).collect();
        if let Some(v) = final_window_mean(&returns) {
            groups.entry((r.env.clone(), r.algo.clone())).or_default().push((r.seed, v));
        }
    }
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no evaluation points to summarize".into()));
    }
    let mut rows = Vec::new();
    for ((env, algo), mut per_seed) in groups {
        per_seed.sort_by_key(|p| p.0);
        let vals: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
        let (mean, half_width) = mean_and_half_width(&vals)?;
        rows.push(SummaryRow {
            env,
            algo,
            n_seeds: vals.len(),
            mean,
            half_width,
            per_seed,
        });
    }
    Ok(SummaryTable { rows })
}

/// Reads every `<env>_<algo>_seed<k>.csv` in `dir` back into records.
pub fn read_run_dir(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    let mut names: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in names {
        let Some(stem) = name.strip_suffix(".csv") else { continue };
        let Some((prefix, seed)) = stem.rsplit_once("_seed") else { continue };
        let Ok(seed) = seed.parse::<u64>() else { continue };
        let Some((env, algo)) = prefix.rsplit_once('_') else { continue };
        let text = fs::read_to_string(dir.join(&name))?;
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            continue;
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            let parse_err = || Error::Parse {
                line: i + 2,
                msg: format!("{name}: malformed row `{line}`"),
            };
            if cols.len() != 3 {
                return Err(parse_err());
            }
            points.push(super::run::EvalPoint {
                env_step: cols[1].parse().map_err(|_| parse_err())?,
                mean_return: cols[2].parse().map_err(|_| parse_err())?,
                metric: None,
                coverage: None,
                critic_loss: None,
                actor_loss: None,
            });
        }
        records.push(RunRecord {
            seed,
            env: env.to_string(),
            algo: algo.to_string(),
            points,
            counters: Vec::new(),
            failure: None,
        });
    }
    Ok(records)
}

pub fn summarize_dir(dir: &Path) -> Result<SummaryTable> {
    summarize(&read_run_dir(dir)?)
}
