//! On-disk artifact formats: trajectory CSV (`date,asset_id,weight`, long
//! format), metrics JSON and the frontier CSV.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Trajectory, TrajectoryMetrics};

pub const BASELINE_LABEL: &str = "baseline";

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn write_err(e: impl std::fmt::Display) -> Error {
    Error::Parse {
        line: 0,
        message: format!("write failed: {e}"),
    }
}

pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory, dates: &[NaiveDate], assets: &[String]) -> Result<()> {
    if dates.len() != traj.len() || assets.len() != traj.n_assets() {
        return Err(Error::size(format!(
            "trajectory of {} steps × {} assets labelled with {} dates × {} assets",
            traj.len(),
            traj.n_assets(),
            dates.len(),
            assets.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "asset_id", "weight"]).map_err(csv_err)?;
    for (step, date) in traj.steps().iter().zip(dates) {
        let date = date.to_string();
        for (n, asset) in assets.iter().enumerate() {
            let weight = step.holdings.weight(n).to_string();
            w.write_record([date.as_str(), asset.as_str(), weight.as_str()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(write_err)?;
    Ok(())
}

/// Wide view of a long-format trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    /// `weights[step][asset]`.
    pub weights: Vec<Vec<f64>>,
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<WeightTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let expected = ["date", "asset_id", "weight"];
    if header.len() != 3 || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `date,asset_id,weight`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut dates: Vec<String> = Vec::new();
    let mut assets: Vec<String> = Vec::new();
    let mut asset_idx: HashMap<String, usize> = HashMap::new();
    let mut cells: Vec<HashMap<usize, f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let date = &record[0];
        NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            message: format!("bad date `{date}`: {e}"),
        })?;
        let weight: f64 = record[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad weight `{}`", &record[2]),
        })?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Parse {
                line,
                message: format!("weight {weight} outside [0, 1]"),
            });
        }
        if dates.last().map(String::as_str) != Some(date) {
            if dates.iter().any(|d| d == date) {
                return Err(Error::Parse {
                    line,
                    message: format!("rows for {date} are not contiguous"),
                });
            }
            dates.push(date.to_owned());
            cells.push(HashMap::new());
        }
        let next = asset_idx.len();
        let a = *asset_idx.entry(record[1].to_owned()).or_insert_with(|| {
            assets.push(record[1].to_owned());
            next
        });
        if cells.last_mut().expect("pushed above").insert(a, weight).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate row for {} on {date}", &record[1]),
            });
        }
    }
    if dates.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "trajectory file has no rows".into(),
        });
    }
    let mut weights = Vec::with_capacity(dates.len());
    for (date, row) in dates.iter().zip(&cells) {
        let mut w = Vec::with_capacity(assets.len());
        for (a, asset) in assets.iter().enumerate() {
            let v = row.get(&a).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("no weight for {asset} on {date}"),
            })?;
            w.push(*v);
        }
        weights.push(w);
    }
    Ok(WeightTable {
        dates,
        assets,
        weights,
    })
}

pub fn write_metrics_json<W: Write>(mut out: W, metrics: &TrajectoryMetrics) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, metrics).map_err(write_err)?;
    writeln!(out).map_err(write_err)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub label: String,
    pub annualized_volatility: f64,
    pub annualized_return: f64,
    pub sharpe: Option<f64>,
}

impl FrontierRow {
    pub fn from_metrics(label: impl Into<String>, m: &TrajectoryMetrics) -> Self {
        Self {
            label: label.into(),
            annualized_volatility: m.annualized_volatility,
            annualized_return: m.annualized_return,
            sharpe: m.sharpe,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.label == BASELINE_LABEL
    }
}

pub fn write_frontier_csv<W: Write>(out: W, rows: &[FrontierRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(write_err)?;
    Ok(())
}

pub fn read_frontier_csv<R: Read>(input: R) -> Result<Vec<FrontierRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

/// Share of `baseline` strictly below `value`, counting ties as half, in
/// percent. `None` for an empty baseline.
pub fn percentile(value: f64, baseline: &[f64]) -> Option<f64> {
    if baseline.is_empty() {
        return None;
    }
    let below = baseline.iter().filter(|b| **b < value).count() as f64;
    let equal = baseline.iter().filter(|b| **b == value).count() as f64;
    Some(100.0 * (below + 0.5 * equal) / baseline.len() as f64)
}

/// Human-readable summary of a frontier: per-package metrics and the
/// package Sharpe percentile among baselines.
pub fn frontier_report(rows: &[FrontierRow]) -> String {
    let baseline: Vec<f64> = rows
        .iter()
        .filter(|r| r.is_baseline())
        .filter_map(|r| r.sharpe)
        .collect();
    let fmt_opt = |v: Option<f64>, digits: usize| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.digits$}"));
    let mut out = format!(
        "{} baseline trajectories\n{:<16} {:>10} {:>10} {:>10} {:>12}\n",
        baseline.len(),
        "package",
        "ann_vol",
        "ann_ret",
        "sharpe",
        "percentile"
    );
    for r in rows.iter().filter(|r| !r.is_baseline()) {
        let pct = r.sharpe.and_then(|s| percentile(s, &baseline));
        out.push_str(&format!(
            "{:<16} {:>10.4} {:>10.4} {:>10} {:>12}\n",
            r.label,
            r.annualized_volatility,
            r.annualized_return,
            fmt_opt(r.sharpe, 4),
            fmt_opt(pct, 1)
        ));
    }
    out
}
