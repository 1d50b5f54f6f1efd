//! End-to-end orchestration behind the CLI subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::artifacts::{
    frontier_report, read_frontier_csv, read_trajectory_csv, write_frontier_csv, write_metrics_json,
    write_trajectory_csv, FrontierRow, BASELINE_LABEL,
};
use crate::config::{RunConfig, TrendSource};
use crate::error::{Error, Result};
use crate::market_data::{asset_stats, estimate_snapshot, load_prices, log_returns, AssetStats, MarketSnapshot, ReturnMatrix};
use crate::reduction::{
    cluster_assets, reduce_universe, risk_filter, select_n_clusters, trend_distance_matrix, trend_series,
    ClusterAssignment, DistanceMatrix, ReducedUniverse,
};
use crate::sampler::{splitmix64, SimulatedAnnealer};
use crate::trajectory::{
    build_trajectory, random_baseline, step_params, trajectory_metrics, verify_weights, HoldingRule, Trajectory,
    TrajectoryMetrics,
};

/// Realized volatility above `cap · (1 + slack)` is reported, not fatal.
pub const REALIZED_VOL_SLACK: f64 = 0.25;

/// Forecast snapshots for every trading step plus the date each trades on.
#[derive(Debug, Clone)]
pub struct Market {
    pub returns: ReturnMatrix,
    pub stats: Vec<AssetStats>,
    pub snapshots: Vec<MarketSnapshot>,
    pub step_dates: Vec<NaiveDate>,
}

/// Trading steps are return rows `window..T`; step `t` is forecast from rows
/// `[t - window, t)`, or `[t - window + 1, t + 1)` in-sample.
pub fn build_market(returns: ReturnMatrix, window: usize, in_sample: bool, periods_per_year: u32) -> Result<Market> {
    let rows = returns.n_rows();
    if rows <= window {
        return Err(Error::InsufficientData(format!(
            "{rows} return rows leave no trading steps after a {window}-row window"
        )));
    }
    let shift = usize::from(in_sample);
    let snapshots = (window..rows)
        .map(|t| {
            let mut s = estimate_snapshot(&returns, t + shift, window)?;
            s.t = t;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let step_dates = returns.dates[window..rows].to_vec();
    let stats = asset_stats(&returns, periods_per_year)?;
    Ok(Market {
        returns,
        stats,
        snapshots,
        step_dates,
    })
}

#[derive(Debug, Clone)]
pub struct PackageResult {
    pub label: String,
    pub assignment: ClusterAssignment,
    pub universe: ReducedUniverse,
    pub gamma: f64,
    pub trajectory: Trajectory,
    pub metrics: TrajectoryMetrics,
    pub realized_vol_warning: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub packages: Vec<PackageResult>,
    pub baseline: Vec<TrajectoryMetrics>,
    pub dropped_rows: usize,
    pub written: Vec<PathBuf>,
}

fn trend_distances(market: &Market, prices: &[Vec<f64>], cfg: &RunConfig) -> Result<DistanceMatrix> {
    let trends = (0..market.returns.n_assets())
        .map(|j| {
            let source = match cfg.reduction.trend_source {
                TrendSource::LogPrices => prices[j].iter().map(|p| p.ln()).collect(),
                TrendSource::Prices => prices[j].clone(),
                TrendSource::Returns => market.returns.column(j),
            };
            trend_series(market.returns.assets[j].clone(), &source, cfg.reduction.hp_lambda)
        })
        .collect::<Result<Vec<_>>>()?;
    trend_distance_matrix(&trends)
}

fn optimize_package(
    cfg: &RunConfig,
    market: &Market,
    distances: &DistanceMatrix,
    package: &crate::config::RiskPackage,
) -> Result<PackageResult> {
    let cap = package.cap();
    let slack = cfg.reduction.risk_slack;
    let survivors = risk_filter(&market.stats, cap, slack);
    if survivors.is_empty() {
        return Err(Error::EmptyUniverse(format!(
            "package `{}`: no asset within volatility cap {cap}",
            package.label
        )));
    }
    let sub = distances.select(&survivors);
    let n_clusters = match cfg.reduction.n_clusters {
        Some(n) => n.min(sub.len()),
        None => select_n_clusters(&sub, cfg.reduction.max_clusters.min(sub.len()), cfg.reduction.plateau_tol)?,
    };
    let assignment = cluster_assets(&sub, n_clusters, cfg.seed)?;
    let universe = reduce_universe(&market.stats, &assignment, cap, slack).map_err(|e| match e {
        Error::EmptyUniverse(m) => Error::EmptyUniverse(format!("package `{}`: {m}", package.label)),
        other => other,
    })?;
    let idx: Vec<usize> = universe
        .selected
        .iter()
        .map(|id| {
            market
                .returns
                .assets
                .iter()
                .position(|a| a == id)
                .expect("selected assets come from the universe")
        })
        .collect();
    let snapshots: Vec<MarketSnapshot> = market.snapshots.iter().map(|s| s.select(&idx)).collect();
    let enc = cfg.encoding(idx.len())?;
    let rule = cfg.holding_rule()?;
    let sampler = SimulatedAnnealer::new(cfg.sampler_config())?;
    let rho = cfg.rho()?;

    let mut runs = Vec::new();
    for gamma in package.gammas() {
        let params = step_params(&snapshots, gamma, rho, enc.total_bundles())?;
        let traj = build_trajectory(&snapshots, &enc, &params, &sampler, &rule, cfg.post_selection())?;
        let metrics = trajectory_metrics(&traj, &snapshots, cfg.periods_per_year)?;
        runs.push((gamma, traj, metrics));
    }
    let chosen = pick_gamma(runs, cap);
    let (gamma, trajectory, metrics) = chosen;
    let realized_vol_warning = metrics.annualized_volatility > cap * (1.0 + REALIZED_VOL_SLACK);
    Ok(PackageResult {
        label: package.label.clone(),
        assignment,
        universe,
        gamma,
        trajectory,
        metrics,
        realized_vol_warning,
    })
}

/// Highest realized volatility at or under the cap; failing that, the lowest.
fn pick_gamma(runs: Vec<(f64, Trajectory, TrajectoryMetrics)>, cap: f64) -> (f64, Trajectory, TrajectoryMetrics) {
    let under = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.2.annualized_volatility <= cap)
        .max_by(|a, b| a.1 .2.annualized_volatility.total_cmp(&b.1 .2.annualized_volatility).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    let pick = under.unwrap_or_else(|| {
        runs.iter()
            .enumerate()
            .min_by(|a, b| a.1 .2.annualized_volatility.total_cmp(&b.1 .2.annualized_volatility).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .expect("at least one gamma")
    });
    runs.into_iter().nth(pick).expect("index in range")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the full pipeline and writes per-package trajectories, metrics,
/// cluster diagnostics and the frontier.
pub fn run_optimize(cfg: &RunConfig) -> Result<OptimizeReport> {
    cfg.validate()?;
    let table = load_prices(&cfg.input)?;
    let prices: Vec<Vec<f64>> = table.series.iter().map(|s| s.prices.clone()).collect();
    let returns = log_returns(&table.series)?;
    let market = build_market(returns, cfg.window, cfg.in_sample, cfg.periods_per_year)?;
    let distances = trend_distances(&market, &prices, cfg)?;

    let packages = cfg
        .packages
        .par_iter()
        .map(|p| optimize_package(cfg, &market, &distances, p))
        .collect::<Result<Vec<_>>>()?;

    let full = cfg.encoding(market.returns.n_assets())?;
    let rule: HoldingRule = cfg.holding_rule()?;
    let baseline = random_baseline(
        &market.snapshots,
        &full,
        &rule,
        cfg.baseline_count,
        splitmix64(cfg.seed.wrapping_add(1)),
        cfg.periods_per_year,
    )?
    .into_iter()
    .map(|(_, m)| m)
    .collect::<Vec<_>>();

    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut written = Vec::new();
    for p in &packages {
        let path = cfg.output_dir.join(format!("{}.trajectory.csv", p.label));
        let mut w = create(&path)?;
        write_trajectory_csv(&mut w, &p.trajectory, &market.step_dates, &p.universe.selected)?;
        finish(w, &path)?;
        written.push(path);

        let path = cfg.output_dir.join(format!("{}.metrics.json", p.label));
        let mut w = create(&path)?;
        write_metrics_json(&mut w, &p.metrics)?;
        finish(w, &path)?;
        written.push(path);

        let path = cfg.output_dir.join(format!("{}.clusters.csv", p.label));
        let mut w = create(&path)?;
        write_clusters(&mut w, p).map_err(|e| Error::io(&path, e))?;
        finish(w, &path)?;
        written.push(path);
    }

    let mut rows: Vec<FrontierRow> = packages
        .iter()
        .map(|p| FrontierRow::from_metrics(p.label.clone(), &p.metrics))
        .collect();
    rows.extend(baseline.iter().map(|m| FrontierRow::from_metrics(BASELINE_LABEL, m)));
    let path = cfg.output_dir.join("frontier.csv");
    let mut w = create(&path)?;
    write_frontier_csv(&mut w, &rows)?;
    finish(w, &path)?;
    written.push(path);

    Ok(OptimizeReport {
        packages,
        baseline,
        dropped_rows: table.dropped_rows,
        written,
    })
}

fn write_clusters<W: Write>(mut w: W, p: &PackageResult) -> std::io::Result<()> {
    writeln!(w, "# gamma={} n_clusters={} mean_within_variance={}", p.gamma, p.assignment.n_clusters, p.assignment.mean_within_variance)?;
    writeln!(w, "asset_id,cluster,cluster_variance,selected")?;
    for (i, asset) in p.assignment.assets.iter().enumerate() {
        let c = p.assignment.labels[i];
        let selected = p.universe.selected.contains(asset);
        writeln!(w, "{asset},{c},{},{selected}", p.assignment.cluster_variance[c])?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyOutcome {
    Feasible { steps: usize, assets: usize },
    Violation { date: String, asset: String, purchased: String },
}

pub fn run_verify(path: impl AsRef<Path>, hold: usize) -> Result<VerifyOutcome> {
    let path = path.as_ref();
    let rule = HoldingRule::new(hold)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let table = read_trajectory_csv(file)?;
    Ok(match verify_weights(&table.weights, &rule) {
        Ok(()) => VerifyOutcome::Feasible {
            steps: table.dates.len(),
            assets: table.assets.len(),
        },
        Err(v) => VerifyOutcome::Violation {
            date: table.dates[v.step].clone(),
            asset: table.assets[v.asset].clone(),
            purchased: table.dates[v.purchased_at].clone(),
        },
    })
}

pub fn run_report(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = read_frontier_csv(file)?;
    Ok(frontier_report(&rows))
}
