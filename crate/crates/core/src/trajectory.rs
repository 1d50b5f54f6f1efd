//! Trajectory construction under a minimal holding period.
//!
//! Each step's QUBO is sampled independently; the sampled portfolios are then
//! visited in order of decreasing instantaneous Sharpe ratio and the first one
//! that does not sell a position younger than the holding period is accepted.
//! Keeping the previous holdings never sells anything, so a step can always
//! be completed.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::market_data::MarketSnapshot;
use crate::qubo::{auto_rho, build_step_qubo, Encoding, Holdings, StepCostParams};
use crate::sampler::{pool_top_by, Sampler};

/// Minimum number of steps between a purchase and a sale of the same asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldingRule {
    min_hold: usize,
}

impl HoldingRule {
    pub fn new(min_hold: usize) -> Result<Self> {
        if min_hold == 0 {
            return Err(Error::config("hold", "holding period must be at least 1 step"));
        }
        Ok(Self { min_hold })
    }

    pub fn min_hold(&self) -> usize {
        self.min_hold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub holdings: Holdings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<TrajectoryStep>,
    /// Step of the most recent increase per asset.
    last_purchase: Vec<Option<usize>>,
    n_assets: usize,
    bundles: u32,
    fallback_count: usize,
}

impl Trajectory {
    pub fn new(n_assets: usize, bundles: u32) -> Self {
        Self {
            steps: Vec::new(),
            last_purchase: vec![None; n_assets],
            n_assets,
            bundles,
            fallback_count: 0,
        }
    }

    /// Builds a trajectory from raw holdings without any feasibility check.
    pub fn from_holdings(holdings: Vec<Holdings>) -> Result<Self> {
        let first = holdings
            .first()
            .ok_or_else(|| Error::size("trajectory needs at least one step"))?;
        let mut traj = Trajectory::new(first.n_assets(), first.bundles());
        for h in holdings {
            traj.push(h)?;
        }
        Ok(traj)
    }

    pub fn push(&mut self, holdings: Holdings) -> Result<()> {
        if holdings.n_assets() != self.n_assets || holdings.bundles() != self.bundles {
            return Err(Error::size("holdings do not match the trajectory's universe"));
        }
        let t = self.steps.len();
        for n in 0..self.n_assets {
            if holdings.units()[n] > self.previous_units(n) {
                self.last_purchase[n] = Some(t);
            }
        }
        self.steps.push(TrajectoryStep { t, holdings });
        Ok(())
    }

    fn previous_units(&self, n: usize) -> u32 {
        self.steps.last().map_or(0, |s| s.holdings.units()[n])
    }

    pub fn steps(&self) -> &[TrajectoryStep] {
        &self.steps
    }

    pub fn last(&self) -> Option<&Holdings> {
        self.steps.last().map(|s| &s.holdings)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn bundles(&self) -> u32 {
        self.bundles
    }

    pub fn last_purchase(&self) -> &[Option<usize>] {
        &self.last_purchase
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback_count
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.holdings.weights()).collect()
    }
}

/// Whether `candidate` may follow `prefix` as step `prefix.len()`.
pub fn check_holding(prefix: &Trajectory, candidate: &Holdings, rule: &HoldingRule) -> bool {
    let t = prefix.len();
    let Some(prev) = prefix.last() else {
        return true;
    };
    prev.units()
        .iter()
        .zip(candidate.units())
        .zip(prefix.last_purchase())
        .all(|((before, after), bought)| {
            after >= before || bought.is_none_or(|s| t - s >= rule.min_hold)
        })
}

/// First sale that happens fewer than `H` steps after the asset's latest
/// purchase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub step: usize,
    pub asset: usize,
    pub purchased_at: usize,
}

/// Re-derives purchase and sale events from raw weights (starting from an
/// empty portfolio) and checks every sale against the holding period.
pub fn verify_weights(weights: &[Vec<f64>], rule: &HoldingRule) -> std::result::Result<(), Violation> {
    let n_assets = weights.first().map_or(0, Vec::len);
    let mut first: Option<Violation> = None;
    for asset in 0..n_assets {
        let series: Vec<f64> = std::iter::once(0.0)
            .chain(weights.iter().map(|w| w[asset]))
            .collect();
        let purchases: Vec<usize> = (1..series.len())
            .filter(|&i| series[i] > series[i - 1])
            .map(|i| i - 1)
            .collect();
        for i in 1..series.len() {
            if series[i] >= series[i - 1] {
                continue;
            }
            let step = i - 1;
            let bought = purchases.iter().rev().find(|&&s| s < step).copied();
            if let Some(s) = bought {
                if step - s < rule.min_hold() {
                    let v = Violation {
                        step,
                        asset,
                        purchased_at: s,
                    };
                    if first.is_none_or(|f| (v.step, v.asset) < (f.step, f.asset)) {
                        first = Some(v);
                    }
                    break;
                }
            }
        }
    }
    first.map_or(Ok(()), Err)
}

pub fn verify_trajectory(traj: &Trajectory, rule: &HoldingRule) -> bool {
    verify_weights(&traj.weights(), rule).is_ok()
}

/// Instantaneous Sharpe key. Riskless candidates with positive return rank
/// above every finite Sharpe, riskless ones with non-positive return below.
#[derive(Debug, Clone, Copy)]
pub enum SharpeRank {
    RisklessLoss(f64),
    Finite(f64),
    RisklessGain(f64),
}

impl SharpeRank {
    fn tier(&self) -> u8 {
        match self {
            SharpeRank::RisklessLoss(_) => 0,
            SharpeRank::Finite(_) => 1,
            SharpeRank::RisklessGain(_) => 2,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            SharpeRank::RisklessLoss(v) | SharpeRank::Finite(v) | SharpeRank::RisklessGain(v) => v,
        }
    }

    pub fn sharpe(&self) -> Option<f64> {
        match *self {
            SharpeRank::Finite(v) => Some(v),
            _ => None,
        }
    }
}

impl Ord for SharpeRank {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tier()
            .cmp(&other.tier())
            .then_with(|| self.value().total_cmp(&other.value()))
    }
}

impl PartialOrd for SharpeRank {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for SharpeRank {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SharpeRank {}

pub fn instant_sharpe(weights: &[f64], snapshot: &MarketSnapshot) -> SharpeRank {
    let ret = dot(&snapshot.mu, weights);
    let var = snapshot.sigma.quad_form(weights);
    if var > 0.0 {
        SharpeRank::Finite(ret / var.sqrt())
    } else if ret > 0.0 {
        SharpeRank::RisklessGain(ret)
    } else {
        SharpeRank::RisklessLoss(ret)
    }
}

/// Ranking key of a candidate. The Sharpe term is computed on the holdings
/// rescaled to a unit budget (`units / Σ units`), so proportional holdings get
/// bit-identical Sharpe values and fall through to the energy tie-break.
pub fn holdings_sharpe(holdings: &Holdings, snapshot: &MarketSnapshot) -> SharpeRank {
    let total = holdings.total_units();
    let rank = if total > 0 {
        let unit: Vec<f64> = holdings.units().iter().map(|&u| f64::from(u) / total as f64).collect();
        instant_sharpe(&unit, snapshot)
    } else {
        SharpeRank::RisklessLoss(0.0)
    };
    match rank {
        SharpeRank::Finite(_) => rank,
        _ => instant_sharpe(&holdings.weights(), snapshot),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rho {
    Auto,
    Fixed(f64),
}

/// Per-step cost parameters derived from forecast snapshots.
pub fn step_params(snapshots: &[MarketSnapshot], gamma: f64, rho: Rho, bundles: u32) -> Result<Vec<StepCostParams>> {
    snapshots
        .iter()
        .map(|s| {
            let rho = match rho {
                Rho::Auto => auto_rho(&s.mu, &s.sigma, gamma, bundles),
                Rho::Fixed(r) => r,
            };
            StepCostParams::new(s.mu.clone(), s.sigma.clone(), gamma, rho)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PostSelection {
    /// Candidates examined per step, best Sharpe first.
    pub pool_limit: usize,
    /// Draw one more pool before falling back to the previous holdings.
    pub resample: bool,
}

impl Default for PostSelection {
    fn default() -> Self {
        Self {
            pool_limit: 256,
            resample: false,
        }
    }
}

const RESAMPLE_STREAM: u64 = 1 << 32;

/// Sharpe-ranked post-selection over per-step samples.
pub fn build_trajectory(
    snapshots: &[MarketSnapshot],
    enc: &Encoding,
    params: &[StepCostParams],
    sampler: &dyn Sampler,
    rule: &HoldingRule,
    options: PostSelection,
) -> Result<Trajectory> {
    if snapshots.is_empty() {
        return Err(Error::size("no snapshots to trade on"));
    }
    if params.len() != snapshots.len() {
        return Err(Error::size(format!(
            "{} cost parameter sets for {} snapshots",
            params.len(),
            snapshots.len()
        )));
    }
    if let Some(s) = snapshots.iter().find(|s| s.n_assets() != enc.n_assets()) {
        return Err(Error::size(format!(
            "snapshot {} has {} assets, encoding expects {}",
            s.t,
            s.n_assets(),
            enc.n_assets()
        )));
    }

    let pools = params
        .par_iter()
        .enumerate()
        .map(|(t, p)| {
            let qubo = build_step_qubo(p, enc)?;
            sampler.sample(&qubo, t as u64)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut traj = Trajectory::new(enc.n_assets(), enc.total_bundles());
    for (t, pool) in pools.iter().enumerate() {
        let snapshot = &snapshots[t];
        let rank = |h: &Holdings| holdings_sharpe(h, snapshot);
        let mut chosen = pick_feasible(&traj, pool, enc, options.pool_limit, rule, &rank)?;
        if chosen.is_none() && options.resample {
            let qubo = build_step_qubo(&params[t], enc)?;
            let again = sampler.sample(&qubo, RESAMPLE_STREAM + t as u64)?;
            chosen = pick_feasible(&traj, &again, enc, options.pool_limit, rule, &rank)?;
        }
        let holdings = match chosen {
            Some(h) => h,
            None => {
                traj.fallback_count += 1;
                traj.last()
                    .cloned()
                    .unwrap_or_else(|| Holdings::zeros(enc.n_assets(), enc.total_bundles()))
            }
        };
        traj.push(holdings)?;
    }
    Ok(traj)
}

fn pick_feasible(
    traj: &Trajectory,
    pool: &crate::sampler::SamplePool,
    enc: &Encoding,
    limit: usize,
    rule: &HoldingRule,
    rank: &dyn Fn(&Holdings) -> SharpeRank,
) -> Result<Option<Holdings>> {
    if pool.is_empty() {
        return Ok(None);
    }
    let ranked = pool_top_by(pool, enc, limit, rank)?;
    Ok(ranked
        .into_iter()
        .find(|c| check_holding(traj, &c.holdings, rule))
        .map(|c| c.holdings))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryMetrics {
    pub total_return: f64,
    pub volatility: f64,
    pub sharpe: Option<f64>,
    pub annualized_return: f64,
    pub annualized_volatility: f64,
    pub fallback_count: usize,
}

pub fn trajectory_metrics(traj: &Trajectory, snapshots: &[MarketSnapshot], periods_per_year: u32) -> Result<TrajectoryMetrics> {
    if traj.len() != snapshots.len() {
        return Err(Error::size(format!(
            "trajectory has {} steps but {} snapshots were given",
            traj.len(),
            snapshots.len()
        )));
    }
    if traj.is_empty() {
        return Err(Error::size("empty trajectory"));
    }
    let mut total_return = 0.0;
    let mut variance = 0.0;
    for (step, snap) in traj.steps().iter().zip(snapshots) {
        let w = step.holdings.weights();
        total_return += dot(&snap.mu, &w);
        variance += snap.sigma.quad_form(&w);
    }
    let volatility = variance.max(0.0).sqrt();
    let scale = f64::from(periods_per_year) / traj.len() as f64;
    Ok(TrajectoryMetrics {
        total_return,
        volatility,
        sharpe: (volatility > 0.0).then(|| total_return / volatility),
        annualized_return: total_return * scale,
        annualized_volatility: volatility * scale.sqrt(),
        fallback_count: traj.fallback_count(),
    })
}

/// Uniform sampler over holdings with `Σ units = K`, each asset at most
/// `2^N_q - 1` units, by counting completions for every prefix.
#[derive(Debug, Clone)]
pub struct NormalizedSampler {
    max_units: u32,
    bundles: u32,
    /// `ways[a][r]`: fillings of assets `a..` summing to `r`.
    ways: Vec<Vec<f64>>,
}

impl NormalizedSampler {
    pub fn new(enc: &Encoding) -> Self {
        let n = enc.n_assets();
        let k = enc.total_bundles() as usize;
        let m = enc.max_units() as usize;
        let mut ways = vec![vec![0.0; k + 1]; n + 1];
        ways[n][0] = 1.0;
        for a in (0..n).rev() {
            for r in 0..=k {
                ways[a][r] = (0..=m.min(r)).map(|u| ways[a + 1][r - u]).sum();
            }
        }
        Self {
            max_units: enc.max_units(),
            bundles: enc.total_bundles(),
            ways,
        }
    }

    /// Number of normalized holdings.
    pub fn count(&self) -> f64 {
        self.ways[0][self.bundles as usize]
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Option<Holdings> {
        if self.count() == 0.0 {
            return None;
        }
        let n = self.ways.len() - 1;
        let mut remaining = self.bundles as usize;
        let mut units = Vec::with_capacity(n);
        for a in 0..n {
            let total = self.ways[a][remaining];
            let mut target = rng.random::<f64>() * total;
            let top = (self.max_units as usize).min(remaining);
            let mut pick = top;
            for u in 0..=top {
                let w = self.ways[a + 1][remaining - u];
                if target < w {
                    pick = u;
                    break;
                }
                target -= w;
            }
            // guard against rounding at the upper end
            while self.ways[a + 1][remaining - pick] == 0.0 {
                pick -= 1;
            }
            units.push(pick as u32);
            remaining -= pick;
        }
        Holdings::new(units, self.bundles).ok()
    }
}

/// Random feasible trajectories: a uniform normalized portfolio per step,
/// replaced by the previous holdings when it would sell too early.
pub fn random_baseline(
    snapshots: &[MarketSnapshot],
    enc: &Encoding,
    rule: &HoldingRule,
    n_trajectories: usize,
    seed: u64,
    periods_per_year: u32,
) -> Result<Vec<(Trajectory, TrajectoryMetrics)>> {
    if n_trajectories == 0 {
        return Err(Error::config("baseline_count", "must be at least 1"));
    }
    if snapshots.is_empty() {
        return Err(Error::size("no snapshots for the baseline"));
    }
    let sampler = NormalizedSampler::new(enc);
    (0..n_trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let mut traj = Trajectory::new(enc.n_assets(), enc.total_bundles());
            for _ in snapshots {
                let draw = sampler.draw(&mut rng).filter(|h| check_holding(&traj, h, rule));
                let h = match draw {
                    Some(h) => h,
                    None => {
                        traj.fallback_count += 1;
                        traj.last()
                            .cloned()
                            .unwrap_or_else(|| Holdings::zeros(enc.n_assets(), enc.total_bundles()))
                    }
                };
                traj.push(h)?;
            }
            let metrics = trajectory_metrics(&traj, snapshots, periods_per_year)?;
            Ok((traj, metrics))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn h(units: &[u32]) -> Holdings {
        Holdings::new(units.to_vec(), 5).unwrap()
    }

    fn snap(mu: &[f64], var: &[f64]) -> MarketSnapshot {
        let n = mu.len();
        let mut sigma = Matrix::zeros(n, n);
        for i in 0..n {
            sigma[(i, i)] = var[i];
        }
        MarketSnapshot {
            t: 0,
            mu: mu.to_vec(),
            sigma,
        }
    }

    #[test]
    fn rule_rejects_zero() {
        assert!(HoldingRule::new(0).is_err());
    }

    #[test]
    fn holding_checks() {
        let rule = HoldingRule::new(7).unwrap();
        let mut traj = Trajectory::from_holdings(vec![h(&[1, 0])]).unwrap();
        assert!(check_holding(&Trajectory::new(2, 5), &h(&[0, 5]), &rule));
        assert!(check_holding(&traj, &h(&[1, 0]), &rule));
        for _ in 0..2 {
            traj.push(h(&[1, 0])).unwrap();
        }
        // t = 3, bought at 0
        assert!(!check_holding(&traj, &h(&[0, 0]), &rule));
        for _ in 0..4 {
            traj.push(h(&[1, 0])).unwrap();
        }
        // t = 7
        assert!(check_holding(&traj, &h(&[0, 0]), &rule));
    }

    #[test]
    fn top_up_resets_clock() {
        let rule = HoldingRule::new(3).unwrap();
        let traj = Trajectory::from_holdings(vec![h(&[1]), h(&[1]), h(&[2]), h(&[2])]).unwrap();
        assert_eq!(traj.last_purchase(), &[Some(2)]);
        assert!(!check_holding(&traj, &h(&[1]), &rule));
    }

    #[test]
    fn verifier_examples() {
        let rule = HoldingRule::new(7).unwrap();
        let early = Trajectory::from_holdings(vec![h(&[2]), h(&[2]), h(&[0])]).unwrap();
        assert!(!verify_trajectory(&early, &rule));
        assert_eq!(
            verify_weights(&early.weights(), &rule),
            Err(Violation { step: 2, asset: 0, purchased_at: 0 })
        );
        let constant = Trajectory::from_holdings(vec![h(&[2, 3]); 20]).unwrap();
        assert!(verify_trajectory(&constant, &rule));
        let legal = Trajectory::from_holdings(
            (0..9).map(|t| if t < 7 { h(&[2]) } else { h(&[1]) }).collect(),
        )
        .unwrap();
        assert!(verify_trajectory(&legal, &rule));
    }

    #[test]
    fn metrics_examples() {
        let s = snap(&[0.1], &[0.04]);
        let one = Trajectory::from_holdings(vec![Holdings::new(vec![1], 1).unwrap()]).unwrap();
        let m = trajectory_metrics(&one, std::slice::from_ref(&s), 252).unwrap();
        assert!((m.total_return - 0.1).abs() < 1e-15);
        assert!((m.volatility - 0.2).abs() < 1e-15);
        assert!((m.sharpe.unwrap() - 0.5).abs() < 1e-15);

        let two = Trajectory::from_holdings(vec![Holdings::new(vec![1], 1).unwrap(); 2]).unwrap();
        let m = trajectory_metrics(&two, &[s.clone(), s.clone()], 252).unwrap();
        assert!((m.total_return - 0.2).abs() < 1e-15);
        assert!((m.volatility - 0.2 * 2f64.sqrt()).abs() < 1e-15);
        assert!((m.sharpe.unwrap() - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        assert!((m.annualized_return - 0.2 * 126.0).abs() < 1e-12);
        assert!((m.annualized_volatility - 0.2 * 2f64.sqrt() * 126f64.sqrt()).abs() < 1e-12);

        let empty = Trajectory::from_holdings(vec![Holdings::zeros(1, 1)]).unwrap();
        let m = trajectory_metrics(&empty, &[s], 252).unwrap();
        assert_eq!((m.total_return, m.volatility, m.sharpe), (0.0, 0.0, None));
    }

    #[test]
    fn metrics_json_keys() {
        let s = snap(&[0.0], &[0.0]);
        let t = Trajectory::from_holdings(vec![Holdings::zeros(1, 1)]).unwrap();
        let json = serde_json::to_string(&trajectory_metrics(&t, &[s], 252).unwrap()).unwrap();
        assert_eq!(
            json,
            r#"{"total_return":0.0,"volatility":0.0,"sharpe":null,"annualized_return":0.0,"annualized_volatility":0.0,"fallback_count":0}"#
        );
    }

    #[test]
    fn riskless_ranking() {
        let s = snap(&[0.1, -0.1, 0.0], &[0.0, 0.0, 0.04]);
        let gain = instant_sharpe(&[1.0, 0.0, 0.0], &s);
        let loss = instant_sharpe(&[0.0, 1.0, 0.0], &s);
        let finite = instant_sharpe(&[0.0, 0.0, 1.0], &s);
        let nothing = instant_sharpe(&[0.0, 0.0, 0.0], &s);
        assert!(gain > finite && finite > nothing && nothing > loss);
        assert_eq!(finite.sharpe(), Some(0.0));
    }

    #[test]
    fn proportional_holdings_tie_exactly() {
        let s = snap(&[0.013, -0.004, 0.007], &[0.03, 0.011, 0.021]);
        let a = Holdings::new(vec![1, 2, 0], 5).unwrap();
        let b = Holdings::new(vec![2, 4, 0], 5).unwrap();
        assert_eq!(holdings_sharpe(&a, &s).sharpe(), holdings_sharpe(&b, &s).sharpe());
        let riskless = snap(&[0.1, 0.0], &[0.0, 0.0]);
        let one = Holdings::new(vec![1, 0], 5).unwrap();
        let two = Holdings::new(vec![2, 0], 5).unwrap();
        assert!(holdings_sharpe(&two, &riskless) > holdings_sharpe(&one, &riskless));
    }

    #[test]
    fn normalized_sampler_counts() {
        // compositions of 5 into 2 parts each ≤ 3: (2,3), (3,2)
        let enc = Encoding::new(2, 2, 5).unwrap();
        let s = NormalizedSampler::new(&enc);
        assert_eq!(s.count(), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let d = s.draw(&mut rng).unwrap();
            assert!(d.is_normalized());
            assert!(d.units().iter().all(|u| *u <= 3));
        }
        let impossible = NormalizedSampler::new(&Encoding::new(1, 2, 5).unwrap());
        assert_eq!(impossible.count(), 0.0);
        assert!(impossible.draw(&mut rng).is_none());
    }

    #[test]
    fn baseline_single_step_is_normalized() {
        let enc = Encoding::new(3, 2, 5).unwrap();
        let rule = HoldingRule::new(1).unwrap();
        let out = random_baseline(&[snap(&[0.01, 0.02, 0.0], &[0.01, 0.02, 0.03])], &enc, &rule, 1, 9, 252).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].0.steps()[0].holdings.is_normalized());
    }

    #[test]
    fn baseline_infeasible_set_falls_back() {
        let enc = Encoding::new(1, 2, 5).unwrap();
        let rule = HoldingRule::new(1).unwrap();
        let out = random_baseline(&vec![snap(&[0.01], &[0.01]); 3], &enc, &rule, 2, 0, 252).unwrap();
        for (t, m) in &out {
            assert!(t.steps().iter().all(|s| s.holdings.total_units() == 0));
            assert_eq!(m.fallback_count, 3);
        }
    }
}
