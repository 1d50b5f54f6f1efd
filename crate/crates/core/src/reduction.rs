//! Dimensional reduction of the asset universe.
//!
//! Assets are filtered by historical volatility, smoothed with a
//! Hodrick–Prescott filter, compared by Euclidean distance between
//! standardized trends, clustered with average linkage, and finally reduced
//! to the best historical Sharpe ratio per cluster.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::market_data::{sharpe_cmp, AssetStats};

pub const DEFAULT_HP_LAMBDA: f64 = 10_000.0;
pub const DEFAULT_PLATEAU_TOL: f64 = 0.05;
pub const DEFAULT_MAX_CLUSTERS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrendSeries {
    pub asset_id: String,
    pub trend: Vec<f64>,
}

/// Square matrix of pairwise distances, labelled by asset.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub assets: Vec<String>,
    pub values: Matrix,
}

impl DistanceMatrix {
    pub fn new(assets: Vec<String>, values: Matrix) -> Result<Self> {
        if !values.is_square() || values.rows() != assets.len() {
            return Err(Error::size(format!(
                "distance matrix is {}x{} for {} assets",
                values.rows(),
                values.cols(),
                assets.len()
            )));
        }
        Ok(Self { assets, values })
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> DistanceMatrix {
        DistanceMatrix {
            assets: idx.iter().map(|&i| self.assets[i].clone()).collect(),
            values: self.values.select(idx),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub assets: Vec<String>,
    pub n_clusters: usize,
    /// Cluster index per asset; clusters are numbered by their lowest member.
    pub labels: Vec<usize>,
    /// Mean squared distance of members to the cluster centroid.
    pub cluster_variance: Vec<f64>,
    /// Member-weighted mean of `cluster_variance`.
    pub mean_within_variance: f64,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == cluster)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedUniverse {
    /// One asset per cluster that kept at least one member under the cap.
    pub selected: Vec<String>,
    pub risk_cap: f64,
    /// Clusters whose members were all above the cap.
    pub empty_clusters: Vec<usize>,
}

/// `Σ (y - τ)² + λ Σ (Δ²τ)²`.
pub fn hp_objective(y: &[f64], trend: &[f64], lambda: f64) -> f64 {
    let fit: f64 = y.iter().zip(trend).map(|(a, b)| (a - b).powi(2)).sum();
    fit + lambda * second_difference_penalty(trend)
}

pub fn second_difference_penalty(x: &[f64]) -> f64 {
    x.windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2))
        .sum()
}

/// Hodrick–Prescott trend: solves `(I + λ DᵀD) τ = y` with a banded LDLᵀ
/// factorization, `D` being the second-difference operator.
pub fn hp_filter(series: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 3 {
        return Err(Error::size(format!("HP filter needs at least 3 points, got {n}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::size(format!("HP lambda must be finite and >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(series.to_vec());
    }

    // Band storage: a0 = diagonal, a1 = first super-diagonal, a2 = second.
    let mut a0 = vec![1.0; n];
    let mut a1 = vec![0.0; n];
    let mut a2 = vec![0.0; n];
    const STENCIL: [f64; 3] = [1.0, -2.0, 1.0];
    for k in 0..n - 2 {
        for (p, sp) in STENCIL.iter().enumerate() {
            a0[k + p] += lambda * sp * sp;
            for (q, sq) in STENCIL.iter().enumerate().skip(p + 1) {
                let v = lambda * sp * sq;
                match q - p {
                    1 => a1[k + p] += v,
                    2 => a2[k + p] += v,
                    _ => unreachable!(),
                }
            }
        }
    }

    let mut d = vec![0.0; n];
    let mut l1 = vec![0.0; n];
    let mut l2 = vec![0.0; n];
    for i in 0..n {
        let mut di = a0[i];
        if i >= 1 {
            di -= l1[i - 1] * l1[i - 1] * d[i - 1];
        }
        if i >= 2 {
            di -= l2[i - 2] * l2[i - 2] * d[i - 2];
        }
        d[i] = di;
        if i + 1 < n {
            let mut v = a1[i];
            if i >= 1 {
                v -= l2[i - 1] * l1[i - 1] * d[i - 1];
            }
            l1[i] = v / di;
        }
        if i + 2 < n {
            l2[i] = a2[i] / di;
        }
    }

    let mut z = series.to_vec();
    for i in 0..n {
        if i >= 1 {
            z[i] -= l1[i - 1] * z[i - 1];
        }
        if i >= 2 {
            z[i] -= l2[i - 2] * z[i - 2];
        }
    }
    for i in 0..n {
        z[i] /= d[i];
    }
    for i in (0..n).rev() {
        if i + 1 < n {
            z[i] -= l1[i] * z[i + 1];
        }
        if i + 2 < n {
            z[i] -= l2[i] * z[i + 2];
        }
    }
    Ok(z)
}

pub fn trend_series(asset_id: impl Into<String>, series: &[f64], lambda: f64) -> Result<TrendSeries> {
    Ok(TrendSeries {
        asset_id: asset_id.into(),
        trend: hp_filter(series, lambda)?,
    })
}

/// z-score with population standard deviation; flat series map to zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 1e-12 * (1.0 + mean.abs())) {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / sd).collect()
}

/// Euclidean distances between standardized trends.
pub fn trend_distance_matrix(trends: &[TrendSeries]) -> Result<DistanceMatrix> {
    let len = trends.first().map_or(0, |t| t.trend.len());
    if let Some(t) = trends.iter().find(|t| t.trend.len() != len) {
        return Err(Error::Alignment(format!(
            "trend of {} has length {}, expected {len}",
            t.asset_id,
            t.trend.len()
        )));
    }
    let z: Vec<Vec<f64>> = trends.iter().map(|t| standardize(&t.trend)).collect();
    let n = trends.len();
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = z[i]
                .iter()
                .zip(&z[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            values[(i, j)] = d;
            values[(j, i)] = d;
        }
    }
    DistanceMatrix::new(trends.iter().map(|t| t.asset_id.clone()).collect(), values)
}

/// Average-linkage merge sequence. Each merge `(keep, absorbed)` joins the
/// cluster whose lowest member is `absorbed` into the one led by `keep`.
fn average_linkage(distances: &Matrix) -> Vec<(usize, usize)> {
    let n = distances.rows();
    let mut link = distances.clone();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for _ in 1..n {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in ((i + 1)..n).filter(|&j| active[j]) {
                let d = link[(i, j)];
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let (a, b, _) = best.expect("at least two active clusters");
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let d = (sa * link[(k, a)] + sb * link[(k, b)]) / (sa + sb);
            link[(k, a)] = d;
            link[(a, k)] = d;
        }
        size[a] += size[b];
        active[b] = false;
        merges.push((a, b));
    }
    merges
}

fn cut(n: usize, merges: &[(usize, usize)], n_clusters: usize) -> Vec<usize> {
    let mut leader: Vec<usize> = (0..n).collect();
    for &(a, b) in &merges[..n - n_clusters] {
        for l in leader.iter_mut() {
            if *l == b {
                *l = a;
            }
        }
    }
    // leaders are the lowest member of each cluster; renumber in that order
    let mut label_of = HashMap::new();
    leader
        .iter()
        .map(|l| {
            let next = label_of.len();
            *label_of.entry(*l).or_insert(next)
        })
        .collect()
}

/// Per-cluster `(1/|C|²) Σ_{i<j∈C} d²_ij`, the mean squared distance to the
/// centroid when `d` is Euclidean.
fn cluster_variances(distances: &Matrix, labels: &[usize], n_clusters: usize) -> (Vec<f64>, f64) {
    let mut sum_sq = vec![0.0; n_clusters];
    let mut count = vec![0usize; n_clusters];
    for (i, &li) in labels.iter().enumerate() {
        count[li] += 1;
        for j in (i + 1)..labels.len() {
            if labels[j] == li {
                sum_sq[li] += distances[(i, j)].powi(2);
            }
        }
    }
    let var: Vec<f64> = sum_sq
        .iter()
        .zip(&count)
        .map(|(s, &c)| s / (c * c) as f64)
        .collect();
    let total_sse: f64 = var.iter().zip(&count).map(|(v, &c)| v * c as f64).sum();
    (var, total_sse / labels.len() as f64)
}

/// Average-linkage clustering cut at `n_clusters`. Equal linkage distances
/// merge the lowest-index pair first; `seed` is accepted for interface
/// stability but the procedure has no random component.
pub fn cluster_assets(distances: &DistanceMatrix, n_clusters: usize, _seed: u64) -> Result<ClusterAssignment> {
    let n = distances.len();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::size(format!(
            "cannot form {n_clusters} clusters from {n} assets"
        )));
    }
    let merges = average_linkage(&distances.values);
    Ok(assignment_from_merges(distances, &merges, n_clusters))
}

fn assignment_from_merges(distances: &DistanceMatrix, merges: &[(usize, usize)], n_clusters: usize) -> ClusterAssignment {
    let labels = cut(distances.len(), merges, n_clusters);
    let (cluster_variance, mean_within_variance) = cluster_variances(&distances.values, &labels, n_clusters);
    ClusterAssignment {
        assets: distances.assets.clone(),
        n_clusters,
        labels,
        cluster_variance,
        mean_within_variance,
    }
}

/// Mean within-cluster variance for every cut `1..=max_clusters`.
pub fn variance_curve(distances: &DistanceMatrix, max_clusters: usize) -> Result<Vec<f64>> {
    let n = distances.len();
    if max_clusters == 0 || max_clusters > n {
        return Err(Error::size(format!(
            "max_clusters {max_clusters} out of range for {n} assets"
        )));
    }
    let merges = average_linkage(&distances.values);
    Ok((1..=max_clusters)
        .map(|k| assignment_from_merges(distances, &merges, k).mean_within_variance)
        .collect())
}

/// Elbow rule: the smallest cluster count after which adding one more
/// cluster lowers the mean within-cluster variance by less than
/// `plateau_tol` (relative).
pub fn select_n_clusters(distances: &DistanceMatrix, max_clusters: usize, plateau_tol: f64) -> Result<usize> {
    if !(plateau_tol > 0.0) {
        return Err(Error::config("plateau_tol", "must be positive"));
    }
    let n = distances.len();
    let probe = (max_clusters + 1).min(n);
    if max_clusters > n {
        return Err(Error::size(format!(
            "max_clusters {max_clusters} exceeds {n} assets"
        )));
    }
    let curve = variance_curve(distances, probe.max(1))?;
    for k in 1..max_clusters {
        let (here, next) = (curve[k - 1], curve[k]);
        if here <= 0.0 || (here - next) / here < plateau_tol {
            return Ok(k);
        }
    }
    Ok(max_clusters)
}

/// Indices of assets whose volatility stays within `risk_cap · (1 + slack)`.
pub fn risk_filter(stats: &[AssetStats], risk_cap: f64, slack: f64) -> Vec<usize> {
    let limit = risk_cap * (1.0 + slack);
    (0..stats.len())
        .filter(|&i| stats[i].hist_volatility <= limit)
        .collect()
}

/// Keeps the best-Sharpe asset under the risk cap in each cluster.
pub fn reduce_universe(
    stats: &[AssetStats],
    assignment: &ClusterAssignment,
    risk_cap: f64,
    slack: f64,
) -> Result<ReducedUniverse> {
    let by_id: HashMap<&str, &AssetStats> = stats.iter().map(|s| (s.asset_id.as_str(), s)).collect();
    let limit = risk_cap * (1.0 + slack);
    let mut selected = Vec::new();
    let mut empty_clusters = Vec::new();
    for cluster in 0..assignment.n_clusters {
        let mut survivors = Vec::new();
        for i in assignment.members(cluster) {
            let id = &assignment.assets[i];
            let s = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::Alignment(format!("no statistics for clustered asset {id}")))?;
            if s.hist_volatility <= limit {
                survivors.push(*s);
            }
        }
        match survivors.into_iter().min_by(|a, b| sharpe_cmp(a, b)) {
            Some(best) => selected.push(best.asset_id.clone()),
            None => empty_clusters.push(cluster),
        }
    }
    if selected.is_empty() {
        return Err(Error::EmptyUniverse(format!(
            "no asset has volatility at or below {limit}"
        )));
    }
    Ok(ReducedUniverse {
        selected,
        risk_cap,
        empty_clusters,
    })
}
