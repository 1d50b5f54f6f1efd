//! Price ingestion, log-returns and trailing-window estimates of the per-step
//! return vector and covariance matrix.

use std::cmp::Ordering;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_WINDOW: usize = 60;
pub const DEFAULT_PERIODS_PER_YEAR: u32 = 252;
/// Ridge added to the covariance diagonal, relative to `trace / N`.
pub const RIDGE_FACTOR: f64 = 1e-8;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Dated close prices of one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub asset_id: String,
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(asset_id: impl Into<String>, dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        let asset_id = asset_id.into();
        if dates.len() != prices.len() {
            return Err(Error::Alignment(format!(
                "{asset_id}: {} dates but {} prices",
                dates.len(),
                prices.len()
            )));
        }
        if prices.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "{asset_id}: need at least 2 prices, got {}",
                prices.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Alignment(format!(
                "{asset_id}: dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some((d, p)) = dates.iter().zip(&prices).find(|(_, p)| !(**p > 0.0) || !p.is_finite()) {
            return Err(Error::Data {
                asset: asset_id,
                date: d.to_string(),
                message: format!("price must be positive and finite, got {p}"),
            });
        }
        Ok(Self {
            asset_id,
            dates,
            prices,
        })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Result of loading a price file: aligned series plus the number of rows
/// dropped by the inner join.
#[derive(Debug, Clone)]
pub struct PriceTable {
    pub series: Vec<PriceSeries>,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    pub assets: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `(T-1) × N_a` log-returns, row = date, column = asset.
    pub values: Matrix,
}

impl ReturnMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.cols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j)
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, idx: &[usize]) -> ReturnMatrix {
        let mut values = Matrix::zeros(self.n_rows(), idx.len());
        for r in 0..self.n_rows() {
            for (c, &j) in idx.iter().enumerate() {
                values[(r, c)] = self.values[(r, j)];
            }
        }
        ReturnMatrix {
            assets: idx.iter().map(|&j| self.assets[j].clone()).collect(),
            dates: self.dates.clone(),
            values,
        }
    }
}

/// Forecast return vector and covariance for one trading step.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSnapshot {
    pub t: usize,
    pub mu: Vec<f64>,
    pub sigma: Matrix,
}

impl MarketSnapshot {
    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    pub fn select(&self, idx: &[usize]) -> MarketSnapshot {
        MarketSnapshot {
            t: self.t,
            mu: idx.iter().map(|&i| self.mu[i]).collect(),
            sigma: self.sigma.select(idx),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetStats {
    pub asset_id: String,
    /// Annualized standard deviation of log-returns.
    pub hist_volatility: f64,
    /// Annualized mean over annualized volatility; `None` for zero volatility.
    pub hist_sharpe: Option<f64>,
}

/// Loads a `date,<asset>...` price file.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_prices(file)
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("nan") || c.eq_ignore_ascii_case("na")
}

/// Parses price CSV from any reader; see [`load_prices`].
pub fn parse_prices<R: Read>(reader: R) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.is_empty() || header.len() == 1 && header[0].is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    if !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::Parse {
            line: 1,
            message: format!("first column must be `date`, got `{}`", &header[0]),
        });
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if assets.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no asset columns".into(),
        });
    }
    if let Some(a) = assets.iter().find(|a| a.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("empty asset id in header {a:?}"),
        });
    }

    let mut dates = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); assets.len()];
    let mut dropped_rows = 0usize;

    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != assets.len() + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", assets.len() + 1, record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|e| Error::Parse {
            line,
            message: format!("bad date `{}`: {e}", &record[0]),
        })?;
        if dates.last().is_some_and(|last| *last >= date) {
            return Err(Error::Parse {
                line,
                message: format!("dates must be strictly increasing, got {date}"),
            });
        }

        let mut row = Vec::with_capacity(assets.len());
        let mut complete = true;
        for (cell, asset) in record.iter().skip(1).zip(&assets) {
            if is_missing(cell) {
                complete = false;
                continue;
            }
            let price: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad price `{cell}` for {asset}"),
            })?;
            if !(price > 0.0) || !price.is_finite() {
                return Err(Error::Data {
                    asset: asset.clone(),
                    date: date.to_string(),
                    message: format!("price must be positive, got {price}"),
                });
            }
            row.push(price);
        }
        if !complete {
            dropped_rows += 1;
            continue;
        }
        dates.push(date);
        for (col, p) in columns.iter_mut().zip(row) {
            col.push(p);
        }
    }

    if dates.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} complete date rows, need at least 2",
            dates.len()
        )));
    }
    let series = assets
        .into_iter()
        .zip(columns)
        .map(|(a, p)| PriceSeries::new(a, dates.clone(), p))
        .collect::<Result<Vec<_>>>()?;
    Ok(PriceTable {
        series,
        dropped_rows,
    })
}

/// Log-returns `ln(p_t / p_{t-1})` of aligned series.
pub fn log_returns(series: &[PriceSeries]) -> Result<ReturnMatrix> {
    let first = series
        .first()
        .ok_or_else(|| Error::InsufficientData("no price series".into()))?;
    if first.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need at least 2 prices",
            first.asset_id
        )));
    }
    if let Some(s) = series.iter().find(|s| s.dates != first.dates) {
        return Err(Error::Alignment(format!(
            "{} is not on the same date grid as {}",
            s.asset_id, first.asset_id
        )));
    }
    let rows = first.len() - 1;
    let mut values = Matrix::zeros(rows, series.len());
    for (j, s) in series.iter().enumerate() {
        for (t, w) in s.prices.windows(2).enumerate() {
            values[(t, j)] = (w[1] / w[0]).ln();
        }
    }
    Ok(ReturnMatrix {
        assets: series.iter().map(|s| s.asset_id.clone()).collect(),
        dates: first.dates[1..].to_vec(),
        values,
    })
}

/// Trailing-window mean and sample covariance over return rows
/// `[t - window, t)`, with a small ridge on the diagonal.
pub fn estimate_snapshot(returns: &ReturnMatrix, t: usize, window: usize) -> Result<MarketSnapshot> {
    if window < 2 {
        return Err(Error::size(format!("window must be at least 2, got {window}")));
    }
    if t < window {
        return Err(Error::InsufficientHistory { t, window });
    }
    if t > returns.n_rows() {
        return Err(Error::size(format!(
            "step {t} beyond the {} available return rows",
            returns.n_rows()
        )));
    }
    let n = returns.n_assets();
    let rows = t - window..t;
    let w = window as f64;

    let mut mu = vec![0.0; n];
    for r in rows.clone() {
        for (j, m) in mu.iter_mut().enumerate() {
            *m += returns.values[(r, j)];
        }
    }
    mu.iter_mut().for_each(|m| *m /= w);

    let mut sigma = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for r in rows.clone() {
                acc += (returns.values[(r, i)] - mu[i]) * (returns.values[(r, j)] - mu[j]);
            }
            let c = acc / (w - 1.0);
            sigma[(i, j)] = c;
            sigma[(j, i)] = c;
        }
    }
    let ridge = RIDGE_FACTOR * sigma.trace() / n as f64;
    for i in 0..n {
        sigma[(i, i)] += ridge;
    }
    Ok(MarketSnapshot { t, mu, sigma })
}

fn mean_and_sample_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    // constant columns are exactly zero-volatility, independent of rounding
    if xs.iter().all(|x| *x == xs[0]) {
        return (xs[0], 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Annualized historical volatility and Sharpe ratio per asset.
pub fn asset_stats(returns: &ReturnMatrix, periods_per_year: u32) -> Result<Vec<AssetStats>> {
    if returns.n_rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "asset statistics need at least 2 return rows, got {}",
            returns.n_rows()
        )));
    }
    if periods_per_year == 0 {
        return Err(Error::config("periods_per_year", "must be positive"));
    }
    let ppy = f64::from(periods_per_year);
    Ok((0..returns.n_assets())
        .map(|j| {
            let (mean, sd) = mean_and_sample_std(&returns.column(j));
            let vol = sd * ppy.sqrt();
            AssetStats {
                asset_id: returns.assets[j].clone(),
                hist_volatility: vol,
                hist_sharpe: (vol > 0.0).then(|| mean * ppy / vol),
            }
        })
        .collect())
}

/// Ordering for "best Sharpe first": defined Sharpes descending, undefined
/// last, ties by ascending asset id.
pub fn sharpe_cmp(a: &AssetStats, b: &AssetStats) -> Ordering {
    match (a.hist_sharpe, b.hist_sharpe) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then_with(|| a.asset_id.cmp(&b.asset_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    fn series(id: &str, prices: &[f64]) -> PriceSeries {
        let dates = (0..prices.len())
            .map(|i| d("2020-01-01") + chrono::Days::new(i as u64))
            .collect();
        PriceSeries::new(id, dates, prices.to_vec()).unwrap()
    }

    fn returns_from_columns(cols: &[Vec<f64>]) -> ReturnMatrix {
        let rows = cols[0].len();
        let mut values = Matrix::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                values[(i, j)] = *v;
            }
        }
        ReturnMatrix {
            assets: (0..cols.len()).map(|j| format!("A{j}")).collect(),
            dates: (0..rows)
                .map(|i| d("2020-01-01") + chrono::Days::new(i as u64))
                .collect(),
            values,
        }
    }

    #[test]
    fn parses_full_table() {
        let mut csv = String::from("date,A,B,C\n");
        let start = d("2019-01-01");
        for i in 0..252u64 {
            let day = start + chrono::Days::new(i);
            csv.push_str(&format!("{day},{},{},{}\n", 100.0 + i as f64, 50.0, 10.0 + 0.1 * i as f64));
        }
        let table = parse_prices(csv.as_bytes()).unwrap();
        assert_eq!(table.series.len(), 3);
        assert!(table.series.iter().all(|s| s.len() == 252));
        assert_eq!(table.dropped_rows, 0);
        assert_eq!(table.series[1].asset_id, "B");
    }

    #[test]
    fn nan_row_is_dropped() {
        let mut csv = String::from("date,A,B,C\n");
        let start = d("2019-01-01");
        for i in 0..252u64 {
            let day = start + chrono::Days::new(i);
            let b = if i == 9 { "NaN".to_string() } else { "50".to_string() };
            csv.push_str(&format!("{day},100,{b},10\n"));
        }
        let table = parse_prices(csv.as_bytes()).unwrap();
        assert_eq!(table.dropped_rows, 1);
        assert!(table.series.iter().all(|s| s.len() == 251));
    }

    #[test]
    fn empty_cell_counts_as_missing() {
        let csv = "date,A,B\n2020-01-01,1,2\n2020-01-02,,2\n2020-01-03,1.5,2.5\n";
        let table = parse_prices(csv.as_bytes()).unwrap();
        assert_eq!(table.dropped_rows, 1);
        assert_eq!(table.series[0].prices, vec![1.0, 1.5]);
    }

    #[test]
    fn zero_price_names_asset() {
        let csv = "date,A,B\n2020-01-01,1,2\n2020-01-02,1,0.0\n";
        match parse_prices(csv.as_bytes()) {
            Err(Error::Data { asset, date, .. }) => {
                assert_eq!(asset, "B");
                assert_eq!(date, "2020-01-02");
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "date,A,B\n2020-01-01,1,2\n2020-01-02,1,abc\n";
        match parse_prices(csv.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let csv = "date,A,B\n2020-01-01,1,2\n2020-01-02,1\n";
        assert!(matches!(parse_prices(csv.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let csv = "date,A\n2020-13-01,1\n";
        assert!(matches!(parse_prices(csv.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn too_few_dates() {
        let csv = "date,A\n2020-01-01,1\n2020-01-02,\n";
        assert!(matches!(parse_prices(csv.as_bytes()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn log_return_examples() {
        let r = log_returns(&[series("A", &[100.0, 110.0])]).unwrap();
        assert!((r.values[(0, 0)] - 0.09531017980432493).abs() < 1e-15);
        let r = log_returns(&[series("A", &[50.0, 50.0, 50.0])]).unwrap();
        assert_eq!(r.column(0), vec![0.0, 0.0]);
        let r = log_returns(&[series("A", &[100.0, 50.0])]).unwrap();
        assert!((r.values[(0, 0)] + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn misaligned_series_rejected() {
        let a = series("A", &[1.0, 2.0, 3.0]);
        let mut b = series("B", &[1.0, 2.0, 3.0]);
        b.dates[2] = d("2021-01-01");
        assert!(matches!(log_returns(&[a, b]), Err(Error::Alignment(_))));
    }

    #[test]
    fn snapshot_degenerate_zero_returns() {
        let r = returns_from_columns(&[vec![0.0; 10], vec![0.0; 10]]);
        let s = estimate_snapshot(&r, 10, 5).unwrap();
        assert_eq!(s.mu, vec![0.0, 0.0]);
        assert!(s.sigma.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn snapshot_single_asset_hand_value() {
        let r = returns_from_columns(&[vec![0.01, 0.03]]);
        let s = estimate_snapshot(&r, 2, 2).unwrap();
        assert!((s.mu[0] - 0.02).abs() < 1e-15);
        let var = 0.0002;
        let expected = var + RIDGE_FACTOR * var;
        assert!((s.sigma[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn snapshot_perfect_correlation() {
        let col = vec![0.01, -0.02, 0.005, 0.03, -0.01];
        let r = returns_from_columns(&[col.clone(), col]);
        let s = estimate_snapshot(&r, 5, 5).unwrap();
        let ridge = RIDGE_FACTOR * s.sigma.trace() / 2.0 / (1.0 + RIDGE_FACTOR);
        assert!((s.sigma[(0, 1)] - (s.sigma[(0, 0)] - ridge)).abs() < 1e-18);
    }

    #[test]
    fn snapshot_needs_history() {
        let r = returns_from_columns(&[vec![0.0; 10]]);
        assert!(matches!(
            estimate_snapshot(&r, 3, 5),
            Err(Error::InsufficientHistory { t: 3, window: 5 })
        ));
        assert!(estimate_snapshot(&r, 11, 5).is_err());
        assert!(estimate_snapshot(&r, 5, 1).is_err());
    }

    #[test]
    fn stats_degenerate_columns() {
        let r = returns_from_columns(&[vec![0.0; 20], vec![0.001; 252]
            .into_iter()
            .take(20)
            .collect()]);
        let stats = asset_stats(&r, 252).unwrap();
        for s in &stats {
            assert_eq!(s.hist_volatility, 0.0);
            assert_eq!(s.hist_sharpe, None);
        }
    }

    #[test]
    fn stats_alternating_column() {
        let n = 100;
        let col: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        // oracle: direct sample standard deviation
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let stats = asset_stats(&returns_from_columns(&[col]), 252).unwrap();
        let expected = 0.01 * (252.0 * n as f64 / (n as f64 - 1.0)).sqrt();
        assert!((stats[0].hist_volatility - expected).abs() < 1e-12);
        assert!((stats[0].hist_volatility - sd * 252f64.sqrt()).abs() < 1e-12);
        assert!(stats[0].hist_sharpe.unwrap().abs() < 1e-12);
    }

    #[test]
    fn undefined_sharpe_sorts_last() {
        let mk = |id: &str, s: Option<f64>| AssetStats {
            asset_id: id.into(),
            hist_volatility: 0.1,
            hist_sharpe: s,
        };
        let mut v = [mk("a", None), mk("b", Some(-1.0)), mk("c", Some(2.0)), mk("d", Some(2.0))];
        v.sort_by(sharpe_cmp);
        let ids: Vec<_> = v.iter().map(|s| s.asset_id.as_str()).collect();
        assert_eq!(ids, ["c", "d", "b", "a"]);
    }
}
