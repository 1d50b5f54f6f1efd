#![allow(dead_code)]

use chrono::NaiveDate;
use minhold::linalg::Matrix;
use minhold::market_data::MarketSnapshot;
use rand::Rng;

/// Random PSD covariance `A Aᵀ / n + δ I` with entries of order `scale`.
pub fn random_covariance<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Matrix {
    let a: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..n).map(|k| a[i][k] * a[j][k]).sum();
            s[(i, j)] = scale * v / n as f64;
        }
        s[(i, i)] += scale * 0.05;
    }
    s
}

pub fn random_snapshot<R: Rng>(rng: &mut R, t: usize, n: usize) -> MarketSnapshot {
    MarketSnapshot {
        t,
        mu: (0..n).map(|_| rng.random_range(-0.02..0.02)).collect(),
        sigma: random_covariance(rng, n, 4e-4),
    }
}

pub fn dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    (0..n).map(|i| start + chrono::Duration::days(i as i64)).collect()
}

/// All bit vectors of length `n` as 0/1 vectors, index 0 first.
pub fn all_bit_vectors(n: usize) -> Vec<Vec<u8>> {
    (0..1u64 << n)
        .map(|v| (0..n).map(|i| ((v >> (n - 1 - i)) & 1) as u8).collect())
        .collect()
}
pub mod greedy;
