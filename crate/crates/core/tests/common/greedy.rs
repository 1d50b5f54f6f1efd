//! Exhaustive Sharpe-greedy trajectory, written without the library's
//! ranking, decoding, pool or feasibility code.

use std::cmp::Ordering;

use minhold::market_data::MarketSnapshot;

pub struct Instance<'a> {
    pub snapshots: &'a [MarketSnapshot],
    pub bit_depth: usize,
    pub bundles: u32,
    pub hold: usize,
    pub gamma: f64,
    /// Budget penalty per step.
    pub rho: &'a [f64],
}

fn units_of(index: u64, n_assets: usize, depth: usize) -> (Vec<u32>, Vec<u8>) {
    let n_bits = n_assets * depth;
    let bits: Vec<u8> = (0..n_bits).map(|i| ((index >> (n_bits - 1 - i)) & 1) as u8).collect();
    let units = (0..n_assets)
        .map(|a| (0..depth).map(|q| u32::from(bits[a * depth + q]) << q).sum())
        .collect();
    (units, bits)
}

fn ret_var(w: &[f64], s: &MarketSnapshot) -> (f64, f64) {
    let n = w.len();
    let mut ret = 0.0;
    let mut var = 0.0;
    for i in 0..n {
        ret += s.mu[i] * w[i];
    }
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += s.sigma[(i, j)] * w[j];
        }
        var += w[i] * row;
    }
    (ret, var)
}

/// (tier, value): riskless gain > finite Sharpe > riskless loss.
fn key(units: &[u32], bundles: u32, s: &MarketSnapshot) -> (u8, f64) {
    let total: u32 = units.iter().sum();
    if total > 0 {
        let unit: Vec<f64> = units.iter().map(|&u| f64::from(u) / f64::from(total)).collect();
        let (r, v) = ret_var(&unit, s);
        if v > 0.0 {
            return (1, r / v.sqrt());
        }
    }
    let raw: Vec<f64> = units.iter().map(|&u| f64::from(u) / f64::from(bundles)).collect();
    let (r, _) = ret_var(&raw, s);
    if r > 0.0 {
        (2, r)
    } else {
        (0, r)
    }
}

fn cost(units: &[u32], inst: &Instance, t: usize) -> f64 {
    let s = &inst.snapshots[t];
    let w: Vec<f64> = units.iter().map(|&u| f64::from(u) / f64::from(inst.bundles)).collect();
    let (r, v) = ret_var(&w, s);
    let budget: f64 = w.iter().sum::<f64>() - 1.0;
    -r + 0.5 * inst.gamma * v + inst.rho[t] * budget * budget
}

/// Unit holdings per step.
pub fn greedy(inst: &Instance) -> Vec<Vec<u32>> {
    let n = inst.snapshots[0].mu.len();
    let n_bits = n * inst.bit_depth;
    let mut out: Vec<Vec<u32>> = Vec::new();
    let mut bought: Vec<Option<usize>> = vec![None; n];
    for t in 0..inst.snapshots.len() {
        let mut cands: Vec<(Vec<u32>, Vec<u8>, (u8, f64), f64)> = (0..1u64 << n_bits)
            .map(|v| {
                let (u, b) = units_of(v, n, inst.bit_depth);
                let k = key(&u, inst.bundles, &inst.snapshots[t]);
                let c = cost(&u, inst, t);
                (u, b, k, c)
            })
            .collect();
        cands.sort_by(|a, b| {
            b.2 .0
                .cmp(&a.2 .0)
                .then(b.2 .1.partial_cmp(&a.2 .1).unwrap_or(Ordering::Equal))
                .then(a.3.partial_cmp(&b.3).unwrap_or(Ordering::Equal))
                .then(a.1.cmp(&b.1))
        });
        let prev = out.last().cloned();
        let feasible = |u: &Vec<u32>| match &prev {
            None => true,
            Some(p) => (0..n).all(|a| u[a] >= p[a] || bought[a].is_none_or(|s| t - s >= inst.hold)),
        };
        let pick = cands
            .iter()
            .map(|c| c.0.clone())
            .find(|u| feasible(u))
            .unwrap_or_else(|| prev.clone().unwrap_or_else(|| vec![0; n]));
        for a in 0..n {
            let before = prev.as_ref().map_or(0, |p| p[a]);
            if pick[a] > before {
                bought[a] = Some(t);
            }
        }
        out.push(pick);
    }
    out
}
