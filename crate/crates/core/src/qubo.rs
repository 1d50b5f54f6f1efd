//! Binary encoding of discretized holdings and the per-step QUBO.
//!
//! Asset `n` owns bits `n·N_q .. (n+1)·N_q`; bit `q` of an asset carries
//! weight `2^q / K`. The per-step cost
//!
//! ```text
//! h(ω) = -μᵀω + (γ/2) ωᵀΣω + ρ (Σ_n ω_n - 1)²
//! ```
//!
//! is quadratic in the bits, so it is stored as a symmetric matrix `Q` with
//! linear terms on the diagonal plus a constant offset.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Default ceiling on `N_a · N_q` for an encoding.
pub const DEFAULT_MAX_BITS: usize = 4096;
/// Exhaustive enumeration refuses anything larger.
pub const BRUTE_FORCE_MAX_BITS: usize = 24;

/// A bit vector in asset-major, qubit-minor order. Ordering is
/// lexicographic, i.e. the integer value with `x[0]` as the most significant
/// bit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bits(Vec<u8>);

impl Bits {
    pub fn zeros(n: usize) -> Self {
        Bits(vec![0; n])
    }

    /// Accepts only 0/1 entries.
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(Error::size(format!("bit values must be 0 or 1, got {b}")));
        }
        Ok(Bits(bits))
    }

    /// Bits of `value` with `x[0]` most significant.
    pub fn from_index(value: u64, n: usize) -> Self {
        Bits((0..n).map(|i| ((value >> (n - 1 - i)) & 1) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b == 1).map(|(i, _)| i)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Bits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::size(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encoding {
    n_assets: usize,
    bit_depth: u32,
    total_bundles: u32,
}

impl Encoding {
    pub fn new(n_assets: usize, bit_depth: u32, total_bundles: u32) -> Result<Self> {
        Self::with_bit_limit(n_assets, bit_depth, total_bundles, DEFAULT_MAX_BITS)
    }

    pub fn with_bit_limit(n_assets: usize, bit_depth: u32, total_bundles: u32, max_bits: usize) -> Result<Self> {
        if n_assets == 0 {
            return Err(Error::size("encoding needs at least one asset"));
        }
        if bit_depth == 0 || bit_depth > 31 {
            return Err(Error::size(format!("bit depth must be in 1..=31, got {bit_depth}")));
        }
        if total_bundles == 0 {
            return Err(Error::size("total bundle count K must be at least 1"));
        }
        let bits = n_assets * bit_depth as usize;
        if bits > max_bits {
            return Err(Error::size(format!(
                "{bits} bits exceed the solver limit of {max_bits}"
            )));
        }
        Ok(Self {
            n_assets,
            bit_depth,
            total_bundles,
        })
    }

    /// Diversification variant: the largest bit depth with
    /// `2^N_q - 1 ≤ cap · K`, so no asset can exceed `cap` of the budget.
    pub fn diversified(n_assets: usize, total_bundles: u32, cap: f64) -> Result<Self> {
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(Error::size(format!("diversification cap must be positive, got {cap}")));
        }
        let limit = cap * f64::from(total_bundles);
        let mut depth = 0u32;
        while depth < 31 && ((1u64 << (depth + 1)) - 1) as f64 <= limit {
            depth += 1;
        }
        if depth == 0 {
            return Err(Error::size(format!(
                "cap {cap} with K = {total_bundles} leaves no room for a single bundle"
            )));
        }
        Self::new(n_assets, depth, total_bundles)
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn total_bundles(&self) -> u32 {
        self.total_bundles
    }

    pub fn n_bits(&self) -> usize {
        self.n_assets * self.bit_depth as usize
    }

    /// Largest integer holding of one asset, `2^N_q - 1`.
    pub fn max_units(&self) -> u32 {
        (1u32 << self.bit_depth) - 1
    }

    pub fn max_weight_per_asset(&self) -> f64 {
        f64::from(self.max_units()) / f64::from(self.total_bundles)
    }

    /// Whether some bit vector decodes to `Σ ω = 1`.
    pub fn admits_normalized(&self) -> bool {
        self.n_assets as u64 * u64::from(self.max_units()) >= u64::from(self.total_bundles)
    }

    fn bit_weight(&self, q: u32) -> f64 {
        f64::from(1u32 << q) / f64::from(self.total_bundles)
    }
}

/// Discretized holdings: `ω_n = units_n / K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Holdings {
    units: Vec<u32>,
    bundles: u32,
}

impl Holdings {
    pub fn new(units: Vec<u32>, bundles: u32) -> Result<Self> {
        if bundles == 0 {
            return Err(Error::size("bundle count must be positive"));
        }
        Ok(Self { units, bundles })
    }

    pub fn zeros(n_assets: usize, bundles: u32) -> Self {
        Self {
            units: vec![0; n_assets],
            bundles,
        }
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    pub fn bundles(&self) -> u32 {
        self.bundles
    }

    pub fn n_assets(&self) -> usize {
        self.units.len()
    }

    pub fn weight(&self, n: usize) -> f64 {
        f64::from(self.units[n]) / f64::from(self.bundles)
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.units.len()).map(|n| self.weight(n)).collect()
    }

    pub fn total_units(&self) -> u64 {
        self.units.iter().map(|u| u64::from(*u)).sum()
    }

    pub fn is_normalized(&self) -> bool {
        self.total_units() == u64::from(self.bundles)
    }
}

pub fn decode(bits: &Bits, enc: &Encoding) -> Result<Holdings> {
    if bits.len() != enc.n_bits() {
        return Err(Error::size(format!(
            "bit vector has {} entries, encoding expects {}",
            bits.len(),
            enc.n_bits()
        )));
    }
    let depth = enc.bit_depth as usize;
    let units = bits
        .as_slice()
        .chunks(depth)
        .map(|asset| {
            asset
                .iter()
                .enumerate()
                .map(|(q, b)| u32::from(*b) << q)
                .sum()
        })
        .collect();
    Holdings::new(units, enc.total_bundles)
}

/// Inverse of [`decode`] for representable holdings.
pub fn encode(holdings: &Holdings, enc: &Encoding) -> Result<Bits> {
    if holdings.n_assets() != enc.n_assets() || holdings.bundles() != enc.total_bundles() {
        return Err(Error::size("holdings do not match the encoding"));
    }
    let depth = enc.bit_depth;
    let mut bits = Vec::with_capacity(enc.n_bits());
    for &u in holdings.units() {
        if u > enc.max_units() {
            return Err(Error::size(format!(
                "holding of {u} bundles exceeds the {} representable",
                enc.max_units()
            )));
        }
        bits.extend((0..depth).map(|q| ((u >> q) & 1) as u8));
    }
    Ok(Bits(bits))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepCostParams {
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    /// Risk aversion.
    pub gamma: f64,
    /// Budget penalty weight.
    pub rho: f64,
}

impl StepCostParams {
    pub fn new(mu: Vec<f64>, sigma: Matrix, gamma: f64, rho: f64) -> Result<Self> {
        let p = Self { mu, sigma, gamma, rho };
        p.validate()?;
        Ok(p)
    }

    /// Uses [`auto_rho`] for the penalty weight.
    pub fn with_auto_rho(mu: Vec<f64>, sigma: Matrix, gamma: f64, bundles: u32) -> Result<Self> {
        let rho = auto_rho(&mu, &sigma, gamma, bundles);
        Self::new(mu, sigma, gamma, rho)
    }

    fn validate(&self) -> Result<()> {
        let n = self.mu.len();
        if !self.sigma.is_square() || self.sigma.rows() != n {
            return Err(Error::size(format!(
                "covariance is {}x{} for {n} returns",
                self.sigma.rows(),
                self.sigma.cols()
            )));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::config("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        if !self.rho.is_finite() || self.rho < 0.0 {
            return Err(Error::config("rho", format!("must be finite and >= 0, got {}", self.rho)));
        }
        Ok(())
    }

    fn check_dims(&self, n_assets: usize) -> Result<()> {
        self.validate()?;
        if self.mu.len() != n_assets {
            return Err(Error::size(format!(
                "cost has {} assets, expected {n_assets}",
                self.mu.len()
            )));
        }
        Ok(())
    }
}

/// Budget penalty large enough that, whenever a normalized decoding exists,
/// every non-normalized bit vector has strictly higher energy than the best
/// normalized one: `2K (max|μ| + 2γ max|Σ_ij|)`.
///
/// A single-bundle move changes the unpenalized cost by at most
/// `(max|μ| + γ max|Σ| (max(s,1) + 1/(2K))) / K` while the penalty grows by
/// `ρ/K²` per unit distance from the budget, which this bound dominates.
pub fn auto_rho(mu: &[f64], sigma: &Matrix, gamma: f64, bundles: u32) -> f64 {
    let max_mu = mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_sigma = sigma.max_abs();
    let rho = 2.0 * f64::from(bundles) * (max_mu + 2.0 * gamma * max_sigma);
    if rho > 0.0 {
        rho
    } else {
        1.0
    }
}

/// Reference evaluation of the per-step cost, independent of any QUBO.
pub fn step_cost(holdings: &Holdings, params: &StepCostParams) -> f64 {
    let w = holdings.weights();
    let budget = w.iter().sum::<f64>() - 1.0;
    -dot(&params.mu, &w) + 0.5 * params.gamma * params.sigma.quad_form(&w) + params.rho * budget * budget
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    q: Matrix,
    offset: f64,
}

impl QuboProblem {
    /// Symmetrizes `q`; `xᵀqx` is unchanged by this.
    pub fn new(q: Matrix, offset: f64) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::size(format!("Q must be square, got {}x{}", q.rows(), q.cols())));
        }
        let n = q.rows();
        let mut sym = q.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (q[(i, j)] + q[(j, i)]);
                sym[(i, j)] = v;
                sym[(j, i)] = v;
            }
        }
        Ok(Self { q: sym, offset })
    }

    pub fn n_bits(&self) -> usize {
        self.q.rows()
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `xᵀQx + offset`.
    pub fn energy(&self, x: &Bits) -> f64 {
        debug_assert_eq!(x.len(), self.n_bits());
        let ones: Vec<usize> = x.ones().collect();
        let mut e = 0.0;
        for &i in &ones {
            let row = self.q.row(i);
            for &j in &ones {
                e += row[j];
            }
        }
        e + self.offset
    }

    /// Upper-triangular form `U` with `xᵀUx = xᵀQx`.
    pub fn to_upper_triangular(&self) -> Matrix {
        let n = self.n_bits();
        let mut u = Matrix::zeros(n, n);
        for i in 0..n {
            u[(i, i)] = self.q[(i, i)];
            for j in (i + 1)..n {
                u[(i, j)] = self.q[(i, j)] + self.q[(j, i)];
            }
        }
        u
    }

    /// Writes `# bits=<n> offset=<v>` followed by `i j value` for every
    /// nonzero upper-triangular coefficient.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# bits={} offset={}", self.n_bits(), self.offset)?;
        let u = self.to_upper_triangular();
        for i in 0..self.n_bits() {
            for j in i..self.n_bits() {
                let v = u[(i, j)];
                if v != 0.0 {
                    writeln!(out, "{i} {j} {v}")?;
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ASCII output")
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let parse_err = |line: usize, message: String| Error::Parse {
            line: line as u64 + 1,
            message,
        };
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "missing header".into()))?;
        let header = header.map_err(|e| parse_err(0, e.to_string()))?;
        let rest = header
            .strip_prefix('#')
            .ok_or_else(|| parse_err(0, "header must start with `#`".into()))?;
        let mut bits = None;
        let mut offset = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("bits=") {
                bits = Some(v.parse::<usize>().map_err(|e| parse_err(0, e.to_string()))?);
            } else if let Some(v) = field.strip_prefix("offset=") {
                offset = Some(v.parse::<f64>().map_err(|e| parse_err(0, e.to_string()))?);
            }
        }
        let n = bits.ok_or_else(|| parse_err(0, "header lacks bits=".into()))?;
        let offset = offset.ok_or_else(|| parse_err(0, "header lacks offset=".into()))?;
        let mut q = Matrix::zeros(n, n);
        for (no, line) in lines {
            let line = line.map_err(|e| parse_err(no, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(parse_err(no, format!("expected `i j value`, got `{line}`")));
            }
            let i: usize = parts[0].parse().map_err(|_| parse_err(no, format!("bad index `{}`", parts[0])))?;
            let j: usize = parts[1].parse().map_err(|_| parse_err(no, format!("bad index `{}`", parts[1])))?;
            let v: f64 = parts[2].parse().map_err(|_| parse_err(no, format!("bad value `{}`", parts[2])))?;
            if i > j || j >= n {
                return Err(parse_err(no, format!("entry ({i}, {j}) outside the upper triangle of {n} bits")));
            }
            if i == j {
                q[(i, i)] = v;
            } else {
                q[(i, j)] = 0.5 * v;
                q[(j, i)] = 0.5 * v;
            }
        }
        QuboProblem::new(q, offset)
    }
}

/// QUBO whose energy equals [`step_cost`] of the decoded holdings.
pub fn build_step_qubo(params: &StepCostParams, enc: &Encoding) -> Result<QuboProblem> {
    params.check_dims(enc.n_assets())?;
    let n_bits = enc.n_bits();
    let depth = enc.bit_depth as usize;
    let asset = |i: usize| i / depth;
    let coeff: Vec<f64> = (0..n_bits).map(|i| enc.bit_weight((i % depth) as u32)).collect();
    let sigma = |a: usize, b: usize| 0.5 * (params.sigma[(a, b)] + params.sigma[(b, a)]);

    let mut q = Matrix::zeros(n_bits, n_bits);
    for i in 0..n_bits {
        for j in i..n_bits {
            let mut v = (0.5 * params.gamma * sigma(asset(i), asset(j)) + params.rho) * coeff[i] * coeff[j];
            if i == j {
                // x² = x: the linear terms live on the diagonal
                v += -params.mu[asset(i)] * coeff[i] - 2.0 * params.rho * coeff[i];
            }
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    debug_assert_eq!(q.asymmetry(), 0.0);
    Ok(QuboProblem { q, offset: params.rho })
}

fn check_brute_force_size(problem: &QuboProblem) -> Result<()> {
    if problem.n_bits() > BRUTE_FORCE_MAX_BITS {
        return Err(Error::size(format!(
            "exhaustive search refused for {} bits (limit {BRUTE_FORCE_MAX_BITS})",
            problem.n_bits()
        )));
    }
    Ok(())
}

/// Exact global minimizer by Gray-code enumeration. Energies within a
/// relative `1e-12` are treated as ties and resolved towards the smaller bit
/// vector; the returned energy is re-evaluated directly.
pub fn brute_force_min(problem: &QuboProblem) -> Result<(Bits, f64)> {
    check_brute_force_size(problem)?;
    let n = problem.n_bits();
    let q = problem.q();
    let mut x = Bits::zeros(n);
    let mut field = vec![0.0; n];
    let mut energy = problem.offset();
    let mut best = (x.clone(), energy);

    for g in 1u64..(1u64 << n) {
        let k = g.trailing_zeros() as usize;
        let xk = x.get(k);
        let delta = if xk {
            -(2.0 * field[k] - q[(k, k)])
        } else {
            2.0 * field[k] + q[(k, k)]
        };
        energy += delta;
        x.flip(k);
        let step = if xk { -1.0 } else { 1.0 };
        for (j, f) in field.iter_mut().enumerate() {
            *f += step * q[(j, k)];
        }
        let tol = 1e-12 * (1.0 + best.1.abs());
        if energy < best.1 - tol || (energy <= best.1 + tol && x < best.0) {
            best = (x.clone(), energy);
        }
    }
    let exact = problem.energy(&best.0);
    Ok((best.0, exact))
}

/// Every bit vector with its directly evaluated energy, in integer order.
pub fn enumerate_energies(problem: &QuboProblem) -> Result<Vec<(Bits, f64)>> {
    check_brute_force_size(problem)?;
    let n = problem.n_bits();
    Ok((0u64..(1u64 << n))
        .map(|v| {
            let b = Bits::from_index(v, n);
            let e = problem.energy(&b);
            (b, e)
        })
        .collect())
}
