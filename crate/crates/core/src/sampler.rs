//! Low-energy sampling of a [`QuboProblem`].
//!
//! [`Sampler`] is the seam where an annealing device would plug in; the
//! shipped implementation is a classical single-flip Metropolis annealer.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qubo::{decode, enumerate_energies, Bits, Encoding, Holdings, QuboProblem};

/// Problem in, deduplicated pool out. `stream` lets callers draw distinct
/// but reproducible pools for the same problem (e.g. one per trading step).
pub trait Sampler: Send + Sync {
    fn sample(&self, problem: &QuboProblem, stream: u64) -> Result<SamplePool>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub bits: Bits,
    pub energy: f64,
    pub multiplicity: u32,
}

/// Distinct states sorted by ascending energy, ties by bit-vector value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SamplePool {
    entries: Vec<PoolEntry>,
}

impl SamplePool {
    /// Deduplicates raw reads and evaluates each distinct state once.
    pub fn from_states(problem: &QuboProblem, states: impl IntoIterator<Item = Bits>) -> Self {
        let mut counts: BTreeMap<Bits, u32> = BTreeMap::new();
        for s in states {
            *counts.entry(s).or_default() += 1;
        }
        let mut entries: Vec<PoolEntry> = counts
            .into_iter()
            .map(|(bits, multiplicity)| PoolEntry {
                energy: problem.energy(&bits),
                bits,
                multiplicity,
            })
            .collect();
        entries.sort_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.bits.cmp(&b.bits)));
        Self { entries }
    }

    pub fn from_entries(mut entries: Vec<PoolEntry>) -> Self {
        entries.sort_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.bits.cmp(&b.bits)));
        entries.dedup_by(|a, b| {
            if a.bits == b.bits {
                b.multiplicity += a.multiplicity;
                true
            } else {
                false
            }
        });
        Self { entries }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_energy(&self) -> Option<f64> {
        self.entries.first().map(|e| e.energy)
    }

    pub fn total_reads(&self) -> u64 {
        self.entries.iter().map(|e| u64::from(e.multiplicity)).sum()
    }

    /// One line per entry: `energy multiplicity bitstring`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(out, "{} {} {}", e.energy, e.multiplicity, e.bits)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub n_reads: usize,
    pub sweeps: usize,
    /// `(β_initial, β_final)`; `None` scales the defaults by `1/max|q_ij|`.
    pub beta_range: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_reads: 512,
            sweeps: 1000,
            beta_range: None,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_reads == 0 {
            return Err(Error::config("sampler.n_reads", "must be at least 1"));
        }
        if self.sweeps == 0 {
            return Err(Error::config("sampler.sweeps", "must be at least 1"));
        }
        if let Some((lo, hi)) = self.beta_range {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::config(
                    "sampler.beta",
                    format!("need 0 < beta_initial < beta_final, got ({lo}, {hi})"),
                ));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_BETA_INITIAL: f64 = 0.1;
pub const DEFAULT_BETA_FINAL: f64 = 50.0;

const MAX_EXPONENT: f64 = 30.0;

/// Single-bit-flip Metropolis annealing with a geometric β schedule.
#[derive(Debug, Clone)]
pub struct SimulatedAnnealer {
    config: SamplerConfig,
}

impl SimulatedAnnealer {
    pub fn new(config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    fn schedule(&self, problem: &QuboProblem) -> Vec<f64> {
        let (lo, hi) = self.config.beta_range.unwrap_or_else(|| {
            let scale = problem.q().max_abs();
            let scale = if scale > 0.0 { scale } else { 1.0 };
            (DEFAULT_BETA_INITIAL / scale, DEFAULT_BETA_FINAL / scale)
        });
        let sweeps = self.config.sweeps;
        if sweeps == 1 {
            return vec![hi];
        }
        let ratio = hi / lo;
        (0..sweeps)
            .map(|s| lo * ratio.powf(s as f64 / (sweeps - 1) as f64))
            .collect()
    }

    fn read(&self, problem: &QuboProblem, betas: &[f64], stream: u64, read: u64) -> Bits {
        let n = problem.n_bits();
        let q = problem.q().as_slice();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.config.seed ^ splitmix64(stream)));
        rng.set_stream(read);

        let mut x: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
        let mut field = vec![0.0; n];
        for (i, f) in field.iter_mut().enumerate() {
            let row = &q[i * n..(i + 1) * n];
            *f = row.iter().zip(&x).filter(|(_, b)| **b == 1).map(|(v, _)| v).sum();
        }

        for &beta in betas {
            for k in 0..n {
                let qkk = q[k * n + k];
                let delta = if x[k] == 1 {
                    qkk - 2.0 * field[k]
                } else {
                    qkk + 2.0 * field[k]
                };
                let energy = beta * delta;
                // past MAX_EXPONENT the acceptance probability is below 1e-13; skip the draw
                if energy <= 0.0 || (energy < MAX_EXPONENT && rng.random::<f64>() < (-energy).exp()) {
                    let step = if x[k] == 1 { -1.0 } else { 1.0 };
                    x[k] ^= 1;
                    let col = &q[k * n..(k + 1) * n];
                    for (f, v) in field.iter_mut().zip(col) {
                        *f += step * v;
                    }
                }
            }
        }
        Bits::new(x).expect("0/1 entries")
    }
}

impl Sampler for SimulatedAnnealer {
    fn sample(&self, problem: &QuboProblem, stream: u64) -> Result<SamplePool> {
        if problem.n_bits() == 0 {
            return Err(Error::size("cannot sample a problem with no bits"));
        }
        let betas = self.schedule(problem);
        let states: Vec<Bits> = (0..self.config.n_reads as u64)
            .into_par_iter()
            .map(|r| self.read(problem, &betas, stream, r))
            .collect();
        Ok(SamplePool::from_states(problem, states))
    }
}

/// Returns every state of the problem; only for small bit counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExhaustiveSampler;

impl Sampler for ExhaustiveSampler {
    fn sample(&self, problem: &QuboProblem, _stream: u64) -> Result<SamplePool> {
        let entries = enumerate_energies(problem)?
            .into_iter()
            .map(|(bits, energy)| PoolEntry {
                bits,
                energy,
                multiplicity: 1,
            })
            .collect();
        Ok(SamplePool::from_entries(entries))
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<S> {
    pub bits: Bits,
    pub holdings: Holdings,
    pub energy: f64,
    pub score: S,
}

/// Decodes and scores every pool entry; returns up to `limit` candidates by
/// descending score, then ascending energy, then bit-vector value.
pub fn pool_top_by<S, F>(pool: &SamplePool, enc: &Encoding, limit: usize, score: F) -> Result<Vec<Candidate<S>>>
where
    S: PartialOrd,
    F: Fn(&Holdings) -> S,
{
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if limit == 0 {
        return Err(Error::size("candidate limit must be positive"));
    }
    let mut candidates = pool
        .entries()
        .iter()
        .map(|e| {
            let holdings = decode(&e.bits, enc)?;
            Ok(Candidate {
                score: score(&holdings),
                holdings,
                bits: e.bits.clone(),
                energy: e.energy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.energy.total_cmp(&b.energy))
            .then_with(|| a.bits.cmp(&b.bits))
    });
    candidates.truncate(limit);
    Ok(candidates)
}
