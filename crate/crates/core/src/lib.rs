//! Dynamic portfolio optimization with a minimal holding period.
//!
//! Each trading step's penalized mean-variance cost is encoded as a QUBO over
//! discretized holdings, its low-energy subspace is sampled, and a
//! trajectory is assembled by accepting, step by step, the best-Sharpe
//! sample that does not sell any position before the holding period ends.
//!
//! ```
//! use minhold::linalg::Matrix;
//! use minhold::qubo::{brute_force_min, build_step_qubo, decode, Encoding, StepCostParams};
//!
//! let enc = Encoding::new(2, 2, 5).unwrap();
//! let sigma = Matrix::from_rows(&[vec![0.04, 0.0], vec![0.0, 0.01]]).unwrap();
//! let params = StepCostParams::with_auto_rho(vec![0.02, 0.01], sigma, 1.0, 5).unwrap();
//! let qubo = build_step_qubo(&params, &enc).unwrap();
//! let (bits, _) = brute_force_min(&qubo).unwrap();
//! assert!(decode(&bits, &enc).unwrap().is_normalized());
//! ```

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod linalg;
pub mod market_data;
pub mod pipeline;
pub mod qubo;
pub mod reduction;
pub mod sampler;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
