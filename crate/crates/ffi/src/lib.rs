//! C ABI over the `minhold` core.
//!
//! Every fallible call returns an [`MhStatus`]; on failure a message is kept
//! per thread and available through [`mh_last_error_message`]. Handles are
//! opaque and owned by the caller, who releases them with the matching
//! `_free` function. Bit vectors cross the boundary as one byte per bit
//! (0 or 1) in the core's asset-major, qubit-minor order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use minhold::config::RunConfig;
use minhold::linalg::Matrix;
use minhold::pipeline::run_optimize;
use minhold::qubo::{brute_force_min, build_step_qubo, decode, Bits, Encoding, QuboProblem, StepCostParams};
use minhold::sampler::{SamplePool, Sampler, SamplerConfig, SimulatedAnnealer};
use minhold::trajectory::{verify_weights, HoldingRule};
use minhold::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Size = 3,
    Parse = 4,
    Io = 5,
    EmptyUniverse = 6,
    EmptyPool = 7,
    /// `mh_verify_weights` found an early sale.
    Violation = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> MhStatus {
    match err {
        Error::Parse { .. } => MhStatus::Parse,
        Error::Size(_) | Error::Alignment(_) | Error::InsufficientData(_) | Error::InsufficientHistory { .. } => {
            MhStatus::Size
        }
        Error::EmptyUniverse(_) => MhStatus::EmptyUniverse,
        Error::EmptyPool => MhStatus::EmptyPool,
        Error::Io { .. } => MhStatus::Io,
        Error::Config { .. } | Error::Data { .. } => MhStatus::InvalidArgument,
    }
}

fn fail(status: MhStatus, message: impl Into<String>) -> MhStatus {
    set_error(message);
    status
}

fn from_core(err: Error) -> MhStatus {
    fail(status_of(&err), err.to_string())
}

/// Runs `body`, turning panics into [`MhStatus::Panic`].
fn guard(body: impl FnOnce() -> MhStatus) -> MhStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(MhStatus::Panic, "internal panic"),
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Option<&'a mut [T]> {
    if len == 0 {
        Some(&mut [])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(p, len))
    }
}

macro_rules! some_or_null {
    ($e:expr, $what:literal) => {
        match $e {
            Some(v) => v,
            None => return fail(MhStatus::NullPointer, concat!($what, " is null")),
        }
    };
}

macro_rules! core_try {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return from_core(err),
        }
    };
}

/// A step QUBO, optionally with the encoding that produced it.
pub struct MhQubo {
    problem: QuboProblem,
    encoding: Option<Encoding>,
}

/// Deduplicated sample pool, ascending energy.
pub struct MhPool {
    pool: SamplePool,
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static, NUL-terminated crate version.
#[no_mangle]
pub extern "C" fn mh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds the per-step QUBO for `n_assets` assets. `sigma` is row-major
/// `n_assets × n_assets`. A NaN `rho` selects the automatic penalty weight.
///
/// # Safety
/// `mu` and `sigma` must point to `n_assets` and `n_assets²` doubles; `out`
/// must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn mh_qubo_build(
    mu: *const f64,
    sigma: *const f64,
    n_assets: usize,
    gamma: f64,
    rho: f64,
    bit_depth: u32,
    bundles: u32,
    out: *mut *mut MhQubo,
) -> MhStatus {
    guard(|| {
        if out.is_null() {
            return fail(MhStatus::NullPointer, "out is null");
        }
        let mu = some_or_null!(slice(mu, n_assets), "mu");
        let sigma = some_or_null!(slice(sigma, n_assets * n_assets), "sigma");
        let sigma = some_or_null!(Matrix::from_row_major(n_assets, n_assets, sigma.to_vec()), "sigma");
        let enc = core_try!(Encoding::new(n_assets, bit_depth, bundles));
        let params = if rho.is_nan() {
            core_try!(StepCostParams::with_auto_rho(mu.to_vec(), sigma, gamma, bundles))
        } else {
            core_try!(StepCostParams::new(mu.to_vec(), sigma, gamma, rho))
        };
        let problem = core_try!(build_step_qubo(&params, &enc));
        *out = Box::into_raw(Box::new(MhQubo {
            problem,
            encoding: Some(enc),
        }));
        MhStatus::Ok
    })
}

/// Wraps an arbitrary `n × n` row-major coefficient matrix (symmetrized).
///
/// # Safety
/// `q` must point to `n²` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mh_qubo_from_matrix(q: *const f64, n: usize, offset: f64, out: *mut *mut MhQubo) -> MhStatus {
    guard(|| {
        if out.is_null() {
            return fail(MhStatus::NullPointer, "out is null");
        }
        let values = some_or_null!(slice(q, n * n), "q");
        let m = some_or_null!(Matrix::from_row_major(n, n, values.to_vec()), "q");
        let problem = core_try!(QuboProblem::new(m, offset));
        *out = Box::into_raw(Box::new(MhQubo {
            problem,
            encoding: None,
        }));
        MhStatus::Ok
    })
}

/// # Safety
/// `qubo` must come from `mh_qubo_build`/`mh_qubo_from_matrix` and not be
/// used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mh_qubo_free(qubo: *mut MhQubo) {
    if !qubo.is_null() {
        drop(Box::from_raw(qubo));
    }
}

/// Number of binary variables, 0 for a null handle.
///
/// # Safety
/// `qubo` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mh_qubo_num_bits(qubo: *const MhQubo) -> usize {
    qubo.as_ref().map_or(0, |q| q.problem.n_bits())
}

unsafe fn read_bits(qubo: &MhQubo, bits: *const u8, n_bits: usize) -> Result<Bits, MhStatus> {
    if n_bits != qubo.problem.n_bits() {
        return Err(fail(
            MhStatus::Size,
            format!("{n_bits} bits given, problem has {}", qubo.problem.n_bits()),
        ));
    }
    let raw = slice(bits, n_bits).ok_or_else(|| fail(MhStatus::NullPointer, "bits is null"))?;
    Bits::new(raw.to_vec()).map_err(from_core)
}

/// # Safety
/// `qubo` must be live, `bits` must hold `n_bits` bytes, `energy` writable.
#[no_mangle]
pub unsafe extern "C" fn mh_qubo_energy(qubo: *const MhQubo, bits: *const u8, n_bits: usize, energy: *mut f64) -> MhStatus {
    guard(|| {
        let qubo = some_or_null!(qubo.as_ref(), "qubo");
        let energy = some_or_null!(energy.as_mut(), "energy");
        match read_bits(qubo, bits, n_bits) {
            Ok(b) => {
                *energy = qubo.problem.energy(&b);
                MhStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Exact minimizer by enumeration (at most 24 bits).
///
/// # Safety
/// `qubo` must be live, `out_bits` must hold `n_bits` bytes, `energy`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mh_qubo_brute_force(qubo: *const MhQubo, out_bits: *mut u8, n_bits: usize, energy: *mut f64) -> MhStatus {
    guard(|| {
        let qubo = some_or_null!(qubo.as_ref(), "qubo");
        let energy = some_or_null!(energy.as_mut(), "energy");
        if n_bits != qubo.problem.n_bits() {
            return fail(MhStatus::Size, "output buffer does not match the bit count");
        }
        let out = some_or_null!(slice_mut(out_bits, n_bits), "out_bits");
        let (bits, e) = core_try!(brute_force_min(&qubo.problem));
        out.copy_from_slice(bits.as_slice());
        *energy = e;
        MhStatus::Ok
    })
}

/// Writes the text export (header plus upper-triangular entries) as a
/// NUL-terminated string. `required` receives the size including the NUL;
/// a null or short buffer yields `BufferTooSmall` with `required` set.
///
/// # Safety
/// `qubo` must be live; `buf` must hold `buf_len` bytes or be null;
/// `required` writable.
#[no_mangle]
pub unsafe extern "C" fn mh_qubo_to_text(qubo: *const MhQubo, buf: *mut c_char, buf_len: usize, required: *mut usize) -> MhStatus {
    guard(|| {
        let qubo = some_or_null!(qubo.as_ref(), "qubo");
        let required = some_or_null!(required.as_mut(), "required");
        let text = qubo.problem.to_text();
        *required = text.len() + 1;
        if buf.is_null() || buf_len < text.len() + 1 {
            return fail(MhStatus::BufferTooSmall, format!("need {} bytes", text.len() + 1));
        }
        let out = std::slice::from_raw_parts_mut(buf.cast::<u8>(), buf_len);
        out[..text.len()].copy_from_slice(text.as_bytes());
        out[text.len()] = 0;
        MhStatus::Ok
    })
}

/// Decodes a bit vector into `n_assets` weights. Only for handles built by
/// `mh_qubo_build`.
///
/// # Safety
/// `qubo` must be live, `bits` hold `n_bits` bytes, `weights` hold
/// `n_assets` doubles.
#[no_mangle]
pub unsafe extern "C" fn mh_qubo_decode(
    qubo: *const MhQubo,
    bits: *const u8,
    n_bits: usize,
    weights: *mut f64,
    n_assets: usize,
) -> MhStatus {
    guard(|| {
        let qubo = some_or_null!(qubo.as_ref(), "qubo");
        let Some(enc) = qubo.encoding.as_ref() else {
            return fail(MhStatus::InvalidArgument, "handle has no encoding");
        };
        if n_assets != enc.n_assets() {
            return fail(MhStatus::Size, format!("{n_assets} weights requested, encoding has {}", enc.n_assets()));
        }
        let b = match read_bits(qubo, bits, n_bits) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let out = some_or_null!(slice_mut(weights, n_assets), "weights");
        let holdings = core_try!(decode(&b, enc));
        out.copy_from_slice(&holdings.weights());
        MhStatus::Ok
    })
}

/// Simulated annealing with the default geometric schedule. `stream`
/// separates independent calls that share a seed.
///
/// # Safety
/// `qubo` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mh_sample(
    qubo: *const MhQubo,
    n_reads: usize,
    sweeps: usize,
    seed: u64,
    stream: u64,
    out: *mut *mut MhPool,
) -> MhStatus {
    guard(|| {
        let qubo = some_or_null!(qubo.as_ref(), "qubo");
        if out.is_null() {
            return fail(MhStatus::NullPointer, "out is null");
        }
        let config = SamplerConfig {
            n_reads,
            sweeps,
            seed,
            ..SamplerConfig::default()
        };
        let sampler = core_try!(SimulatedAnnealer::new(config));
        let pool = core_try!(sampler.sample(&qubo.problem, stream));
        *out = Box::into_raw(Box::new(MhPool { pool }));
        MhStatus::Ok
    })
}

/// # Safety
/// `pool` must come from `mh_sample` and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn mh_pool_free(pool: *mut MhPool) {
    if !pool.is_null() {
        drop(Box::from_raw(pool));
    }
}

/// Distinct states in the pool, 0 for a null handle.
///
/// # Safety
/// `pool` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn mh_pool_len(pool: *const MhPool) -> usize {
    pool.as_ref().map_or(0, |p| p.pool.len())
}

/// Copies entry `index` (0 = lowest energy). Any of `energy` and
/// `multiplicity` may be null.
///
/// # Safety
/// `pool` must be live and `out_bits` hold `n_bits` bytes.
#[no_mangle]
pub unsafe extern "C" fn mh_pool_entry(
    pool: *const MhPool,
    index: usize,
    out_bits: *mut u8,
    n_bits: usize,
    energy: *mut f64,
    multiplicity: *mut u32,
) -> MhStatus {
    guard(|| {
        let pool = some_or_null!(pool.as_ref(), "pool");
        let Some(entry) = pool.pool.entries().get(index) else {
            return fail(MhStatus::InvalidArgument, format!("index {index} past {} entries", pool.pool.len()));
        };
        if n_bits != entry.bits.len() {
            return fail(MhStatus::Size, format!("{n_bits} bits given, entries have {}", entry.bits.len()));
        }
        let out = some_or_null!(slice_mut(out_bits, n_bits), "out_bits");
        out.copy_from_slice(entry.bits.as_slice());
        if let Some(e) = energy.as_mut() {
            *e = entry.energy;
        }
        if let Some(m) = multiplicity.as_mut() {
            *m = entry.multiplicity;
        }
        MhStatus::Ok
    })
}

/// Checks a row-major `n_steps × n_assets` weight table against a holding
/// period. Returns `Violation` and fills `step`/`asset` (either may be null)
/// for the first early sale.
///
/// # Safety
/// `weights` must hold `n_steps · n_assets` doubles.
#[no_mangle]
pub unsafe extern "C" fn mh_verify_weights(
    weights: *const f64,
    n_steps: usize,
    n_assets: usize,
    hold: usize,
    step: *mut usize,
    asset: *mut usize,
) -> MhStatus {
    guard(|| {
        let rule = core_try!(HoldingRule::new(hold));
        let flat = some_or_null!(slice(weights, n_steps * n_assets), "weights");
        let table: Vec<Vec<f64>> = if n_assets == 0 {
            vec![Vec::new(); n_steps]
        } else {
            flat.chunks(n_assets).map(<[f64]>::to_vec).collect()
        };
        match verify_weights(&table, &rule) {
            Ok(()) => MhStatus::Ok,
            Err(v) => {
                if let Some(s) = step.as_mut() {
                    *s = v.step;
                }
                if let Some(a) = asset.as_mut() {
                    *a = v.asset;
                }
                fail(
                    MhStatus::Violation,
                    format!("asset {} sold at step {}, bought at step {}", v.asset, v.step, v.purchased_at),
                )
            }
        }
    })
}

/// Runs the whole pipeline for a TOML config file, writing its artifacts.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mh_run_optimize(config_path: *const c_char) -> MhStatus {
    guard(|| {
        if config_path.is_null() {
            return fail(MhStatus::NullPointer, "config_path is null");
        }
        let Ok(path) = CStr::from_ptr(config_path).to_str() else {
            return fail(MhStatus::InvalidArgument, "config_path is not UTF-8");
        };
        let cfg = core_try!(RunConfig::load(path));
        core_try!(run_optimize(&cfg));
        MhStatus::Ok
    })
}
