//! C ABI over the `aced_hmm` library.
//!
//! Every function returns an [`AcedStatus`]. On failure the message is kept
//! per thread and can be fetched with [`aced_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use aced_hmm::abc::{distance, ensemble, run_chains, DistanceWeights};
use aced_hmm::cli::{build_setup, load_dataset};
use aced_hmm::data::{parse_config, read_samples_file, write_samples_file, RunConfig};
use aced_hmm::model::{duration_pmf, simulate_census, CensusSeries, DurationParams, InitCounts, ModelParams, ParamId, SimulationInput};
use aced_hmm::priors::{derive_transition_priors, PriorInputs};
use aced_hmm::rng::substream;
use aced_hmm::AcedError;

/// Number of learnable parameters in a parameter vector.
pub const ACED_NUM_PARAMS: usize = 17;
/// Stages in a simulated census, in the order G, I, V, R, T.
pub const ACED_NUM_STAGES: usize = 5;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcedStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Input = 3,
    Config = 4,
    Data = 5,
    Convergence = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Model parameters.
pub struct AcedParams {
    inner: ModelParams,
}

/// Simulated daily counts for G, I, V, R, T.
pub struct AcedCensus {
    inner: CensusSeries,
}

/// A list of posterior samples.
pub struct AcedSamples {
    inner: Vec<ModelParams>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &AcedError) -> AcedStatus {
    match e {
        AcedError::Domain(_) => AcedStatus::Domain,
        AcedError::Input(_) => AcedStatus::Input,
        AcedError::Config { .. } => AcedStatus::Config,
        AcedError::Data { .. } | AcedError::Csv(_) | AcedError::Json(_) => AcedStatus::Data,
        AcedError::Convergence(_) => AcedStatus::Convergence,
        AcedError::Io(_) => AcedStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Small(usize),
    Lib(AcedError),
}

impl From<AcedError> for Failure {
    fn from(e: AcedError) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AcedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AcedStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            AcedStatus::NullPointer
        }
        Ok(Err(Failure::Small(need))) => {
            set_error(format!("output buffer too small; {need} values needed"));
            AcedStatus::BufferTooSmall
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            AcedStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len < need {
        return Err(Failure::Small(need));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(AcedError::Input(format!("{what} is not valid UTF-8"))))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Length in bytes of the last error message on this thread, excluding the
/// terminating nul.
#[no_mangle]
pub extern "C" fn aced_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message into `buf` as a nul-terminated string,
/// truncating to `len - 1` bytes. Returns the full message length.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn aced_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Duration probabilities for days `1..=max_duration`.
///
/// # Safety
/// `out` must be valid for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aced_duration_pmf(lambda: f64, nu: f64, max_duration: u32, out: *mut f64, out_len: usize) -> AcedStatus {
    guard(|| {
        let pmf = duration_pmf(DurationParams::new(lambda, nu), max_duration)?;
        out_slice(out, out_len, pmf.len(), "out")?.copy_from_slice(&pmf);
        Ok(())
    })
}

/// Beta prior shapes `(a, b)` for `rho_G, rho_I, rho_V, d_G, d_I`, written to
/// `out[0..10]`, from population fractions moving to the ICU, to ventilation
/// and dying, plus the early-death means.
///
/// # Safety
/// `out` must be valid for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aced_derive_priors(
    p_icu: f64,
    p_vent: f64,
    p_death: f64,
    death_g_mean: f64,
    death_i_mean: f64,
    out: *mut f64,
    out_len: usize,
) -> AcedStatus {
    guard(|| {
        let inputs = PriorInputs {
            p_icu,
            p_vent,
            p_death,
            death_g_mean,
            death_i_mean,
            ..PriorInputs::default()
        };
        let t = derive_transition_priors(&inputs)?;
        let out = out_slice(out, out_len, 10, "out")?;
        for (k, b) in [t.rho_g, t.rho_i, t.rho_v, t.death_g, t.death_i].iter().enumerate() {
            out[2 * k] = b.a;
            out[2 * k + 1] = b.b;
        }
        Ok(())
    })
}

/// Builds parameters from 17 values in the order
/// `rho_G, rho_I, rho_V, d_G, d_I`, then `lambda, nu` for G, I, V each
/// declining then recovering.
///
/// # Safety
/// `values` must be valid for `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aced_params_new(values: *const f64, len: usize, max_duration: u32, out: *mut *mut AcedParams) -> AcedStatus {
    guard(|| {
        let v = slice(values, len, "values")?;
        let inner = ModelParams::from_slice(v, max_duration)?;
        put(out, AcedParams { inner })
    })
}

/// Copies the 17 values of `params` into `out`.
///
/// # Safety
/// `params` must come from this library; `out` must be valid for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aced_params_values(params: *const AcedParams, out: *mut f64, out_len: usize) -> AcedStatus {
    guard(|| {
        let p = params.as_ref().ok_or(Failure::Null("params"))?;
        out_slice(out, out_len, ParamId::COUNT, "out")?.copy_from_slice(&p.inner.to_vec());
        Ok(())
    })
}

/// # Safety
/// `params` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aced_params_free(params: *mut AcedParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Simulates days `1..=n_days` with `admissions[t-1]` admitted to G on day `t`.
///
/// # Safety
/// `admissions` must be valid for `n_days` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aced_simulate_census(
    params: *const AcedParams,
    admissions: *const i64,
    n_days: usize,
    init_g: f64,
    init_i: f64,
    init_v: f64,
    scale: f64,
    seed: u64,
    out: *mut *mut AcedCensus,
) -> AcedStatus {
    guard(|| {
        let p = params.as_ref().ok_or(Failure::Null("params"))?;
        let adm = slice(admissions, n_days, "admissions")?;
        let input = SimulationInput::new(adm.to_vec(), InitCounts { g: init_g, i: init_i, v: init_v }, scale);
        let inner = simulate_census(&p.inner, &input, &mut substream(seed, 0), None, None)?;
        put(out, AcedCensus { inner })
    })
}

/// Number of simulated days.
///
/// # Safety
/// `census` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn aced_census_days(census: *const AcedCensus) -> usize {
    census.as_ref().map_or(0, |c| c.inner.len())
}

/// Copies the counts of stage `stage` (0..5 for G, I, V, R, T).
///
/// # Safety
/// `census` must come from this library; `out` must be valid for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aced_census_stage(census: *const AcedCensus, stage: usize, out: *mut f64, out_len: usize) -> AcedStatus {
    guard(|| {
        let c = census.as_ref().ok_or(Failure::Null("census"))?;
        if stage >= c.inner.num_labels() {
            return Err(AcedError::Input(format!("stage index {stage} out of range")).into());
        }
        let col = c.inner.column(stage);
        out_slice(out, out_len, col.len(), "out")?.copy_from_slice(col);
        Ok(())
    })
}

/// # Safety
/// `census` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aced_census_free(census: *mut AcedCensus) {
    if !census.is_null() {
        drop(Box::from_raw(census));
    }
}

/// Weighted distance between two `n_labels x n_days` row-major count arrays.
///
/// # Safety
/// `y` and `y_sim` must be valid for `n_labels * n_days` doubles,
/// `stage_weights` for `n_labels`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aced_distance(
    y: *const f64,
    y_sim: *const f64,
    n_labels: usize,
    n_days: usize,
    stage_weights: *const f64,
    time_first: f64,
    time_last: f64,
    out: *mut f64,
) -> AcedStatus {
    guard(|| {
        let n = n_labels * n_days;
        let a = slice(y, n, "y")?;
        let b = slice(y_sim, n, "y_sim")?;
        let u = slice(stage_weights, n_labels, "stage_weights")?;
        let to_series = |v: &[f64]| {
            CensusSeries::new(
                1,
                (0..n_labels)
                    .map(|k| (format!("s{k}"), v[k * n_days..(k + 1) * n_days].to_vec()))
                    .collect(),
            )
        };
        let w = DistanceWeights::new(
            u.iter().enumerate().map(|(k, w)| (format!("s{k}"), *w)).collect(),
            time_first,
            time_last,
        )?;
        let d = distance(&to_series(a)?, &to_series(b)?, &w)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = d;
        Ok(())
    })
}

/// Fits the dataset CSV with ensembled chains. `config_path` may be null for
/// defaults; `fast` shortens the run.
///
/// # Safety
/// Paths must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aced_fit(
    dataset_path: *const c_char,
    config_path: *const c_char,
    seed: u64,
    fast: bool,
    out: *mut *mut AcedSamples,
) -> AcedStatus {
    guard(|| {
        let data = path_arg(dataset_path, "dataset_path")?;
        let mut cfg = if config_path.is_null() {
            RunConfig::default()
        } else {
            parse_config(path_arg(config_path, "config_path")?)?
        };
        if fast {
            cfg = cfg.fast();
        }
        let ds = load_dataset(&cfg, Some(&data))?;
        let setup = build_setup(&cfg, &ds)?;
        let c = cfg.chains;
        let chains = run_chains(&setup, c.n_chains, c.samples_per_chain, c.thin, seed)?;
        let inner = ensemble(&chains, c.max_eps_spread)?;
        put(out, AcedSamples { inner })
    })
}

/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aced_samples_read(path: *const c_char, max_duration: u32, out: *mut *mut AcedSamples) -> AcedStatus {
    guard(|| {
        let inner = read_samples_file(path_arg(path, "path")?, max_duration)?;
        put(out, AcedSamples { inner })
    })
}

/// # Safety
/// `samples` must come from this library; `path` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aced_samples_write(samples: *const AcedSamples, path: *const c_char) -> AcedStatus {
    guard(|| {
        let s = samples.as_ref().ok_or(Failure::Null("samples"))?;
        write_samples_file(path_arg(path, "path")?, &s.inner)?;
        Ok(())
    })
}

/// # Safety
/// `samples` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn aced_samples_len(samples: *const AcedSamples) -> usize {
    samples.as_ref().map_or(0, |s| s.inner.len())
}

/// Copies the 17 values of sample `index`.
///
/// # Safety
/// `samples` must come from this library; `out` must be valid for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aced_samples_get(samples: *const AcedSamples, index: usize, out: *mut f64, out_len: usize) -> AcedStatus {
    guard(|| {
        let s = samples.as_ref().ok_or(Failure::Null("samples"))?;
        let p = s
            .inner
            .get(index)
            .ok_or_else(|| AcedError::Input(format!("sample {index} of {}", s.inner.len())))?;
        out_slice(out, out_len, ParamId::COUNT, "out")?.copy_from_slice(&p.to_vec());
        Ok(())
    })
}

/// # Safety
/// `samples` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aced_samples_free(samples: *mut AcedSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}
