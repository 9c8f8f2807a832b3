//! C interface to the `chpca` analysis pipeline.
//!
//! Every fallible call returns a [`ChpcaStatus`]; on failure the message is
//! available from [`chpca_last_error_message`] on the same thread. Spectra are
//! returned as opaque handles and must be released with [`chpca_spectrum_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use chpca::hilbert::{analytic_row, CorrelationScale};
use chpca::pipeline::{analyze, analyze_standardized, AnalysisConfig};
use chpca::synth::synth_start_date;
use chpca::{DetrendConfig, DetrendMethod, Error, Panel, RrsConfig, Spectrum};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChpcaStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad option value (sample count, multiplier, detrend method, ...).
    InvalidArgument = 2,
    /// Data the pipeline cannot use: non-positive counts, constant rows, short series.
    InvalidInput = 3,
    /// Caller buffer is shorter than required.
    BufferTooSmall = 4,
    Numerical = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChpcaDetrend {
    None = 0,
    StateSpace = 1,
    MovingAverage7 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChpcaOptions {
    pub rrs_samples: u32,
    pub confidence_multiplier: f64,
    pub seed: u64,
    /// One of the [`ChpcaDetrend`] values.
    pub detrend: u32,
    /// Non-zero: the input is already a standardized panel and preparation is skipped.
    pub standardized_input: u8,
    /// Non-zero: keep `(1/T) W W*` without rescaling to unit diagonal.
    pub raw_scale: u8,
}

/// Opaque result of [`chpca_analyze`].
pub struct ChpcaSpectrum {
    inner: Spectrum,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(error: &Error) -> ChpcaStatus {
    match error {
        Error::Stage { source, .. } => status_of(source),
        Error::Config(_) => ChpcaStatus::InvalidArgument,
        Error::NotHermitian { .. } => ChpcaStatus::Numerical,
        _ => ChpcaStatus::InvalidInput,
    }
}

fn fail(status: ChpcaStatus, message: impl Into<String>) -> ChpcaStatus {
    set_error(message.into());
    status
}

fn guard(f: impl FnOnce() -> ChpcaStatus) -> ChpcaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(ChpcaStatus::Panic, msg)
        }
    }
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn chpca_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chpca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// 20 samples, multiplier 2.33, seed 0, state-space detrending, normalized matrix.
#[no_mangle]
pub extern "C" fn chpca_options_default() -> ChpcaOptions {
    let rrs = RrsConfig::default();
    ChpcaOptions {
        rrs_samples: rrs.n_samples as u32,
        confidence_multiplier: rrs.confidence_multiplier,
        seed: rrs.seed,
        detrend: ChpcaDetrend::StateSpace as u32,
        standardized_input: 0,
        raw_scale: 0,
    }
}

fn config_from(options: &ChpcaOptions) -> Result<AnalysisConfig, String> {
    let detrend = match options.detrend {
        x if x == ChpcaDetrend::None as u32 => None,
        x if x == ChpcaDetrend::StateSpace as u32 => Some(DetrendConfig::default()),
        x if x == ChpcaDetrend::MovingAverage7 as u32 => Some(DetrendConfig {
            method: DetrendMethod::MovingAverage7,
            ..DetrendConfig::default()
        }),
        other => return Err(format!("unknown detrend method {other}")),
    };
    Ok(AnalysisConfig {
        detrend,
        rrs: RrsConfig {
            n_samples: options.rrs_samples as usize,
            confidence_multiplier: options.confidence_multiplier,
            seed: options.seed,
        },
        scale: if options.raw_scale != 0 {
            CorrelationScale::Raw
        } else {
            CorrelationScale::Normalized
        },
    })
}

/// Runs the pipeline on a row-major `n_series x n_days` buffer.
///
/// With `standardized_input` unset the rows are positive daily counts. `options`
/// may be null for the defaults. On success `*out` receives a new handle.
///
/// # Safety
/// `values` must point to `n_series * n_days` readable doubles and `out` must be
/// a valid pointer. `options`, when non-null, must point to a `ChpcaOptions`.
#[no_mangle]
pub unsafe extern "C" fn chpca_analyze(
    values: *const f64,
    n_series: usize,
    n_days: usize,
    options: *const ChpcaOptions,
    out: *mut *mut ChpcaSpectrum,
) -> ChpcaStatus {
    guard(|| {
        if values.is_null() || out.is_null() {
            return fail(ChpcaStatus::NullPointer, "values and out must be non-null");
        }
        *out = ptr::null_mut();
        let Some(len) = n_series.checked_mul(n_days).filter(|n| *n > 0) else {
            return fail(ChpcaStatus::InvalidInput, "panel must have at least one series and one day");
        };
        let opts = if options.is_null() {
            chpca_options_default()
        } else {
            *options
        };
        let config = match config_from(&opts) {
            Ok(c) => c,
            Err(msg) => return fail(ChpcaStatus::InvalidArgument, msg),
        };
        let data = slice::from_raw_parts(values, len);
        let rows = data.chunks(n_days).map(<[f64]>::to_vec).collect();
        let codes = (1..=n_series).map(|i| format!("S{i}")).collect();
        let result = Panel::with_start(codes, synth_start_date(), rows).and_then(|panel| {
            if opts.standardized_input != 0 {
                analyze_standardized(&panel, &config)
            } else {
                analyze(&panel, &config)
            }
        });
        match result {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(ChpcaSpectrum { inner }));
                ChpcaStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Releases a handle from [`chpca_analyze`]. Null is ignored.
///
/// # Safety
/// `spectrum` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chpca_spectrum_free(spectrum: *mut ChpcaSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Number of series (and eigenvalues); 0 for a null handle.
///
/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chpca_spectrum_dim(spectrum: *const ChpcaSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.inner.dim())
}

/// Number of ranks flagged against the RRS ensemble.
///
/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chpca_spectrum_significant_count(spectrum: *const ChpcaSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.inner.significant_count())
}

unsafe fn fill<T: Copy>(
    spectrum: *const ChpcaSpectrum,
    dest: *mut T,
    len: usize,
    values: impl FnOnce(&Spectrum) -> Vec<T>,
) -> ChpcaStatus {
    guard(|| {
        let Some(s) = spectrum.as_ref() else {
            return fail(ChpcaStatus::NullPointer, "null spectrum");
        };
        if dest.is_null() {
            return fail(ChpcaStatus::NullPointer, "null output buffer");
        }
        let v = values(&s.inner);
        if len < v.len() {
            return fail(
                ChpcaStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", v.len()),
            );
        }
        slice::from_raw_parts_mut(dest, v.len()).copy_from_slice(&v);
        ChpcaStatus::Ok
    })
}

/// Copies the eigenvalues, largest first, into `out[0..dim]`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn chpca_spectrum_eigenvalues(
    spectrum: *const ChpcaSpectrum,
    out: *mut f64,
    len: usize,
) -> ChpcaStatus {
    fill(spectrum, out, len, |s| s.eigenvalues.clone())
}

/// Copies the 1-based `rank` eigenvector into `re[0..dim]` and `im[0..dim]`.
///
/// # Safety
/// `re` and `im` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn chpca_spectrum_eigenvector(
    spectrum: *const ChpcaSpectrum,
    rank: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> ChpcaStatus {
    if let Some(s) = spectrum.as_ref() {
        if rank == 0 || rank > s.inner.dim() {
            clear_error();
            return fail(ChpcaStatus::InvalidArgument, format!("no eigenvector of rank {rank}"));
        }
    }
    let status = fill(spectrum, re, len, |s| s.eigenvectors[rank - 1].iter().map(|z| z.re).collect());
    if status != ChpcaStatus::Ok {
        return status;
    }
    fill(spectrum, im, len, |s| s.eigenvectors[rank - 1].iter().map(|z| z.im).collect())
}

/// Per-rank RRS mean and standard error.
///
/// # Safety
/// `mean` and `se` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn chpca_spectrum_rrs(
    spectrum: *const ChpcaSpectrum,
    mean: *mut f64,
    se: *mut f64,
    len: usize,
) -> ChpcaStatus {
    let null = |s: &Spectrum| s.null.clone().expect("analysis attaches RRS statistics");
    let status = fill(spectrum, mean, len, |s| null(s).stats.mean);
    if status != ChpcaStatus::Ok {
        return status;
    }
    fill(spectrum, se, len, |s| null(s).stats.se)
}

/// Writes 1 for each significant rank and 0 otherwise.
///
/// # Safety
/// `flags` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn chpca_spectrum_significance(
    spectrum: *const ChpcaSpectrum,
    flags: *mut u8,
    len: usize,
) -> ChpcaStatus {
    fill(spectrum, flags, len, |s| {
        s.null
            .as_ref()
            .map(|n| n.significant.iter().map(|b| u8::from(*b)).collect())
            .unwrap_or_else(|| vec![0; s.dim()])
    })
}

/// Analytic signal of one real series: `re` receives the input, `im` its Hilbert transform.
///
/// # Safety
/// `series`, `re` and `im` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn chpca_analytic_signal(
    series: *const f64,
    len: usize,
    re: *mut f64,
    im: *mut f64,
) -> ChpcaStatus {
    guard(|| {
        if series.is_null() || re.is_null() || im.is_null() {
            return fail(ChpcaStatus::NullPointer, "null buffer");
        }
        match analytic_row(slice::from_raw_parts(series, len)) {
            Ok(z) => {
                let re = slice::from_raw_parts_mut(re, len);
                let im = slice::from_raw_parts_mut(im, len);
                for (i, v) in z.iter().enumerate() {
                    re[i] = v.re;
                    im[i] = v.im;
                }
                ChpcaStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}
