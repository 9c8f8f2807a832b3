use std::ffi::CStr;
use std::f64::consts::PI;
use std::ptr;

use chpca::synth::{generate, SynthSpec};
use chpca_ffi::*;

fn last_error() -> String {
    let p = chpca_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synth_buffer(n: usize, t: usize, clusters: &[f64], seed: u64) -> Vec<f64> {
    generate(&SynthSpec::clustered(n, t, clusters, 10.0, seed))
        .unwrap()
        .values()
        .to_vec()
}

fn analyze(values: &[f64], n: usize, t: usize, options: Option<&ChpcaOptions>) -> (ChpcaStatus, *mut ChpcaSpectrum) {
    let mut out = ptr::null_mut();
    let opts = options.map_or(ptr::null(), |o| o as *const _);
    let status = unsafe { chpca_analyze(values.as_ptr(), n, t, opts, &mut out) };
    (status, out)
}

#[test]
fn planted_panel_round_trip() {
    let (n, t) = (12, 365);
    let values = synth_buffer(n, t, &[0.0, PI / 4.0], 3);
    let mut opts = chpca_options_default();
    opts.detrend = ChpcaDetrend::None as u32;
    opts.seed = 3;
    let (status, handle) = analyze(&values, n, t, Some(&opts));
    assert_eq!(status, ChpcaStatus::Ok);
    assert!(!handle.is_null());
    assert!(chpca_last_error_message().is_null());

    unsafe {
        assert_eq!(chpca_spectrum_dim(handle), n);
        let mut eig = vec![0.0; n];
        assert_eq!(chpca_spectrum_eigenvalues(handle, eig.as_mut_ptr(), n), ChpcaStatus::Ok);
        assert!(eig.windows(2).all(|w| w[0] >= w[1]));
        assert!((eig.iter().sum::<f64>() - n as f64).abs() < 1e-8);

        let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(
            chpca_spectrum_eigenvector(handle, 1, re.as_mut_ptr(), im.as_mut_ptr(), n),
            ChpcaStatus::Ok
        );
        let norm: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum();
        assert!((norm - 1.0).abs() < 1e-10);
        // second half was planted ahead
        let arg = |i: usize| im[i].atan2(re[i]);
        let gap = (n / 2..n).map(arg).sum::<f64>() / (n / 2) as f64 - (0..n / 2).map(arg).sum::<f64>() / (n / 2) as f64;
        assert!((gap - PI / 4.0).abs() < 0.05, "gap {gap}");

        let mut flags = vec![9u8; n];
        assert_eq!(chpca_spectrum_significance(handle, flags.as_mut_ptr(), n), ChpcaStatus::Ok);
        assert_eq!(flags[0], 1);
        assert!(flags.iter().all(|f| *f <= 1));
        assert_eq!(
            chpca_spectrum_significant_count(handle),
            flags.iter().filter(|f| **f == 1).count()
        );

        let (mut mean, mut se) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(
            chpca_spectrum_rrs(handle, mean.as_mut_ptr(), se.as_mut_ptr(), n),
            ChpcaStatus::Ok
        );
        assert!(se.iter().all(|s| *s >= 0.0));
        assert!(eig[0] > mean[0] + 2.33 * se[0]);

        chpca_spectrum_free(handle);
    }
}

#[test]
fn same_options_same_numbers() {
    let (n, t) = (6, 120);
    let values = synth_buffer(n, t, &[0.0], 5);
    let run = || {
        let (status, h) = analyze(&values, n, t, None);
        assert_eq!(status, ChpcaStatus::Ok);
        let mut eig = vec![0.0; n];
        unsafe {
            chpca_spectrum_eigenvalues(h, eig.as_mut_ptr(), n);
            chpca_spectrum_free(h);
        }
        eig
    };
    assert_eq!(run(), run());
}

#[test]
fn error_codes() {
    let values = synth_buffer(4, 60, &[0.0], 1);

    let mut out = ptr::null_mut();
    let status = unsafe { chpca_analyze(ptr::null(), 4, 60, ptr::null(), &mut out) };
    assert_eq!(status, ChpcaStatus::NullPointer);
    assert!(!last_error().is_empty());

    let (status, h) = analyze(&values, 0, 60, None);
    assert_eq!(status, ChpcaStatus::InvalidInput);
    assert!(h.is_null());

    let mut opts = chpca_options_default();
    opts.rrs_samples = 1;
    let (status, _) = analyze(&values, 4, 60, Some(&opts));
    assert_eq!(status, ChpcaStatus::InvalidArgument);
    assert!(last_error().contains("at least 2"), "{}", last_error());

    let mut opts = chpca_options_default();
    opts.detrend = 17;
    assert_eq!(analyze(&values, 4, 60, Some(&opts)).0, ChpcaStatus::InvalidArgument);

    let mut bad = values.clone();
    bad[5] = -3.0;
    let mut opts = chpca_options_default();
    opts.detrend = ChpcaDetrend::None as u32;
    let (status, _) = analyze(&bad, 4, 60, Some(&opts));
    assert_eq!(status, ChpcaStatus::InvalidInput);
    assert!(last_error().contains("S1"), "{}", last_error());

    let (status, h) = analyze(&values, 4, 60, None);
    assert_eq!(status, ChpcaStatus::Ok);
    unsafe {
        let mut small = [0.0; 2];
        assert_eq!(chpca_spectrum_eigenvalues(h, small.as_mut_ptr(), 2), ChpcaStatus::BufferTooSmall);
        let mut re = [0.0; 4];
        let mut im = [0.0; 4];
        assert_eq!(
            chpca_spectrum_eigenvector(h, 5, re.as_mut_ptr(), im.as_mut_ptr(), 4),
            ChpcaStatus::InvalidArgument
        );
        assert_eq!(
            chpca_spectrum_eigenvector(h, 0, re.as_mut_ptr(), im.as_mut_ptr(), 4),
            ChpcaStatus::InvalidArgument
        );
        assert_eq!(
            chpca_spectrum_eigenvalues(ptr::null(), small.as_mut_ptr(), 2),
            ChpcaStatus::NullPointer
        );
        assert_eq!(chpca_spectrum_dim(ptr::null()), 0);
        chpca_spectrum_free(h);
        chpca_spectrum_free(ptr::null_mut());
    }
}

#[test]
fn standardized_input_skips_preparation() {
    // rows with negative values are only acceptable as standardized input
    let (n, t) = (3, 64);
    let values: Vec<f64> = (0..n * t)
        .map(|i| ((i % t) as f64 * 2.0 * PI * 5.0 / t as f64 + (i / t) as f64).cos())
        .collect();
    let mut opts = chpca_options_default();
    opts.standardized_input = 1;
    let (status, h) = analyze(&values, n, t, Some(&opts));
    assert_eq!(status, ChpcaStatus::Ok, "{}", last_error());
    unsafe { chpca_spectrum_free(h) };
    opts.standardized_input = 0;
    assert_eq!(analyze(&values, n, t, Some(&opts)).0, ChpcaStatus::InvalidInput);
}

#[test]
fn analytic_signal_of_cosine() {
    let t = 256;
    let k = 9.0;
    let x: Vec<f64> = (0..t).map(|i| (2.0 * PI * k * i as f64 / t as f64).cos()).collect();
    let (mut re, mut im) = (vec![0.0; t], vec![0.0; t]);
    let status = unsafe { chpca_analytic_signal(x.as_ptr(), t, re.as_mut_ptr(), im.as_mut_ptr()) };
    assert_eq!(status, ChpcaStatus::Ok);
    for i in 0..t {
        let phase = 2.0 * PI * k * i as f64 / t as f64;
        assert_eq!(re[i], x[i]);
        assert!((im[i] - phase.sin()).abs() < 1e-12);
    }
    let status = unsafe { chpca_analytic_signal(x.as_ptr(), t, ptr::null_mut(), im.as_mut_ptr()) };
    assert_eq!(status, ChpcaStatus::NullPointer);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(chpca_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
