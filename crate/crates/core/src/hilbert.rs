//! Analytic signals and the Hermitian complex correlation matrix.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

/// Row-major `C x T` matrix of analytic signals.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPanel {
    countries: Vec<String>,
    n_days: usize,
    values: Vec<Complex64>,
}

impl AnalyticPanel {
    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn row(&self, c: usize) -> &[Complex64] {
        &self.values[c * self.n_days..(c + 1) * self.n_days]
    }
}

/// Whether [`complex_correlation`] rescales entries to unit diagonal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationScale {
    /// `M_ab / sqrt(M_aa M_bb)`; the diagonal is exactly one.
    #[default]
    Normalized,
    /// `(1/T) W W*` as is; the diagonal is about 2 for unit-variance input.
    Raw,
}

/// `C x C` Hermitian matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexCorrMatrix {
    countries: Vec<String>,
    values: Vec<Complex64>,
}

impl ComplexCorrMatrix {
    /// Wraps a square matrix. Hermitian structure is not checked here; see
    /// [`crate::spectrum::eigendecompose`].
    pub fn from_values(countries: Vec<String>, values: Vec<Complex64>) -> Result<Self> {
        let n = countries.len();
        if values.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        Ok(Self { countries, values })
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn dim(&self) -> usize {
        self.countries.len()
    }

    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.values[a * self.dim() + b]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).re).sum()
    }

    /// Largest `|M_ab - conj(M_ba)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in a..n {
                worst = worst.max((self.get(a, b) - self.get(b, a).conj()).norm());
            }
        }
        worst
    }
}

enum Multiplier {
    Hilbert,
    Analytic,
}

fn plan(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

fn spectral_filter(
    series: &[f64],
    kind: Multiplier,
    (fwd, inv): &(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>),
) -> Vec<Complex64> {
    let n = series.len();
    let mut buf: Vec<Complex64> = series.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let i = Complex64::i();
    for (k, x) in buf.iter_mut().enumerate() {
        // bins 0 < k < n/2 carry positive frequencies, k > n/2 negative ones
        let positive = 2 * k < n && k > 0;
        let negative = 2 * k > n;
        *x = match kind {
            Multiplier::Hilbert if positive => *x * -i,
            Multiplier::Hilbert if negative => *x * i,
            Multiplier::Hilbert => Complex64::new(0.0, 0.0),
            Multiplier::Analytic if positive => *x * 2.0,
            Multiplier::Analytic if negative => Complex64::new(0.0, 0.0),
            Multiplier::Analytic => *x,
        };
    }
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|x| *x *= scale);
    buf
}

fn check_series(series: &[f64]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series passed to the Hilbert transform".into()));
    }
    Ok(())
}

/// Circular discrete Hilbert transform: every positive frequency is rotated by
/// -90 degrees, every negative one by +90 degrees, DC and Nyquist are dropped.
pub fn hilbert_transform(series: &[f64]) -> Result<Vec<f64>> {
    check_series(series)?;
    let plans = plan(series.len());
    Ok(spectral_filter(series, Multiplier::Hilbert, &plans)
        .into_iter()
        .map(|z| z.re)
        .collect())
}

/// `w + i H[w]` for one series. The real part is the input, bit for bit.
pub fn analytic_row(series: &[f64]) -> Result<Vec<Complex64>> {
    check_series(series)?;
    let plans = plan(series.len());
    Ok(analytic_with(series, &plans))
}

fn analytic_with(series: &[f64], plans: &(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)) -> Vec<Complex64> {
    spectral_filter(series, Multiplier::Analytic, plans)
        .into_iter()
        .zip(series)
        .map(|(z, &w)| Complex64::new(w, z.im))
        .collect()
}

/// Analytic signal of every row, computed with one FFT pair per row.
pub fn analytic_signal(panel: &Panel) -> Result<AnalyticPanel> {
    let t = panel.n_days();
    for (c, row) in panel.rows().enumerate() {
        check_series(row).map_err(|e| match e {
            Error::NonFinite(_) => Error::NonFinite(format!("row {}", panel.countries()[c])),
            other => other,
        })?;
    }
    if panel.n_countries() == 0 {
        return Err(Error::EmptyInput);
    }
    let plans = plan(t);
    let rows: Vec<Vec<Complex64>> = (0..panel.n_countries())
        .into_par_iter()
        .map(|c| analytic_with(panel.row(c), &plans))
        .collect();
    Ok(AnalyticPanel {
        countries: panel.countries().to_vec(),
        n_days: t,
        values: rows.into_iter().flatten().collect(),
    })
}

/// `M = (1/T) W W*`, normalized to unit diagonal by default.
pub fn complex_correlation(apanel: &AnalyticPanel) -> Result<ComplexCorrMatrix> {
    complex_correlation_scaled(apanel, CorrelationScale::Normalized)
}

pub fn complex_correlation_scaled(apanel: &AnalyticPanel, scale: CorrelationScale) -> Result<ComplexCorrMatrix> {
    let n = apanel.n_countries();
    let t = apanel.n_days() as f64;
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];

    let upper: Vec<(usize, Vec<Complex64>)> = (0..n)
        .into_par_iter()
        .map(|a| {
            let ra = apanel.row(a);
            let entries = (a..n)
                .map(|b| {
                    let rb = apanel.row(b);
                    let s: Complex64 = ra.iter().zip(rb).map(|(x, y)| x * y.conj()).sum();
                    s / t
                })
                .collect();
            (a, entries)
        })
        .collect();
    for (a, entries) in upper {
        for (offset, z) in entries.into_iter().enumerate() {
            let b = a + offset;
            m[a * n + b] = z;
        }
    }

    let power: Vec<f64> = (0..n).map(|a| m[a * n + a].re).collect();
    for (a, p) in power.iter().enumerate() {
        if !(*p > 0.0) || !p.is_finite() {
            return Err(Error::ZeroPower {
                country: apanel.countries()[a].clone(),
            });
        }
    }

    for a in 0..n {
        for b in a..n {
            let z = if a == b {
                match scale {
                    CorrelationScale::Normalized => Complex64::new(1.0, 0.0),
                    CorrelationScale::Raw => Complex64::new(power[a], 0.0),
                }
            } else {
                match scale {
                    CorrelationScale::Normalized => m[a * n + b] / (power[a] * power[b]).sqrt(),
                    CorrelationScale::Raw => m[a * n + b],
                }
            };
            m[a * n + b] = z;
            m[b * n + a] = z.conj();
        }
    }
    Ok(ComplexCorrMatrix {
        countries: apanel.countries().to_vec(),
        values: m,
    })
}

/// Modulus and principal argument in `(-pi, pi]`.
pub fn amplitude_phase(z: Complex64) -> (f64, f64) {
    let arg = z.im.atan2(z.re);
    (z.norm(), if arg <= -PI { PI } else { arg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn cosine(k: f64, t: usize, shift: f64) -> Vec<f64> {
        (0..t)
            .map(|s| (2.0 * PI * k * (s as f64 - shift) / t as f64).cos())
            .collect()
    }

    fn panel(rows: Vec<Vec<f64>>) -> Panel {
        let countries = (0..rows.len()).map(|i| format!("C{i}")).collect();
        Panel::with_start(countries, NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), rows).unwrap()
    }

    /// Hilbert transform by an explicit O(T^2) DFT, independent of the FFT path.
    fn dft_hilbert(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let spectrum: Vec<Complex64> = (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| Complex64::from_polar(*v, -2.0 * PI * (k * t) as f64 / n as f64))
                    .sum()
            })
            .collect();
        (0..n)
            .map(|t| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, xk) in spectrum.iter().enumerate() {
                    let m = if k > 0 && 2 * k < n {
                        Complex64::new(0.0, -1.0)
                    } else if 2 * k > n {
                        Complex64::new(0.0, 1.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    acc += m * xk * Complex64::from_polar(1.0, 2.0 * PI * (k * t) as f64 / n as f64);
                }
                acc.re / n as f64
            })
            .collect()
    }

    #[test]
    fn cosine_to_sine_and_sine_to_minus_cosine() {
        for t in [64usize, 365] {
            for k in [1usize, 3, 20] {
                let c = cosine(k as f64, t, 0.0);
                let h = hilbert_transform(&c).unwrap();
                let h_sin = hilbert_transform(&cosine(k as f64, t, t as f64 / (4.0 * k as f64))).unwrap();
                for s in 0..t {
                    let ang = 2.0 * PI * (k * s) as f64 / t as f64;
                    assert!((h[s] - ang.sin()).abs() < 1e-10);
                    assert!((h_sin[s] + ang.cos()).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn constant_series_maps_to_zero() {
        let h = hilbert_transform(&[3.5; 50]).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matches_direct_dft() {
        let x: Vec<f64> = (0..37).map(|t| ((t * t) as f64 * 0.37).sin() + 0.2 * t as f64).collect();
        let fast = hilbert_transform(&x).unwrap();
        let slow = dft_hilbert(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
        let even: Vec<f64> = x[..36].to_vec();
        for (a, b) in hilbert_transform(&even).unwrap().iter().zip(dft_hilbert(&even)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn analytic_imaginary_part_is_hilbert() {
        let x: Vec<f64> = (0..40).map(|t| (t as f64 * 0.9).cos() * (t as f64 * 0.05).exp()).collect();
        let a = analytic_row(&x).unwrap();
        let h = hilbert_transform(&x).unwrap();
        for ((z, w), hv) in a.iter().zip(&x).zip(&h) {
            assert_eq!(z.re, *w);
            assert!((z.im - hv).abs() < 1e-12);
        }
    }

    #[test]
    fn input_validation() {
        assert!(matches!(hilbert_transform(&[1.0]), Err(Error::TooShort { .. })));
        assert!(matches!(hilbert_transform(&[1.0, f64::INFINITY]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn self_correlation_is_one() {
        let p = panel(vec![cosine(3.0, 50, 0.0), cosine(5.0, 50, 2.0)]);
        let m = complex_correlation(&analytic_signal(&p).unwrap()).unwrap();
        assert_eq!(m.get(0, 0), Complex64::new(1.0, 0.0));
        assert_eq!(m.trace(), 2.0);
        assert_eq!(m.hermitian_deviation(), 0.0);
    }

    #[test]
    fn shifted_cosines_give_phase_lead() {
        let t = 365;
        let k = 7.0;
        let delta = 3.0;
        let p = panel(vec![cosine(k, t, 0.0), cosine(k, t, delta)]);
        let m = complex_correlation(&analytic_signal(&p).unwrap()).unwrap();
        let (amp, phase) = amplitude_phase(m.get(0, 1));
        assert!((amp - 1.0).abs() < 1e-8);
        assert!((phase - 2.0 * PI * k * delta / t as f64).abs() < 1e-8);
    }

    #[test]
    fn raw_scale_has_diagonal_two() {
        let p = crate::preprocess::standardize(&panel(vec![cosine(4.0, 64, 0.0), cosine(9.0, 64, 1.0)])).unwrap();
        let m = complex_correlation_scaled(&analytic_signal(&p).unwrap(), CorrelationScale::Raw).unwrap();
        assert!((m.get(0, 0).re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_power_row_is_named() {
        let p = panel(vec![cosine(2.0, 16, 0.0), vec![0.0; 16]]);
        match complex_correlation(&analytic_signal(&p).unwrap()) {
            Err(Error::ZeroPower { country }) => assert_eq!(country, "C1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn amplitude_phase_examples() {
        assert_eq!(amplitude_phase(Complex64::new(1.0, 0.0)), (1.0, 0.0));
        let (a, p) = amplitude_phase(Complex64::new(0.0, 1.0));
        assert!((a - 1.0).abs() < 1e-15 && (p - PI / 2.0).abs() < 1e-15);
        let (a, p) = amplitude_phase(Complex64::new(-0.3, -0.4));
        assert!((a - 0.5).abs() < 1e-15);
        assert!((p - (-2.214_297_435_588_181)).abs() < 1e-12);
        assert_eq!(amplitude_phase(Complex64::new(-1.0, -0.0)).1, PI);
    }
}
