//! Weekly-cycle removal, log ratios, and per-country standardization.
//!
//! The full preparation order is: detrend, re-clamp at the case floor,
//! log ratio, standardize.

mod kalman;
mod nelder_mead;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CASE_FLOOR;
use crate::panel::Panel;

/// Shortest series the weekly detrender accepts (two full weeks).
pub const MIN_DETREND_LEN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetrendMethod {
    /// Local linear trend with period-7 seasonal dummies, variances by maximum likelihood.
    StateSpace,
    /// Centered seven-day mean; the window shrinks symmetrically near the edges.
    #[serde(rename = "ma7")]
    MovingAverage7,
}

impl fmt::Display for DetrendMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetrendMethod::StateSpace => "state-space",
            DetrendMethod::MovingAverage7 => "ma7",
        })
    }
}

impl FromStr for DetrendMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state-space" | "state_space" => Ok(DetrendMethod::StateSpace),
            "ma7" | "moving-average-7" => Ok(DetrendMethod::MovingAverage7),
            _ => Err(Error::Config(format!("unknown detrend method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetrendConfig {
    pub method: DetrendMethod,
    pub max_likelihood_iters: usize,
    /// Lower bound for every fitted variance ratio.
    pub variance_floor: f64,
}

impl Default for DetrendConfig {
    fn default() -> Self {
        Self {
            method: DetrendMethod::StateSpace,
            max_likelihood_iters: 200,
            variance_floor: 1e-10,
        }
    }
}

impl DetrendConfig {
    pub fn moving_average() -> Self {
        Self {
            method: DetrendMethod::MovingAverage7,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::Config("variance_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Removes the weekly cycle from one series and returns its trend.
///
/// The state-space method fits a local linear trend plus period-7 dummy
/// seasonal on log values and returns the exponentiated smoothed level, so a
/// weekly pattern that scales with the level is removed along with it.
pub fn detrend_weekly(series: &[f64], config: &DetrendConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if series.len() < MIN_DETREND_LEN {
        return Err(Error::TooShort {
            needed: MIN_DETREND_LEN,
            got: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series passed to detrend_weekly".into()));
    }
    if config.method == DetrendMethod::StateSpace && series.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidInput("state-space detrending needs positive values".into()));
    }
    Ok(match config.method {
        DetrendMethod::MovingAverage7 => centered_mean_7(series),
        DetrendMethod::StateSpace => state_space_trend(series, config),
    })
}

fn centered_mean_7(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    (0..n)
        .map(|t| {
            let h = 3.min(t).min(n - 1 - t);
            let window = &series[t - h..=t + h];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect()
}

fn state_space_trend(series: &[f64], config: &DetrendConfig) -> Vec<f64> {
    let logs: Vec<f64> = series.iter().map(|v| v.ln()).collect();
    let centre = logs.iter().sum::<f64>() / logs.len() as f64;
    let centred: Vec<f64> = logs.iter().map(|v| v - centre).collect();
    let ratios = kalman::fit(&centred, config.max_likelihood_iters, config.variance_floor);
    kalman::smooth(&centred, ratios)
        .iter()
        .map(|state| (centre + state[0]).exp())
        .collect()
}

/// Day-over-day natural-log differences; the result has one column fewer.
pub fn log_ratio(panel: &Panel) -> Result<Panel> {
    if panel.n_days() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: panel.n_days(),
        });
    }
    let rows = panel
        .rows()
        .enumerate()
        .map(|(c, row)| {
            if let Some(index) = row.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::NonPositive {
                    country: panel.countries()[c].clone(),
                    index,
                });
            }
            Ok(row.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Panel::from_rows(panel.countries().to_vec(), panel.dates()[1..].to_vec(), rows)
}

/// Population mean and standard deviation (divisor `T`).
pub fn mean_std(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Subtracts each row's mean and divides by its population standard deviation.
pub fn standardize(panel: &Panel) -> Result<Panel> {
    let rows = panel
        .rows()
        .enumerate()
        .map(|(c, row)| standardize_row(row).ok_or_else(|| Error::ZeroVariance {
            country: panel.countries()[c].clone(),
        }))
        .collect::<Result<Vec<_>>>()?;
    Panel::from_rows(panel.countries().to_vec(), panel.dates().to_vec(), rows)
}

pub(crate) fn standardize_row(row: &[f64]) -> Option<Vec<f64>> {
    let (mean, sd) = mean_std(row);
    // relative threshold so rounding noise on a constant row is not mistaken for signal
    let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if row.is_empty() || !(sd > 1e-13 * scale.max(f64::MIN_POSITIVE)) || !sd.is_finite() {
        return None;
    }
    Some(row.iter().map(|v| (v - mean) / sd).collect())
}

/// Runs the full preparation on a panel of positive counts.
///
/// `detrend = None` skips weekly-cycle removal.
pub fn prepare(panel: &Panel, detrend: Option<&DetrendConfig>) -> Result<Panel> {
    let smoothed = match detrend {
        Some(config) => {
            config.validate()?;
            panel.map_rows(|_, row| {
                let mut out = detrend_weekly(row, config)?;
                for v in &mut out {
                    *v = v.max(CASE_FLOOR);
                }
                Ok(out)
            })?
        }
        None => panel.clone(),
    };
    standardize(&log_ratio(&smoothed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn panel_of(rows: Vec<Vec<f64>>) -> Panel {
        let countries = (0..rows.len()).map(|i| format!("C{i}")).collect();
        Panel::with_start(countries, chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), rows).unwrap()
    }

    /// |sum x_t e^{-2 pi i t / 7}|^2
    fn weekly_power(x: &[f64]) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let a = 2.0 * PI * t as f64 / 7.0;
            re += v * a.cos();
            im -= v * a.sin();
        }
        re * re + im * im
    }

    #[test]
    fn log_ratio_examples() {
        let p = panel_of(vec![vec![5.0; 4], vec![1.0, E, E * E, E * E * E]]);
        let r = log_ratio(&p).unwrap();
        assert_eq!(r.n_days(), 3);
        assert_eq!(r.row(0), &[0.0, 0.0, 0.0]);
        for v in r.row(1) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let r = log_ratio(&panel_of(vec![vec![0.1, 10.0]])).unwrap();
        assert!((r.row(0)[0] - 4.605_170_185_988_091).abs() < 1e-12);
        assert_eq!(r.dates()[0], p.dates()[1]);
    }

    #[test]
    fn log_ratio_rejects_non_positive() {
        let p = panel_of(vec![vec![1.0, 2.0], vec![1.0, 0.0]]);
        match log_ratio(&p) {
            Err(Error::NonPositive { country, index }) => {
                assert_eq!(country, "C1");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn log_ratio_scale_invariant() {
        let x: Vec<f64> = (0..20).map(|t| 1.0 + (t as f64 * 0.7).sin().abs() * 50.0).collect();
        let a = log_ratio(&panel_of(vec![x.clone()])).unwrap();
        let b = log_ratio(&panel_of(vec![x.iter().map(|v| v * 37.5).collect()])).unwrap();
        for (u, v) in a.row(0).iter().zip(b.row(0)) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_examples() {
        let p = standardize(&panel_of(vec![vec![0.0, 2.0]])).unwrap();
        assert_eq!(p.row(0), &[-1.0, 1.0]);
        let q = standardize(&panel_of(vec![vec![1.0, 2.0, 3.0, 4.0]])).unwrap();
        let expected = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (g, e) in q.row(0).iter().zip(expected) {
            assert!((g - e).abs() < 1e-3);
        }
        let (m, s) = mean_std(q.row(0));
        assert!(m.abs() < 1e-12 && (s * s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn standardize_flags_constant_row() {
        match standardize(&panel_of(vec![vec![1.0, 2.0], vec![3.0, 3.0]])) {
            Err(Error::ZeroVariance { country }) => assert_eq!(country, "C1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn detrend_input_validation() {
        let cfg = DetrendConfig::default();
        assert!(matches!(detrend_weekly(&[1.0; 13], &cfg), Err(Error::TooShort { .. })));
        let mut x = vec![1.0; 20];
        x[4] = f64::NAN;
        assert!(matches!(detrend_weekly(&x, &cfg), Err(Error::NonFinite(_))));
        let bad = DetrendConfig {
            variance_floor: 0.0,
            ..cfg
        };
        assert!(detrend_weekly(&[1.0; 20], &bad).is_err());
        let mut z = vec![1.0; 20];
        z[3] = 0.0;
        assert!(matches!(detrend_weekly(&z, &cfg), Err(Error::InvalidInput(_))));
        assert!(detrend_weekly(&z, &DetrendConfig::moving_average()).is_ok());
    }

    #[test]
    fn detrend_constant_series() {
        for cfg in [DetrendConfig::default(), DetrendConfig::moving_average()] {
            let c = 1234.5;
            let out = detrend_weekly(&vec![c; 60], &cfg).unwrap();
            for v in out {
                assert!((v - c).abs() <= 1e-6 * c, "{} gave {v}", cfg.method);
            }
        }
    }

    #[test]
    fn detrend_linear_trend() {
        let trend: Vec<f64> = (0..200).map(|t| 100.0 + 2.5 * t as f64).collect();
        for cfg in [DetrendConfig::default(), DetrendConfig::moving_average()] {
            let out = detrend_weekly(&trend, &cfg).unwrap();
            for t in 7..193 {
                let rel = (out[t] - trend[t]).abs() / trend[t];
                assert!(rel < 0.01, "{} t={t} rel={rel}", cfg.method);
            }
        }
    }

    #[test]
    fn detrend_removes_weekly_sinusoid() {
        let trend: Vec<f64> = (0..364).map(|t| 500.0 + 1.5 * t as f64).collect();
        let input: Vec<f64> = trend
            .iter()
            .enumerate()
            .map(|(t, v)| v + 80.0 * (2.0 * PI * t as f64 / 7.0).sin())
            .collect();
        for cfg in [DetrendConfig::default(), DetrendConfig::moving_average()] {
            let out = detrend_weekly(&input, &cfg).unwrap();
            let before = weekly_power(&input);
            let after = weekly_power(&out);
            assert!(after <= 0.1 * before, "{}: {after} vs {before}", cfg.method);
        }
    }

    #[test]
    fn state_space_removes_multiplicative_week() {
        let input: Vec<f64> = (0..364)
            .map(|t| {
                let t = t as f64;
                (6.0 + 1.5 * (2.0 * PI * t / 91.0).sin() + 0.5 * (2.0 * PI * t / 7.0).cos()).exp()
            })
            .collect();
        let logs = |x: &[f64]| x.iter().map(|v| v.ln()).collect::<Vec<_>>();
        let out = detrend_weekly(&input, &DetrendConfig::default()).unwrap();
        let before = weekly_power(&logs(&input));
        let after = weekly_power(&logs(&out));
        assert!(after <= 0.01 * before, "{after} vs {before}");
    }

    #[test]
    fn prepare_reclamps_before_log() {
        // the moving average of a spike train dips nowhere below the floor,
        // but a huge negative swing in the raw data must not leak through
        let mut x = vec![0.1; 30];
        x[10] = 1000.0;
        let p = panel_of(vec![x, (0..30).map(|t| 1.0 + t as f64).collect()]);
        let out = prepare(&p, Some(&DetrendConfig::moving_average())).unwrap();
        assert_eq!(out.n_days(), 29);
        assert!(out.values().iter().all(|v| v.is_finite()));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn panel_of(rows: Vec<Vec<f64>>) -> Panel {
        let countries = (0..rows.len()).map(|i| format!("C{i}")).collect();
        Panel::with_start(countries, chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), rows).unwrap()
    }

    proptest! {
        #[test]
        fn standardize_is_idempotent(row in proptest::collection::vec(-100.0f64..100.0, 3..50)) {
            let p = panel_of(vec![row]);
            prop_assume!(standardize(&p).is_ok());
            let once = standardize(&p).unwrap();
            let twice = standardize(&once).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let (m, s) = mean_std(once.row(0));
            prop_assert!(m.abs() < 1e-12);
            prop_assert!((s * s - 1.0).abs() < 1e-10);
        }

        #[test]
        fn log_ratio_ignores_row_scale(row in proptest::collection::vec(0.1f64..1e5, 2..40), k in 1e-3f64..1e3) {
            let a = log_ratio(&panel_of(vec![row.clone()])).unwrap();
            let b = log_ratio(&panel_of(vec![row.iter().map(|v| v * k).collect()])).unwrap();
            for (u, v) in a.values().iter().zip(b.values()) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
