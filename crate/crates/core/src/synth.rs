//! Synthetic panels with planted lead/lag phases.
//!
//! Row `c` is `exp(base + A cos(2 pi f t / T + theta_c) + w cos(2 pi t / 7) + e_c(t) / snr)`
//! with i.i.d. standard normal `e`. A larger `theta_c` means the row runs further
//! ahead, so after the full pipeline the first eigenvector's arguments follow the
//! planted phases up to a global rotation.

use std::f64::consts::PI;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_series: usize,
    pub n_days: usize,
    /// Radians in `(-pi, pi]`, one per series.
    pub planted_phases: Vec<f64>,
    /// Carrier cycles over the whole panel.
    pub carrier_freq: usize,
    pub snr: f64,
    pub seed: u64,
    pub weekly_amp: f64,
    /// Carrier amplitude in log space. [`SynthSpec::clustered`] picks
    /// [`unit_log_ratio_amplitude`].
    pub amplitude: f64,
    /// Mean log level.
    pub base_level: f64,
}

pub const DEFAULT_CARRIER_FREQ: usize = 24;
pub const DEFAULT_BASE_LEVEL: f64 = 6.907_755_278_982_137; // ln 1000

/// Log-space amplitude whose day-over-day difference is a unit-amplitude sinusoid.
pub fn unit_log_ratio_amplitude(carrier_freq: usize, n_days: usize) -> f64 {
    let half_step = PI * carrier_freq as f64 / n_days.max(1) as f64;
    if half_step.sin() > 0.0 {
        0.5 / half_step.sin()
    } else {
        1.0
    }
}

impl SynthSpec {
    /// Series split into equal contiguous blocks, one block per cluster phase.
    pub fn clustered(n_series: usize, n_days: usize, clusters: &[f64], snr: f64, seed: u64) -> Self {
        let k = clusters.len().max(1);
        let planted_phases = (0..n_series)
            .map(|c| clusters.get(c * k / n_series.max(1)).copied().unwrap_or(0.0))
            .collect();
        Self {
            n_series,
            n_days,
            planted_phases,
            carrier_freq: DEFAULT_CARRIER_FREQ,
            snr,
            seed,
            weekly_amp: 0.0,
            amplitude: unit_log_ratio_amplitude(DEFAULT_CARRIER_FREQ, n_days),
            base_level: DEFAULT_BASE_LEVEL,
        }
    }

    /// Cluster index of each series under [`SynthSpec::clustered`].
    pub fn cluster_of(&self, n_clusters: usize) -> Vec<usize> {
        (0..self.n_series).map(|c| c * n_clusters / self.n_series.max(1)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_series == 0 {
            return fail("need at least one series".into());
        }
        if self.planted_phases.len() != self.n_series {
            return Err(Error::LengthMismatch {
                expected: self.n_series,
                got: self.planted_phases.len(),
            });
        }
        if self.carrier_freq == 0 || 2 * self.carrier_freq >= self.n_days {
            return fail(format!(
                "carrier frequency {} must lie strictly between 0 and n_days/2",
                self.carrier_freq
            ));
        }
        if !(self.snr > 0.0) {
            return fail(format!("snr must be positive, got {}", self.snr));
        }
        if !(self.weekly_amp >= 0.0) || !self.weekly_amp.is_finite() {
            return fail("weekly amplitude must be non-negative".into());
        }
        if let Some(p) = self.planted_phases.iter().find(|p| !(**p > -PI && **p <= PI)) {
            return fail(format!("planted phase {p} outside (-pi, pi]"));
        }
        if !self.amplitude.is_finite() || !self.base_level.is_finite() {
            return fail("amplitude and base level must be finite".into());
        }
        Ok(())
    }

    pub fn country_codes(&self) -> Vec<String> {
        let width = self.n_series.to_string().len().max(2);
        (1..=self.n_series).map(|i| format!("S{i:0width$}")).collect()
    }
}

pub fn synth_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).unwrap()
}

pub fn generate(spec: &SynthSpec) -> Result<Panel> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let t_len = spec.n_days as f64;
    let rows = spec
        .planted_phases
        .iter()
        .map(|theta| {
            (0..spec.n_days)
                .map(|t| {
                    let t = t as f64;
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let log_x = spec.base_level
                        + spec.amplitude * (2.0 * PI * spec.carrier_freq as f64 * t / t_len + theta).cos()
                        + spec.weekly_amp * (2.0 * PI * t / 7.0).cos()
                        + noise / spec.snr;
                    log_x.exp()
                })
                .collect()
        })
        .collect();
    Panel::with_start(spec.country_codes(), synth_start_date(), rows)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        PI
    } else {
        y
    }
}

/// Mean absolute phase error of the first eigenvector against the planted
/// phases, minimized over a global rotation.
pub fn recovery_error(spectrum: &Spectrum, spec: &SynthSpec) -> Result<f64> {
    let v = spectrum.eigenvector(1)?;
    if v.len() != spec.planted_phases.len() {
        return Err(Error::LengthMismatch {
            expected: spec.planted_phases.len(),
            got: v.len(),
        });
    }
    let offsets: Vec<f64> = v
        .iter()
        .zip(&spec.planted_phases)
        .map(|(z, theta)| wrap_angle(z.arg() - theta))
        .collect();
    Ok(min_mean_circular_deviation(&offsets))
}

/// `min_alpha mean |wrap(d - alpha)|`. The objective is piecewise linear and
/// concave between data points, so the minimum sits on one of them.
pub(crate) fn min_mean_circular_deviation(offsets: &[f64]) -> f64 {
    let n = offsets.len() as f64;
    offsets
        .iter()
        .map(|alpha| offsets.iter().map(|d| wrap_angle(d - alpha).abs()).sum::<f64>() / n)
        .fold(f64::INFINITY, f64::min)
}
