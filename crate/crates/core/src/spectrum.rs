//! Eigendecomposition of the complex correlation matrix and the rotational
//! random shuffling (RRS) null ensemble.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{analytic_signal, complex_correlation_scaled, ComplexCorrMatrix, CorrelationScale};
use crate::panel::Panel;

/// Largest tolerated `|M_ab - conj(M_ba)|`, relative to the largest entry.
pub const HERMITIAN_TOLERANCE: f64 = 1e-9;
/// Below this modulus the component sum is too small to define a phase.
pub const PHASE_SUM_EPS: f64 = 1e-8;
/// Relative gap under which two eigenvalues count as degenerate.
const DEGENERATE_GAP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrsConfig {
    pub n_samples: usize,
    pub confidence_multiplier: f64,
    pub seed: u64,
}

impl Default for RrsConfig {
    fn default() -> Self {
        Self {
            n_samples: 20,
            confidence_multiplier: 2.33,
            seed: 0,
        }
    }
}

impl RrsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::Config(format!(
                "RRS needs at least 2 samples, got {}",
                self.n_samples
            )));
        }
        if !(self.confidence_multiplier > 0.0 && self.confidence_multiplier.is_finite()) {
            return Err(Error::Config("confidence multiplier must be positive".into()));
        }
        Ok(())
    }
}

/// Per-rank statistics of the surrogate eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrsStats {
    pub n_samples: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation (divisor `n - 1`).
    pub stdev: Vec<f64>,
    /// `stdev / sqrt(n)`.
    pub se: Vec<f64>,
}

/// Observed spectrum compared against the null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullComparison {
    pub stats: RrsStats,
    pub multiplier: f64,
    pub significant: Vec<bool>,
}

impl NullComparison {
    pub fn threshold(&self, rank: usize) -> f64 {
        self.stats.mean[rank] + self.multiplier * self.stats.se[rank]
    }
}

/// Descending eigenvalues with phase-fixed eigenvectors, optionally compared to the RRS null.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub countries: Vec<String>,
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[j]` belongs to `eigenvalues[j]`; components follow `countries`.
    pub eigenvectors: Vec<Vec<Complex64>>,
    pub null: Option<NullComparison>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Attaches RRS statistics and flags ranks above `mean + multiplier * se`.
    pub fn with_null(mut self, stats: RrsStats, multiplier: f64) -> Result<Self> {
        if stats.mean.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: stats.mean.len(),
            });
        }
        let significant = significance(&self.eigenvalues, &stats.mean, &stats.se, multiplier)?;
        self.null = Some(NullComparison {
            stats,
            multiplier,
            significant,
        });
        Ok(self)
    }

    pub fn significant_count(&self) -> usize {
        self.null
            .as_ref()
            .map_or(0, |n| n.significant.iter().filter(|s| **s).count())
    }

    /// Eigenvector of 1-based `rank`.
    pub fn eigenvector(&self, rank: usize) -> Result<&[Complex64]> {
        rank.checked_sub(1)
            .and_then(|j| self.eigenvectors.get(j))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidInput(format!("no eigenvector of rank {rank}")))
    }
}

fn to_dmatrix(matrix: &ComplexCorrMatrix) -> Result<DMatrix<Complex64>> {
    let n = matrix.dim();
    let largest = matrix.values().iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if matrix.values().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("correlation matrix".into()));
    }
    let deviation = matrix.hermitian_deviation();
    if deviation > HERMITIAN_TOLERANCE * largest.max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    // exact Hermitian part
    Ok(DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            Complex64::new(matrix.get(a, a).re, 0.0)
        } else {
            (matrix.get(a, b) + matrix.get(b, a).conj()) * 0.5
        }
    }))
}

/// Full eigensystem, eigenvalues descending.
///
/// Among degenerate eigenvalues, vectors are ordered by descending amplitude of
/// their first component, then by the position of their largest component.
pub fn eigendecompose(matrix: &ComplexCorrMatrix) -> Result<Spectrum> {
    let m = to_dmatrix(matrix)?;
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut pairs = (0..n)
        .map(|j| {
            let v: Vec<Complex64> = eig.eigenvectors.column(j).iter().copied().collect();
            Ok((eig.eigenvalues[j], fix_phase(&v)?))
        })
        .collect::<Result<Vec<_>>>()?;

    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len()
            && pairs[end - 1].0 - pairs[end].0 <= DEGENERATE_GAP * pairs[end - 1].0.abs().max(1.0)
        {
            end += 1;
        }
        let values: Vec<f64> = pairs[start..end].iter().map(|p| p.0).collect();
        pairs[start..end].sort_by(|a, b| {
            b.1[0]
                .norm()
                .total_cmp(&a.1[0].norm())
                .then_with(|| largest_component(&a.1).cmp(&largest_component(&b.1)))
        });
        for (p, v) in pairs[start..end].iter_mut().zip(values) {
            p.0 = v;
        }
        start = end;
    }

    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(Spectrum {
        countries: matrix.countries().to_vec(),
        eigenvalues,
        eigenvectors,
        null: None,
    })
}

/// Eigenvalues only, descending.
pub fn eigenvalues(matrix: &ComplexCorrMatrix) -> Result<Vec<f64>> {
    let m = to_dmatrix(matrix)?;
    let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    Ok(vals)
}

fn largest_component(v: &[Complex64]) -> usize {
    let mut best = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() {
            best = i;
        }
    }
    best
}

/// Removes the global phase so that the components sum to a non-negative real.
///
/// When the sum is shorter than [`PHASE_SUM_EPS`], the largest component is made
/// real and positive instead.
pub fn fix_phase(v: &[Complex64]) -> Result<Vec<Complex64>> {
    if v.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::ZeroVector);
    }
    let sum: Complex64 = v.iter().sum();
    let theta = if sum.norm() >= PHASE_SUM_EPS {
        sum.arg()
    } else {
        v[largest_component(v)].arg()
    };
    let rot = Complex64::from_polar(1.0, -theta);
    Ok(v.iter().map(|z| z * rot).collect())
}

/// Child seed for RRS sample `index`: SplitMix64 applied to `seed + (index + 1) * golden`.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rotation offsets drawn row by row from a ChaCha20 stream seeded with `seed`.
pub fn rrs_offsets(n_rows: usize, n_days: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n_rows).map(|_| rng.random_range(0..n_days.max(1))).collect()
}

/// `out[t] = row[(t + tau) mod T]`.
pub fn rotate_row(row: &[f64], tau: usize) -> Vec<f64> {
    let mut out = row.to_vec();
    if !out.is_empty() {
        let n = out.len();
        out.rotate_left(tau % n);
    }
    out
}

/// Rotates every row by its own uniform offset in `0..T`.
pub fn rrs_sample(panel: &Panel, seed: u64) -> Panel {
    let offsets = rrs_offsets(panel.n_countries(), panel.n_days(), seed);
    let rows = panel
        .rows()
        .zip(&offsets)
        .map(|(row, &tau)| rotate_row(row, tau))
        .collect();
    Panel::from_rows(panel.countries().to_vec(), panel.dates().to_vec(), rows)
        .expect("rotation preserves the panel shape")
}

/// Eigenvalue statistics over `config.n_samples` rotated copies of a standardized panel.
///
/// Sample `s` uses [`sample_seed`]`(config.seed, s)`, so results do not depend on
/// how the samples are scheduled across threads.
pub fn rrs_ensemble(panel: &Panel, config: &RrsConfig) -> Result<RrsStats> {
    rrs_ensemble_scaled(panel, config, CorrelationScale::Normalized)
}

pub fn rrs_ensemble_scaled(panel: &Panel, config: &RrsConfig, scale: CorrelationScale) -> Result<RrsStats> {
    config.validate()?;
    let samples = (0..config.n_samples)
        .into_par_iter()
        .map(|s| {
            let rotated = rrs_sample(panel, sample_seed(config.seed, s));
            let m = complex_correlation_scaled(&analytic_signal(&rotated)?, scale)?;
            eigenvalues(&m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&samples))
}

pub(crate) fn summarize(samples: &[Vec<f64>]) -> RrsStats {
    let n = samples.len();
    let dim = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; dim];
    let mut stdev = vec![0.0; dim];
    for j in 0..dim {
        let m = samples.iter().map(|s| s[j]).sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        mean[j] = m;
        stdev[j] = var.sqrt();
    }
    let se = stdev.iter().map(|s| s / (n as f64).sqrt()).collect();
    RrsStats {
        n_samples: n,
        mean,
        stdev,
        se,
    }
}

/// `observed[j] > mean[j] + multiplier * se[j]`.
pub fn significance(observed: &[f64], mean: &[f64], se: &[f64], multiplier: f64) -> Result<Vec<bool>> {
    for other in [mean.len(), se.len()] {
        if other != observed.len() {
            return Err(Error::LengthMismatch {
                expected: observed.len(),
                got: other,
            });
        }
    }
    Ok(observed
        .iter()
        .zip(mean.iter().zip(se))
        .map(|(l, (m, s))| *l > m + multiplier * s)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeRow {
    pub rank: usize,
    pub eigenvalue: f64,
    pub rrs_mean: f64,
    /// `multiplier * se`.
    pub error_bar: f64,
    /// `eigenvalue - (rrs_mean + error_bar)`; positive when significant.
    pub margin: f64,
    pub significant: bool,
}

pub fn scree_table(spectrum: &Spectrum) -> Result<Vec<ScreeRow>> {
    let null = spectrum
        .null
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("spectrum has no RRS statistics".into()))?;
    Ok((0..spectrum.dim())
        .map(|j| {
            let error_bar = null.multiplier * null.stats.se[j];
            ScreeRow {
                rank: j + 1,
                eigenvalue: spectrum.eigenvalues[j],
                rrs_mean: null.stats.mean[j],
                error_bar,
                margin: spectrum.eigenvalues[j] - null.stats.mean[j] - error_bar,
                significant: null.significant[j],
            }
        })
        .collect())
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use std::f64::consts::PI;

    fn matrix(n: usize, f: impl Fn(usize, usize) -> Complex64) -> ComplexCorrMatrix {
        let values = (0..n * n).map(|i| f(i / n, i % n)).collect();
        ComplexCorrMatrix::from_values((0..n).map(|i| format!("C{i}")).collect(), values).unwrap()
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let s = eigendecompose(&matrix(3, |a, b| if a == b { 1.0.into() } else { 0.0.into() })).unwrap();
        for l in &s.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_one_matrix() {
        let v: Vec<Complex64> = [
            Complex64::new(0.5, 0.1),
            Complex64::new(-0.2, 0.4),
            Complex64::new(0.3, -0.3),
            Complex64::new(0.1, 0.2),
        ]
        .to_vec();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let v: Vec<Complex64> = v.iter().map(|z| z / norm).collect();
        let m = matrix(4, |a, b| v[a] * v[b].conj());
        let s = eigendecompose(&m).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-12);
        for l in &s.eigenvalues[1..] {
            assert!(l.abs() < 1e-12);
        }
        let fixed = fix_phase(&v).unwrap();
        for (a, b) in fixed.iter().zip(&s.eigenvectors[0]) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn reconstruction_matches_brute_force() {
        for seed in 0..10 {
            let m = random_hermitian_psd(5, seed);
            let s = eigendecompose(&m).unwrap();
            assert!(reconstruction_error(&m, &s) < 1e-10);
            assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = matrix(2, |a, b| if a == 0 && b == 1 { Complex64::new(0.0, 0.5) } else if a == b { 1.0.into() } else { 0.0.into() });
        assert!(matches!(eigendecompose(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn degenerate_order_is_deterministic() {
        let m = matrix(3, |a, b| if a == b { 2.0.into() } else { 0.0.into() });
        let s = eigendecompose(&m).unwrap();
        let again = eigendecompose(&m).unwrap();
        assert_eq!(s, again);
        let firsts: Vec<f64> = s.eigenvectors.iter().map(|v| v[0].norm()).collect();
        assert!(firsts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn fix_phase_examples() {
        let h = 1.0 / 2f64.sqrt();
        let v = vec![Complex64::new(0.0, h), Complex64::new(0.0, h)];
        let f = fix_phase(&v).unwrap();
        for z in &f {
            assert!((z - Complex64::new(h, 0.0)).norm() < 1e-15);
        }
        let again = fix_phase(&f).unwrap();
        for (a, b) in f.iter().zip(&again) {
            assert!((a - b).norm() < 1e-15);
        }
        let rotated: Vec<Complex64> = v.iter().map(|z| z * Complex64::from_polar(1.0, 2.1)).collect();
        for (a, b) in fix_phase(&rotated).unwrap().iter().zip(&f) {
            assert!((a - b).norm() < 1e-14);
        }
        assert!(matches!(fix_phase(&[Complex64::new(0.0, 0.0)]), Err(Error::ZeroVector)));
    }

    #[test]
    fn fix_phase_fallback_when_sum_vanishes() {
        let v = vec![
            Complex64::from_polar(0.6, 1.0),
            Complex64::from_polar(0.6, 1.0 + PI),
            Complex64::from_polar(0.1, 0.3),
            Complex64::from_polar(0.1, 0.3 + PI),
        ];
        let f = fix_phase(&v).unwrap();
        assert!(f[0].im.abs() < 1e-15 && f[0].re > 0.0);
    }

    #[test]
    fn rotation_orientation() {
        assert_eq!(rotate_row(&[1.0, 2.0, 3.0, 4.0], 1), vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(rotate_row(&[1.0, 2.0, 3.0, 4.0], 0), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn offsets_are_seeded() {
        assert_eq!(rrs_offsets(10, 365, 9), rrs_offsets(10, 365, 9));
        assert_ne!(rrs_offsets(10, 365, 9), rrs_offsets(10, 365, 10));
        assert!(rrs_offsets(1000, 7, 1).iter().all(|t| *t < 7));
        assert_ne!(sample_seed(1, 0), sample_seed(1, 1));
    }

    #[test]
    fn significance_boundaries() {
        let flags = significance(&[1.0 + 2.34 * 0.1, 1.0 + 2.32 * 0.1], &[1.0, 1.0], &[0.1, 0.1], 2.33).unwrap();
        assert_eq!(flags, vec![true, false]);
        assert!(significance(&[1.0], &[1.0, 2.0], &[0.1], 2.33).is_err());
    }

    #[test]
    fn rrs_config_validation() {
        let bad = RrsConfig {
            n_samples: 1,
            ..RrsConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RrsConfig {
            confidence_multiplier: 0.0,
            ..RrsConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scree_rows() {
        let s = Spectrum {
            countries: (0..5).map(|i| format!("C{i}")).collect(),
            eigenvalues: vec![3.0, 1.0, 0.5, 0.3, 0.2],
            eigenvectors: vec![vec![Complex64::new(1.0, 0.0); 5]; 5],
            null: None,
        };
        assert!(scree_table(&s).is_err());
        let stats = RrsStats {
            n_samples: 20,
            mean: vec![1.5, 1.2, 1.0, 0.8, 0.5],
            stdev: vec![0.2; 5],
            se: vec![0.1; 5],
        };
        let s = s.with_null(stats, 2.33).unwrap();
        let rows = scree_table(&s).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        assert!((rows[0].error_bar - 0.233).abs() < 1e-15);
        assert!(rows[0].significant && !rows[1].significant);
        assert!((rows[0].margin - (3.0 - 1.733)).abs() < 1e-12);
    }

    #[test]
    fn summary_uses_sample_stdev() {
        let stats = summarize(&[vec![1.0], vec![3.0]]);
        assert_eq!(stats.mean, vec![2.0]);
        assert!((stats.stdev[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!((stats.se[0] - 1.0).abs() < 1e-15);
    }
}
