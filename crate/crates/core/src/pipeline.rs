//! End-to-end analysis: preparation, CHPCA, and the RRS comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{analytic_signal, complex_correlation_scaled, CorrelationScale};
use crate::panel::Panel;
use crate::preprocess::{prepare, DetrendConfig};
use crate::spectrum::{eigendecompose, rrs_ensemble_scaled, RrsConfig, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// `None` skips weekly-cycle removal.
    pub detrend: Option<DetrendConfig>,
    pub rrs: RrsConfig,
    pub scale: CorrelationScale,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            detrend: Some(DetrendConfig::default()),
            rrs: RrsConfig::default(),
            scale: CorrelationScale::Normalized,
        }
    }
}

impl AnalysisConfig {
    pub fn without_detrend(rrs: RrsConfig) -> Self {
        Self {
            detrend: None,
            rrs,
            scale: CorrelationScale::Normalized,
        }
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Analytic signal, correlation, and eigendecomposition of a standardized panel.
pub fn chpca(standardized: &Panel, scale: CorrelationScale) -> Result<Spectrum> {
    let apanel = stage("analytic", analytic_signal(standardized))?;
    let m = stage("correlate", complex_correlation_scaled(&apanel, scale))?;
    stage("eigendecompose", eigendecompose(&m))
}

/// CHPCA plus the RRS comparison on an already standardized panel.
pub fn analyze_standardized(standardized: &Panel, config: &AnalysisConfig) -> Result<Spectrum> {
    stage("config", config.rrs.validate())?;
    let spectrum = chpca(standardized, config.scale)?;
    let stats = stage("rrs", rrs_ensemble_scaled(standardized, &config.rrs, config.scale))?;
    stage("significance", spectrum.with_null(stats, config.rrs.confidence_multiplier))
}

/// Runs the whole chain on a panel of positive daily counts.
pub fn analyze(counts: &Panel, config: &AnalysisConfig) -> Result<Spectrum> {
    stage("config", config.rrs.validate())?;
    let standardized = stage("preprocess", prepare(counts, config.detrend.as_ref()))?;
    analyze_standardized(&standardized, config)
}
