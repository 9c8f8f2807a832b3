//! Complex Hilbert principal component analysis (CHPCA) for panels of daily
//! series, with rotational random shuffling (RRS) as the significance null.
//!
//! The pipeline runs raw daily counts through [`ingest`] and [`preprocess`],
//! turns each standardized series into its analytic signal ([`hilbert`]),
//! eigendecomposes the complex correlation matrix and compares the eigenvalues
//! against circularly rotated surrogates ([`spectrum`]), and finally groups
//! eigenvector components by country attributes ([`interpret`]).
//!
//! Argument convention: if series `a` runs ahead of series `b`, the correlation
//! entry `M_ab` has a positive argument, and `a`'s eigenvector component has
//! the larger argument.

pub mod error;
pub mod format;
pub mod hilbert;
pub mod ingest;
pub mod interpret;
pub mod io;
pub mod panel;
pub mod pipeline;
pub mod preprocess;
pub mod spectrum;
pub mod synth;

pub use error::{Error, Result};
pub use hilbert::{AnalyticPanel, ComplexCorrMatrix};
pub use ingest::{AuxiliaryTable, CaseRecord, Period};
pub use panel::Panel;
pub use preprocess::{DetrendConfig, DetrendMethod};
pub use spectrum::{RrsConfig, Spectrum};
pub use synth::SynthSpec;
