//! On-disk formats: spectrum JSON, scree/matrix/report CSVs, and run manifests.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::hilbert::{amplitude_phase, ComplexCorrMatrix};
use crate::interpret::{BarycentreReport, MeanDistanceTable, ScatterRow};
use crate::spectrum::{scree_table, NullComparison, RrsStats, Spectrum};
use crate::synth::SynthSpec;

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Spectrum
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub country: String,
    pub re: f64,
    pub im: f64,
    pub amplitude: f64,
    pub argument: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrsSection {
    pub n_samples: usize,
    pub multiplier: f64,
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
    pub se: Vec<f64>,
    pub threshold: Vec<f64>,
    pub margin: Vec<f64>,
    pub significant: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<String>,
    pub countries: Vec<String>,
    pub eigenvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rrs: Option<RrsSection>,
    /// Leading eigenvectors, rank 1 first.
    pub eigenvectors: Vec<Vec<ComponentEntry>>,
}

impl SpectrumFile {
    /// Keeps the first `keep_vectors` eigenvectors.
    pub fn from_spectrum(spectrum: &Spectrum, period: Option<String>, keep_vectors: usize) -> Self {
        let rrs = spectrum.null.as_ref().map(|n| {
            let threshold: Vec<f64> = (0..spectrum.dim()).map(|j| n.threshold(j)).collect();
            RrsSection {
                n_samples: n.stats.n_samples,
                multiplier: n.multiplier,
                mean: n.stats.mean.clone(),
                stdev: n.stats.stdev.clone(),
                se: n.stats.se.clone(),
                margin: spectrum.eigenvalues.iter().zip(&threshold).map(|(l, t)| l - t).collect(),
                threshold,
                significant: n.significant.clone(),
            }
        });
        let eigenvectors = spectrum
            .eigenvectors
            .iter()
            .take(keep_vectors)
            .map(|v| {
                spectrum
                    .countries
                    .iter()
                    .zip(v)
                    .map(|(country, z)| {
                        let (amplitude, argument) = amplitude_phase(*z);
                        ComponentEntry {
                            country: country.clone(),
                            re: z.re,
                            im: z.im,
                            amplitude,
                            argument,
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            period,
            countries: spectrum.countries.clone(),
            eigenvalues: spectrum.eigenvalues.clone(),
            rrs,
            eigenvectors,
        }
    }

    pub fn to_spectrum(&self) -> Result<Spectrum> {
        let n = self.countries.len();
        let eigenvectors = self
            .eigenvectors
            .iter()
            .map(|v| {
                if v.len() != n {
                    return Err(Error::LengthMismatch { expected: n, got: v.len() });
                }
                for (entry, country) in v.iter().zip(&self.countries) {
                    if &entry.country != country {
                        return Err(Error::InvalidInput(format!(
                            "eigenvector component {} out of order (expected {country})",
                            entry.country
                        )));
                    }
                }
                Ok(v.iter().map(|e| Complex64::new(e.re, e.im)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let null = self.rrs.as_ref().map(|r| NullComparison {
            stats: RrsStats {
                n_samples: r.n_samples,
                mean: r.mean.clone(),
                stdev: r.stdev.clone(),
                se: r.se.clone(),
            },
            multiplier: r.multiplier,
            significant: r.significant.clone(),
        });
        Ok(Spectrum {
            countries: self.countries.clone(),
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors,
            null,
        })
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }
}

pub fn write_scree_csv<W: Write>(spectrum: &Spectrum, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rank", "eigenvalue", "rrs_mean", "error_bar", "margin", "significant"])?;
    for row in scree_table(spectrum)? {
        out.write_record([
            row.rank.to_string(),
            fmt_f64(row.eigenvalue),
            fmt_f64(row.rrs_mean),
            fmt_f64(row.error_bar),
            fmt_f64(row.margin),
            row.significant.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Correlation matrix
// ---------------------------------------------------------------------------

/// One row per country; columns `<code>_re,<code>_im` interleaved.
pub fn write_matrix_csv<W: Write>(m: &ComplexCorrMatrix, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["country".to_string()];
    for c in m.countries() {
        header.push(format!("{c}_re"));
        header.push(format!("{c}_im"));
    }
    out.write_record(&header)?;
    for (a, code) in m.countries().iter().enumerate() {
        let mut rec = vec![code.clone()];
        for b in 0..m.dim() {
            let z = m.get(a, b);
            rec.push(fmt_f64(z.re));
            rec.push(fmt_f64(z.im));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixFile {
    pub countries: Vec<String>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixFile {
    pub fn from_matrix(m: &ComplexCorrMatrix) -> Self {
        let n = m.dim();
        Self {
            countries: m.countries().to_vec(),
            re: (0..n).map(|a| (0..n).map(|b| m.get(a, b).re).collect()).collect(),
            im: (0..n).map(|a| (0..n).map(|b| m.get(a, b).im).collect()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexCorrMatrix> {
        let values = self
            .re
            .iter()
            .flatten()
            .zip(self.im.iter().flatten())
            .map(|(r, i)| Complex64::new(*r, *i))
            .collect();
        ComplexCorrMatrix::from_values(self.countries.clone(), values)
    }
}

// ---------------------------------------------------------------------------
// Interpretation outputs
// ---------------------------------------------------------------------------

pub fn write_scatter_csv<W: Write>(rows: &[ScatterRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["country", "group", "rank_value", "argument", "amplitude", "re", "im"])?;
    for r in rows {
        out.write_record([
            r.country.clone(),
            r.group.to_string(),
            opt(r.rank_value),
            fmt_f64(r.argument),
            fmt_f64(r.amplitude),
            fmt_f64(r.re),
            fmt_f64(r.im),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `lead_order` is 1 for the group with the largest argument.
pub fn write_barycentre_csv<W: Write>(report: &BarycentreReport, w: W) -> Result<()> {
    let order = report.lead_lag_order();
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "group",
        "members",
        "re",
        "im",
        "argument",
        "amplitude",
        "mean_distance",
        "lead_order",
    ])?;
    for g in &report.groups {
        let position = order.iter().position(|o| o.label == g.label).map_or(0, |p| p + 1);
        out.write_record([
            g.label.to_string(),
            g.member_count.to_string(),
            fmt_f64(g.barycentre.re),
            fmt_f64(g.barycentre.im),
            fmt_f64(g.argument()),
            fmt_f64(g.amplitude()),
            fmt_f64(g.mean_distance),
            position.to_string(),
        ])?;
    }
    out.write_record([
        "missing".to_string(),
        report.missing_count.to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ])?;
    out.flush()?;
    Ok(())
}

pub fn write_table_csv<W: Write>(table: &MeanDistanceTable, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["attribute".to_string(), "group".to_string()];
    header.extend(table.columns.iter().cloned());
    out.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![row.attribute.title().to_string(), row.group.to_string()];
        rec.extend(row.values.iter().map(|v| opt(*v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Fixed-width layout with three decimals, blocks separated by rules.
pub fn format_table_text(table: &MeanDistanceTable) -> String {
    let attr_w = table
        .rows
        .iter()
        .map(|r| r.attribute.title().len())
        .max()
        .unwrap_or(9)
        .max(9);
    let group_w = 8;
    let col_w = table.columns.iter().map(String::len).max().unwrap_or(6).max(6);
    let mut s = format!("{:<attr_w$}  {:<group_w$}", "", "Group");
    for c in &table.columns {
        s.push_str(&format!("  {c:>col_w$}"));
    }
    s.push('\n');
    let width = s.trim_end().len();
    let mut last = None;
    for row in &table.rows {
        let name = if last != Some(row.attribute) {
            s.push_str(&"-".repeat(width));
            s.push('\n');
            row.attribute.title()
        } else {
            ""
        };
        last = Some(row.attribute);
        s.push_str(&format!("{name:<attr_w$}  {:<group_w$}", row.group.to_string()));
        for v in &row.values {
            match v {
                Some(x) => s.push_str(&format!("  {x:>col_w$.3}")),
                None => s.push_str(&format!("  {:>col_w$}", "-")),
            }
        }
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------
// Synthetic panels
// ---------------------------------------------------------------------------

/// Generator settings and per-series phases written next to a synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFile {
    pub spec: SynthSpec,
    pub countries: Vec<String>,
    pub clusters: Vec<f64>,
    /// Cluster index of each series.
    pub assignments: Vec<usize>,
}

impl PlantedFile {
    pub fn new(spec: &SynthSpec, clusters: &[f64]) -> Self {
        Self {
            spec: spec.clone(),
            countries: spec.country_codes(),
            clusters: clusters.to_vec(),
            assignments: spec.cluster_of(clusters.len().max(1)),
        }
    }
}

// ---------------------------------------------------------------------------
// Provenance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes = read_file(path)?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything needed, together with the inputs, to regenerate a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub output_dir: PathBuf,
    /// Command-specific settings (period, detrend, RRS, ranks, ...).
    pub settings: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<InputDigest>, output_dir: &Path, settings: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs,
            output_dir: output_dir.to_path_buf(),
            settings,
        }
    }
}
