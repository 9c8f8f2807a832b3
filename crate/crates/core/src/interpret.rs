//! Eigenvector projection, attribute groupings, and group barycentres.
//!
//! A barycentre is the complex mean of a group's eigenvector components. Its
//! argument places the group on the lead/lag axis: the larger the argument,
//! the further ahead the group runs.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::amplitude_phase;
use crate::ingest::{rank_order, Attribute, AttributeValues, Period, Region};
use crate::spectrum::Spectrum;

/// `(argument, amplitude)` per component.
pub fn project(v: &[Complex64]) -> Vec<(f64, f64)> {
    v.iter()
        .map(|z| {
            let (amp, arg) = amplitude_phase(*z);
            (arg, amp)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupLabel {
    Region(Region),
    /// 1 = lowest fifth by rank, 5 = highest.
    Quintile(u8),
    /// Planted cluster of a synthetic panel, 0-based.
    Cluster(u16),
    Missing,
}

impl GroupLabel {
    pub fn quintile_name(q: u8) -> &'static str {
        match q {
            1 => "First",
            2 => "Second",
            3 => "Third",
            4 => "Fourth",
            5 => "Fifth",
            _ => "?",
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::Region(r) => f.write_str(r.name()),
            GroupLabel::Quintile(q) => f.write_str(Self::quintile_name(*q)),
            GroupLabel::Cluster(k) => write!(f, "cluster{k}"),
            GroupLabel::Missing => f.write_str("missing"),
        }
    }
}

impl Serialize for GroupLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One label per country, aligned with the spectrum's country order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    pub labels: Vec<GroupLabel>,
}

impl Grouping {
    /// Non-missing labels in report order.
    pub fn groups(&self) -> Vec<GroupLabel> {
        let mut out: Vec<GroupLabel> = self.labels.iter().copied().filter(|l| *l != GroupLabel::Missing).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn missing_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == GroupLabel::Missing).count()
    }
}

pub fn region_grouping(regions: &[Option<Region>]) -> Grouping {
    Grouping {
        labels: regions
            .iter()
            .map(|r| r.map_or(GroupLabel::Missing, GroupLabel::Region))
            .collect(),
    }
}

pub fn cluster_grouping(assignments: &[usize]) -> Grouping {
    Grouping {
        labels: assignments.iter().map(|k| GroupLabel::Cluster(*k as u16)).collect(),
    }
}

/// Splits present values into five contiguous rank bins.
///
/// With `n = 5q + r` present values the first `r` bins get `q + 1` members.
/// Ties are ordered by country code.
pub fn quintile_grouping(values: &[Option<f64>], countries: &[String]) -> Result<Grouping> {
    if values.len() != countries.len() {
        return Err(Error::LengthMismatch {
            expected: countries.len(),
            got: values.len(),
        });
    }
    let order = rank_order(values, countries);
    if order.len() < 5 {
        return Err(Error::TooFewValues {
            needed: 5,
            got: order.len(),
        });
    }
    let (q, r) = (order.len() / 5, order.len() % 5);
    let mut labels = vec![GroupLabel::Missing; values.len()];
    let mut pos = 0;
    for bin in 0..5u8 {
        let size = q + usize::from((bin as usize) < r);
        for &i in &order[pos..pos + size] {
            labels[i] = GroupLabel::Quintile(bin + 1);
        }
        pos += size;
    }
    Ok(Grouping { labels })
}

pub fn grouping_for(values: &AttributeValues, countries: &[String]) -> Result<Grouping> {
    match values {
        AttributeValues::Regions(r) => Ok(region_grouping(r)),
        AttributeValues::Numeric(v) => quintile_grouping(v, countries),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub label: GroupLabel,
    #[serde(skip)]
    pub barycentre: Complex64,
    pub mean_distance: f64,
    pub member_count: usize,
}

impl GroupStats {
    pub fn argument(&self) -> f64 {
        amplitude_phase(self.barycentre).1
    }

    pub fn amplitude(&self) -> f64 {
        self.barycentre.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycentreReport {
    /// Non-empty groups in label order; the missing group is not included.
    pub groups: Vec<GroupStats>,
    pub missing_count: usize,
    pub warnings: Vec<String>,
}

impl BarycentreReport {
    pub fn get(&self, label: GroupLabel) -> Option<&GroupStats> {
        self.groups.iter().find(|g| g.label == label)
    }

    /// Groups sorted from leading (largest argument) to lagging.
    pub fn lead_lag_order(&self) -> Vec<&GroupStats> {
        let mut out: Vec<&GroupStats> = self.groups.iter().collect();
        out.sort_by(|a, b| b.argument().total_cmp(&a.argument()));
        out
    }
}

/// Complex mean of each group and the mean modulus of members' offsets from it.
///
/// `expected` lists the groups the report should contain; any that turn out
/// empty are skipped with a warning.
pub fn barycentres_for(v: &[Complex64], grouping: &Grouping, expected: &[GroupLabel]) -> Result<BarycentreReport> {
    if grouping.labels.len() != v.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            got: grouping.labels.len(),
        });
    }
    let mut members: BTreeMap<GroupLabel, Vec<Complex64>> = BTreeMap::new();
    for (z, label) in v.iter().zip(&grouping.labels) {
        if *label != GroupLabel::Missing {
            members.entry(*label).or_default().push(*z);
        }
    }
    let mut warnings = Vec::new();
    for label in expected {
        if !members.contains_key(label) {
            let msg = format!("group {label} is empty; omitted");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let groups = members
        .into_iter()
        .map(|(label, zs)| {
            let n = zs.len() as f64;
            let barycentre = zs.iter().sum::<Complex64>() / n;
            let mean_distance = zs.iter().map(|z| (z - barycentre).norm()).sum::<f64>() / n;
            GroupStats {
                label,
                barycentre,
                mean_distance,
                member_count: zs.len(),
            }
        })
        .collect();
    Ok(BarycentreReport {
        groups,
        missing_count: grouping.missing_count(),
        warnings,
    })
}

pub fn barycentres(v: &[Complex64], grouping: &Grouping) -> Result<BarycentreReport> {
    barycentres_for(v, grouping, &[])
}

/// The groups an attribute block always lists.
pub fn expected_groups(attr: Attribute) -> Vec<GroupLabel> {
    match attr {
        Attribute::Region => Region::ALL.iter().map(|r| GroupLabel::Region(*r)).collect(),
        _ => (1..=5).map(GroupLabel::Quintile).collect(),
    }
}

/// Per-country row of the eigenvector scatter output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterRow {
    pub country: String,
    pub group: GroupLabel,
    pub rank_value: Option<f64>,
    pub argument: f64,
    pub amplitude: f64,
    pub re: f64,
    pub im: f64,
}

pub fn scatter_rows(
    countries: &[String],
    v: &[Complex64],
    grouping: &Grouping,
    rank_values: Option<&[Option<f64>]>,
) -> Vec<ScatterRow> {
    countries
        .iter()
        .zip(v)
        .enumerate()
        .map(|(i, (country, z))| {
            let (amplitude, argument) = amplitude_phase(*z);
            ScatterRow {
                country: country.clone(),
                group: grouping.labels[i],
                rank_value: rank_values.and_then(|r| r[i]),
                argument,
                amplitude,
                re: z.re,
                im: z.im,
            }
        })
        .collect()
}

/// Mean distance from the barycentre, one row per (attribute, group).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanDistanceTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub attribute: Attribute,
    pub group: GroupLabel,
    pub values: Vec<Option<f64>>,
}

impl MeanDistanceTable {
    pub fn get(&self, attribute: Attribute, group: GroupLabel) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.attribute == attribute && r.group == group)
    }
}

/// One analysis column of the mean-distance table.
pub struct TableColumn<'a> {
    pub label: String,
    pub spectrum: &'a Spectrum,
    pub groupings: &'a BTreeMap<Attribute, Grouping>,
}

/// Builds the table from whatever columns are supplied; attribute blocks appear
/// when at least one column has a grouping for them.
pub fn mean_distance_table(columns: &[TableColumn<'_>], rank: usize) -> Result<MeanDistanceTable> {
    let mut rows = Vec::new();
    let mut reports: Vec<BTreeMap<Attribute, BarycentreReport>> = Vec::with_capacity(columns.len());
    for col in columns {
        let v = col.spectrum.eigenvector(rank)?;
        let mut per_attr = BTreeMap::new();
        for (attr, grouping) in col.groupings {
            per_attr.insert(*attr, barycentres_for(v, grouping, &expected_groups(*attr))?);
        }
        reports.push(per_attr);
    }
    for attr in Attribute::ALL {
        if !reports.iter().any(|r| r.contains_key(&attr)) {
            continue;
        }
        for group in expected_groups(attr) {
            let values = reports
                .iter()
                .map(|r| r.get(&attr).and_then(|rep| rep.get(group)).map(|g| g.mean_distance))
                .collect();
            rows.push(TableRow {
                attribute: attr,
                group,
                values,
            });
        }
    }
    Ok(MeanDistanceTable {
        columns: columns.iter().map(|c| c.label.clone()).collect(),
        rows,
    })
}

/// The four-column table over the entire period and each year 2020-2022.
pub fn report_tables(
    spectra: &BTreeMap<Period, Spectrum>,
    groupings: &BTreeMap<Period, BTreeMap<Attribute, Grouping>>,
    rank: usize,
) -> Result<MeanDistanceTable> {
    let empty = BTreeMap::new();
    let columns = Period::ALL
        .iter()
        .map(|p| {
            let spectrum = spectra.get(p).ok_or_else(|| Error::MissingSpectrum(p.label()))?;
            Ok(TableColumn {
                label: p.label(),
                spectrum,
                groupings: groupings.get(p).unwrap_or(&empty),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    mean_distance_table(&columns, rank)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn vec_and_labels() -> impl Strategy<Value = (Vec<Complex64>, Vec<u8>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), n),
                proptest::collection::vec(1u8..=5, n),
            )
        })
    }

    proptest! {
        #[test]
        fn weighted_barycentres_recover_overall_mean((v, labels) in vec_and_labels()) {
            let g = Grouping { labels: labels.iter().map(|q| GroupLabel::Quintile(*q)).collect() };
            let r = barycentres(&v, &g).unwrap();
            let weighted: Complex64 = r.groups.iter().map(|s| s.barycentre * s.member_count as f64).sum::<Complex64>() / v.len() as f64;
            let mean: Complex64 = v.iter().sum::<Complex64>() / v.len() as f64;
            prop_assert!((weighted - mean).norm() < 1e-12);
            let total: usize = r.groups.iter().map(|s| s.member_count).sum();
            prop_assert_eq!(total, v.len());
        }

        #[test]
        fn mean_distance_ignores_global_phase((v, labels) in vec_and_labels(), alpha in -3.0f64..3.0) {
            let g = Grouping { labels: labels.iter().map(|q| GroupLabel::Quintile(*q)).collect() };
            let rot = Complex64::from_polar(1.0, alpha);
            let a = barycentres(&v, &g).unwrap();
            let b = barycentres(&v.iter().map(|z| z * rot).collect::<Vec<_>>(), &g).unwrap();
            for (x, y) in a.groups.iter().zip(&b.groups) {
                prop_assert!((x.mean_distance - y.mean_distance).abs() < 1e-12);
            }
        }

        #[test]
        fn projection_after_phase_fix_is_gauge_invariant(
            comps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..20),
            alpha in -3.1f64..3.1,
        ) {
            let v: Vec<Complex64> = comps.iter().map(|(a, b)| Complex64::new(*a, *b)).collect();
            let sum: Complex64 = v.iter().sum();
            prop_assume!(sum.norm() > 1e-3);
            let rot = Complex64::from_polar(1.0, alpha);
            let w: Vec<Complex64> = v.iter().map(|z| z * rot).collect();
            let pa = project(&crate::spectrum::fix_phase(&v).unwrap());
            let pb = project(&crate::spectrum::fix_phase(&w).unwrap());
            for ((a1, m1), (a2, m2)) in pa.iter().zip(&pb) {
                prop_assert!((m1 - m2).abs() < 1e-12);
                if *m1 > 1e-9 {
                    let d = (a1 - a2).rem_euclid(2.0 * std::f64::consts::PI);
                    prop_assert!(d.min(2.0 * std::f64::consts::PI - d) < 1e-9);
                }
            }
        }
    }
}
