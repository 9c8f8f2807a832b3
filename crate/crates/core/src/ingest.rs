//! Raw case-count parsing, cleaning, and panel assembly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

/// Replacement for zero and negative daily counts, which keeps the log ratio defined.
pub const CASE_FLOOR: f64 = 0.1;

pub fn entire_first_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 3).unwrap()
}

pub fn entire_last_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 12, 31).unwrap()
}

/// Last day retained from the raw source; later rows are dropped during parsing.
pub fn source_last_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 5).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub country_code: String,
    pub date: NaiveDate,
    pub new_cases: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Period {
    Entire,
    Year(i32),
}

impl Period {
    pub const ALL: [Period; 4] = [
        Period::Entire,
        Period::Year(2020),
        Period::Year(2021),
        Period::Year(2022),
    ];

    /// Inclusive calendar bounds. Years are clipped to the entire-period window.
    pub fn bounds(self) -> (NaiveDate, NaiveDate) {
        match self {
            Period::Entire => (entire_first_day(), entire_last_day()),
            Period::Year(y) => {
                let first = NaiveDate::from_ymd_opt(y, 1, 1).unwrap_or(NaiveDate::MIN);
                let last = NaiveDate::from_ymd_opt(y, 12, 31).unwrap_or(NaiveDate::MAX);
                (first.max(entire_first_day()), last)
            }
        }
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Entire => f.write_str("entire"),
            Period::Year(y) => write!(f, "{y}"),
        }
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entire" | "all" => Ok(Period::Entire),
            other => other
                .parse::<i32>()
                .map(Period::Year)
                .map_err(|_| Error::Config(format!("unknown period {s:?}"))),
        }
    }
}

impl From<Period> for String {
    fn from(p: Period) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Period {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Header names for the three fields read from the raw case file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub country: String,
    pub date: String,
    pub new_cases: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            country: "Country_code".into(),
            date: "Date_reported".into(),
            new_cases: "New_cases".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub columns: ColumnMap,
    pub delimiter: u8,
    /// Explicit country whitelist. When absent, every code shaped like an
    /// assigned ISO 3166-1 alpha-2/alpha-3 code is kept.
    pub countries: Option<BTreeSet<String>>,
    pub first_day: NaiveDate,
    pub last_day: NaiveDate,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            delimiter: b',',
            countries: None,
            first_day: entire_first_day(),
            last_day: source_last_day(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParseSummary {
    pub source_rows: usize,
    pub source_countries: usize,
    pub excluded_countries: Vec<String>,
    pub filled_days: usize,
}

#[derive(Debug, Clone)]
pub struct ParsedCases {
    pub records: Vec<CaseRecord>,
    pub summary: ParseSummary,
}

/// True for two- or three-letter upper-case codes outside the ISO 3166-1
/// user-assigned ranges (AA, QM-QZ, XA-XZ, ZZ and their alpha-3 counterparts).
pub fn is_assigned_iso_code(code: &str) -> bool {
    let b = code.as_bytes();
    if !(b.len() == 2 || b.len() == 3) || !b.iter().all(u8::is_ascii_uppercase) {
        return false;
    }
    let user_assigned = match b[0] {
        b'X' => true,
        b'Q' => b[1] >= b'M',
        b'A' => b[1] == b'A',
        b'Z' => b[1] == b'Z',
        _ => false,
    };
    !user_assigned
}

/// Reads delimited case rows, keeps configured countries, and fills missing days with zero.
///
/// Empty new-case fields are treated as absent days.
pub fn parse_cases<R: Read>(reader: R, config: &IngestConfig) -> Result<ParsedCases> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::parse(1, format!("missing column {name:?}")))
    };
    let ci = find(&config.columns.country)?;
    let di = find(&config.columns.date)?;
    let ni = find(&config.columns.new_cases)?;

    let mut source_rows = 0usize;
    let mut all_countries = BTreeSet::new();
    let mut excluded = BTreeSet::new();
    let mut by_country: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut seen_first = NaiveDate::MAX;
    let mut seen_last = NaiveDate::MIN;

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        source_rows += 1;
        let field = |i: usize| {
            rec.get(i)
                .map(str::trim)
                .ok_or_else(|| Error::parse(line, format!("row has {} fields", rec.len())))
        };
        let code = field(ci)?.to_string();
        let date_text = field(di)?;
        let date = parse_date(date_text)
            .ok_or_else(|| Error::parse(line, format!("bad date {date_text:?}")))?;
        let cases_text = field(ni)?;

        all_countries.insert(code.clone());
        let keep = match &config.countries {
            Some(list) => list.contains(&code),
            None => is_assigned_iso_code(&code),
        };
        if !keep {
            excluded.insert(code);
            continue;
        }
        if date < config.first_day || date > config.last_day {
            continue;
        }
        let days = by_country.entry(code.clone()).or_default();
        if cases_text.is_empty() {
            continue;
        }
        let cases: f64 = cases_text
            .parse::<i64>()
            .map(|v| v as f64)
            .or_else(|_| cases_text.parse::<f64>())
            .map_err(|_| Error::parse(line, format!("bad case count {cases_text:?}")))?;
        if !cases.is_finite() {
            return Err(Error::parse(line, "non-finite case count"));
        }
        if days.insert(date, cases).is_some() {
            return Err(Error::parse(line, format!("duplicate record for {code} on {date}")));
        }
        seen_first = seen_first.min(date);
        seen_last = seen_last.max(date);
    }

    if source_rows == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(list) = &config.countries {
        excluded.extend(list.iter().filter(|c| !by_country.contains_key(*c)).cloned());
    }

    let mut records = Vec::new();
    let mut filled = 0usize;
    if seen_first <= seen_last {
        for (code, days) in &by_country {
            for date in seen_first.iter_days().take_while(|d| *d <= seen_last) {
                let new_cases = match days.get(&date) {
                    Some(v) => *v,
                    None => {
                        filled += 1;
                        0.0
                    }
                };
                records.push(CaseRecord {
                    country_code: code.clone(),
                    date,
                    new_cases,
                });
            }
        }
    }

    Ok(ParsedCases {
        records,
        summary: ParseSummary {
            source_rows,
            source_countries: all_countries.len(),
            excluded_countries: excluded.into_iter().collect(),
            filled_days: filled,
        },
    })
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    // some exports carry a time component
    let s = s.split(['T', ' ']).next().unwrap_or(s);
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y/%m/%d"))
        .ok()
}

/// Replaces every non-positive count by [`CASE_FLOOR`]. Returns the number of replacements.
pub fn clean_cases(records: &mut [CaseRecord]) -> usize {
    let mut replaced = 0;
    for r in records.iter_mut() {
        if r.new_cases <= 0.0 {
            r.new_cases = CASE_FLOOR;
            replaced += 1;
        }
    }
    replaced
}

/// Assembles the period's panel. Rows are sorted by country code.
pub fn build_panel(records: &[CaseRecord], period: Period) -> Result<Panel> {
    let (first, last) = period.bounds();
    let mut by_country: BTreeMap<&str, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut lo = NaiveDate::MAX;
    let mut hi = NaiveDate::MIN;
    for r in records.iter().filter(|r| r.date >= first && r.date <= last) {
        by_country
            .entry(r.country_code.as_str())
            .or_default()
            .insert(r.date, r.new_cases);
        lo = lo.min(r.date);
        hi = hi.max(r.date);
    }
    if by_country.is_empty() {
        return Err(Error::EmptyPeriod(period.label()));
    }
    let dates: Vec<NaiveDate> = lo.iter_days().take_while(|d| *d <= hi).collect();
    let mut countries = Vec::with_capacity(by_country.len());
    let mut rows = Vec::with_capacity(by_country.len());
    for (code, days) in by_country {
        let row = dates
            .iter()
            .map(|d| {
                days.get(d).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("{code} has no record for {d}; panel would have a gap"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        countries.push(code.to_string());
        rows.push(row);
    }
    Panel::from_rows(countries, dates, rows)
}

// ---------------------------------------------------------------------------
// Auxiliary attributes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    Asia,
    Europe,
    Africa,
    Oceania,
    Americas,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::Asia,
        Region::Europe,
        Region::Africa,
        Region::Oceania,
        Region::Americas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::Asia => "Asia",
            Region::Europe => "Europe",
            Region::Africa => "Africa",
            Region::Oceania => "Oceania",
            Region::Americas => "Americas",
        }
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asia" => Ok(Region::Asia),
            "europe" => Ok(Region::Europe),
            "africa" => Ok(Region::Africa),
            "oceania" => Ok(Region::Oceania),
            "americas" | "america" | "north america" | "south america" => Ok(Region::Americas),
            _ => Err(Error::InvalidInput(format!("unknown region {s:?}"))),
        }
    }
}

/// The seven attributes used to group eigenvector components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Attribute {
    Region,
    Population,
    GdpPerCapita,
    Stringency,
    Containment,
    Vaccination,
    Democracy,
}

impl Attribute {
    pub const ALL: [Attribute; 7] = [
        Attribute::Region,
        Attribute::Population,
        Attribute::GdpPerCapita,
        Attribute::Stringency,
        Attribute::Containment,
        Attribute::Vaccination,
        Attribute::Democracy,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Attribute::Region => "region",
            Attribute::Population => "population",
            Attribute::GdpPerCapita => "gdp-per-capita",
            Attribute::Stringency => "stringency",
            Attribute::Containment => "containment",
            Attribute::Vaccination => "vaccination",
            Attribute::Democracy => "democracy",
        }
    }

    /// Row label used in the mean-distance table.
    pub fn title(self) -> &'static str {
        match self {
            Attribute::Region => "Regions",
            Attribute::Population => "Population",
            Attribute::GdpPerCapita => "GDP/Population",
            Attribute::Stringency => "Stringency Index",
            Attribute::Containment => "Containment & Health Index",
            Attribute::Vaccination => "Vaccination Rate",
            Attribute::Democracy => "Democracy Index",
        }
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Attribute::ALL
            .into_iter()
            .find(|a| a.key() == s)
            .or(match s.as_str() {
                "regions" => Some(Attribute::Region),
                "gdp" => Some(Attribute::GdpPerCapita),
                "vaccination-rate" => Some(Attribute::Vaccination),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown attribute {s:?}")))
    }
}

/// How a yearly attribute is reduced for the entire-period analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reduction {
    /// Take the 2020 value.
    FirstYear,
    /// Average every observation in the window.
    WindowMean,
}

/// `country -> year -> observations` as read from one attribute file.
pub type YearlyValues = BTreeMap<String, BTreeMap<i32, Vec<f64>>>;

/// Parsed attribute files. Every source is optional.
#[derive(Debug, Clone, Default)]
pub struct AuxiliarySources {
    pub regions: Option<BTreeMap<String, Region>>,
    pub population: Option<YearlyValues>,
    pub gdp: Option<YearlyValues>,
    pub stringency: Option<YearlyValues>,
    pub containment: Option<YearlyValues>,
    pub vaccination: Option<YearlyValues>,
    pub democracy: Option<YearlyValues>,
}

/// Reads `country,region` rows.
pub fn read_regions<R: Read>(reader: R) -> Result<BTreeMap<String, Region>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 2 {
            return Err(Error::parse(line, "expected country,region"));
        }
        let region = rec[1]
            .parse()
            .map_err(|e: Error| Error::parse(line, e.to_string()))?;
        out.insert(rec[0].trim().to_string(), region);
    }
    Ok(out)
}

/// Reads `country,year,value` or `country,date,value` rows.
///
/// Several rows for the same country and year are kept and averaged later,
/// so daily index series can be supplied as-is. Empty values are skipped.
pub fn read_yearly_values<R: Read>(reader: R) -> Result<YearlyValues> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out: YearlyValues = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 3 {
            return Err(Error::parse(line, "expected country,year,value"));
        }
        let when = rec[1].trim();
        let year = match when.parse::<i32>() {
            Ok(y) => y,
            Err(_) => parse_date(when)
                .map(|d| d.year())
                .ok_or_else(|| Error::parse(line, format!("bad year or date {when:?}")))?,
        };
        let text = rec[2].trim();
        if text.is_empty() {
            continue;
        }
        let value: f64 = text
            .parse()
            .map_err(|_| Error::parse(line, format!("bad value {text:?}")))?;
        if value.is_finite() {
            out.entry(rec[0].trim().to_string())
                .or_default()
                .entry(year)
                .or_default()
                .push(value);
        }
    }
    Ok(out)
}

/// Attribute values for one analysis period, aligned to a panel's country order.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryTable {
    pub countries: Vec<String>,
    pub region: Vec<Option<Region>>,
    pub population: Vec<Option<f64>>,
    pub gdp: Vec<Option<f64>>,
    pub stringency: Vec<Option<f64>>,
    pub containment: Vec<Option<f64>>,
    pub vaccination: Vec<Option<f64>>,
    pub democracy: Vec<Option<f64>>,
    /// Attributes with no source file.
    pub absent: Vec<Attribute>,
    pub warnings: Vec<String>,
}

/// Values of one attribute, either categorical or numeric.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValues {
    Regions(Vec<Option<Region>>),
    Numeric(Vec<Option<f64>>),
}

impl AuxiliaryTable {
    pub fn gdp_per_capita(&self) -> Vec<Option<f64>> {
        per_capita(&self.gdp, &self.population)
    }

    pub fn vaccination_per_capita(&self) -> Vec<Option<f64>> {
        per_capita(&self.vaccination, &self.population)
    }

    /// `None` when the attribute's source file was not supplied.
    pub fn attribute(&self, attr: Attribute) -> Option<AttributeValues> {
        let needs: &[Attribute] = match attr {
            Attribute::GdpPerCapita | Attribute::Vaccination => &[attr, Attribute::Population],
            _ => &[attr],
        };
        if needs.iter().any(|a| self.absent.contains(a)) {
            return None;
        }
        Some(match attr {
            Attribute::Region => AttributeValues::Regions(self.region.clone()),
            Attribute::Population => AttributeValues::Numeric(self.population.clone()),
            Attribute::GdpPerCapita => AttributeValues::Numeric(self.gdp_per_capita()),
            Attribute::Stringency => AttributeValues::Numeric(self.stringency.clone()),
            Attribute::Containment => AttributeValues::Numeric(self.containment.clone()),
            Attribute::Vaccination => AttributeValues::Numeric(self.vaccination_per_capita()),
            Attribute::Democracy => AttributeValues::Numeric(self.democracy.clone()),
        })
    }

    pub fn missing_count(&self, attr: Attribute) -> Option<usize> {
        Some(match self.attribute(attr)? {
            AttributeValues::Regions(v) => v.iter().filter(|x| x.is_none()).count(),
            AttributeValues::Numeric(v) => v.iter().filter(|x| x.is_none()).count(),
        })
    }
}

fn per_capita(numerator: &[Option<f64>], population: &[Option<f64>]) -> Vec<Option<f64>> {
    numerator
        .iter()
        .zip(population)
        .map(|(n, p)| match (n, p) {
            (Some(n), Some(p)) if *p > 0.0 => Some(n / p),
            _ => None,
        })
        .collect()
}

/// Joins attribute sources onto `countries` for `period`.
///
/// Population, GDP and democracy use the year's value, or the 2020 value for the
/// entire period. Stringency, containment and vaccination use the year's mean, or
/// the mean over 2020-2022 for the entire period.
pub fn load_auxiliary(sources: &AuxiliarySources, countries: &[String], period: Period) -> AuxiliaryTable {
    let known: BTreeSet<&str> = countries.iter().map(String::as_str).collect();
    let mut warnings = Vec::new();
    let mut absent = Vec::new();

    let mut warn_unknown = |name: &str, keys: &mut dyn Iterator<Item = &String>| {
        let unknown: Vec<&str> = keys.map(String::as_str).filter(|k| !known.contains(k)).collect();
        if !unknown.is_empty() {
            let msg = format!(
                "{name}: skipped {} unknown country code(s): {}",
                unknown.len(),
                unknown.join(" ")
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    };

    let region = match &sources.regions {
        Some(map) => {
            warn_unknown("region", &mut map.keys());
            countries.iter().map(|c| map.get(c).copied()).collect()
        }
        None => {
            absent.push(Attribute::Region);
            vec![None; countries.len()]
        }
    };

    let mut numeric = |attr: Attribute, source: &Option<YearlyValues>, reduction: Reduction| match source {
        Some(values) => {
            warn_unknown(attr.key(), &mut values.keys());
            countries
                .iter()
                .map(|c| values.get(c).and_then(|years| reduce(years, period, reduction)))
                .collect()
        }
        None => {
            absent.push(attr);
            vec![None; countries.len()]
        }
    };

    let population = numeric(Attribute::Population, &sources.population, Reduction::FirstYear);
    // GDP is only ever used through GDP per capita
    let gdp = numeric(Attribute::GdpPerCapita, &sources.gdp, Reduction::FirstYear);
    let stringency = numeric(Attribute::Stringency, &sources.stringency, Reduction::WindowMean);
    let containment = numeric(Attribute::Containment, &sources.containment, Reduction::WindowMean);
    let vaccination = numeric(Attribute::Vaccination, &sources.vaccination, Reduction::WindowMean);
    let democracy = numeric(Attribute::Democracy, &sources.democracy, Reduction::FirstYear);

    AuxiliaryTable {
        countries: countries.to_vec(),
        region,
        population,
        gdp,
        stringency,
        containment,
        vaccination,
        democracy,
        absent,
        warnings,
    }
}

fn reduce(years: &BTreeMap<i32, Vec<f64>>, period: Period, reduction: Reduction) -> Option<f64> {
    let mean = |vals: &mut dyn Iterator<Item = f64>| {
        let (sum, n) = vals.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    };
    match (period, reduction) {
        (Period::Year(y), _) => mean(&mut years.get(&y)?.iter().copied()),
        (Period::Entire, Reduction::FirstYear) => mean(&mut years.get(&2020)?.iter().copied()),
        (Period::Entire, Reduction::WindowMean) => mean(
            &mut years
                .range(2020..=2022)
                .flat_map(|(_, v)| v.iter().copied()),
        ),
    }
}

/// Replaces each present value by its rank on a uniform grid over `[0, 1]`.
///
/// Ties are ordered by country code. A single present value maps to 0.5.
pub fn rank_normalize(values: &[Option<f64>], countries: &[String]) -> Result<Vec<Option<f64>>> {
    if values.len() != countries.len() {
        return Err(Error::LengthMismatch {
            expected: countries.len(),
            got: values.len(),
        });
    }
    let order = rank_order(values, countries);
    if order.is_empty() {
        return Err(Error::AllMissing);
    }
    let mut out = vec![None; values.len()];
    let denom = (order.len() - 1) as f64;
    for (rank, &i) in order.iter().enumerate() {
        out[i] = Some(if order.len() == 1 { 0.5 } else { rank as f64 / denom });
    }
    Ok(out)
}

/// Indices of present values sorted ascending by value, then by country code.
pub(crate) fn rank_order(values: &[Option<f64>], countries: &[String]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len())
        .filter(|&i| values[i].is_some_and(|v| !v.is_nan()))
        .collect();
    idx.sort_by(|&a, &b| {
        let (va, vb) = (values[a].unwrap(), values[b].unwrap());
        va.total_cmp(&vb).then_with(|| countries[a].cmp(&countries[b]))
    });
    idx
}
