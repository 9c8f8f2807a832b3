//! Country-by-day matrix that carries data through every pipeline stage.

use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::format::fmt_f64;

/// A `C x T` real matrix with a country label per row and a date per column.
///
/// Values are stored row-major so each country's series is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    countries: Vec<String>,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl Panel {
    pub fn new(countries: Vec<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if values.len() != countries.len() * dates.len() {
            return Err(Error::LengthMismatch {
                expected: countries.len() * dates.len(),
                got: values.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for c in &countries {
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate country code {c}")));
            }
        }
        for pair in dates.windows(2) {
            if pair[1] != pair[0].succ_opt().unwrap_or(pair[0]) {
                return Err(Error::InvalidInput(format!(
                    "dates are not consecutive: {} followed by {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self {
            countries,
            dates,
            values,
        })
    }

    pub fn from_rows(
        countries: Vec<String>,
        dates: Vec<NaiveDate>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows.len() != countries.len() {
            return Err(Error::LengthMismatch {
                expected: countries.len(),
                got: rows.len(),
            });
        }
        let mut values = Vec::with_capacity(countries.len() * dates.len());
        for row in rows {
            if row.len() != dates.len() {
                return Err(Error::LengthMismatch {
                    expected: dates.len(),
                    got: row.len(),
                });
            }
            values.extend(row);
        }
        Self::new(countries, dates, values)
    }

    /// Builds a panel with consecutive dates starting at `start`.
    pub fn with_start(countries: Vec<String>, start: NaiveDate, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_days = rows.first().map_or(0, Vec::len);
        let dates = start.iter_days().take(n_days).collect();
        Self::from_rows(countries, dates, rows)
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, c: usize) -> &[f64] {
        let t = self.n_days();
        &self.values[c * t..(c + 1) * t]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let t = self.n_days().max(1);
        let n = if self.n_days() == 0 { 0 } else { self.n_countries() };
        self.values.chunks_exact(t).take(n)
    }

    /// Returns a new panel with the same labels and every row replaced by `f(row)`,
    /// which must preserve the row length.
    pub fn map_rows<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(usize, &[f64]) -> Result<Vec<f64>> + Sync,
    {
        use rayon::prelude::*;
        let rows = (0..self.n_countries())
            .into_par_iter()
            .map(|c| f(c, self.row(c)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(self.countries.clone(), self.dates.clone(), rows)
    }

    pub(crate) fn with_dates_and_rows(&self, dates: Vec<NaiveDate>, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(self.countries.clone(), dates, rows)
    }

    /// Columns whose dates fall in `[first, last]`.
    pub fn slice_dates(&self, first: NaiveDate, last: NaiveDate) -> Result<Self> {
        let lo = self.dates.partition_point(|d| *d < first);
        let hi = self.dates.partition_point(|d| *d <= last);
        if lo >= hi {
            return Err(Error::EmptyPeriod(format!("{first}..{last}")));
        }
        let rows = self.rows().map(|r| r[lo..hi].to_vec()).collect();
        self.with_dates_and_rows(self.dates[lo..hi].to_vec(), rows)
    }

    /// Header row `country,<date>,...`; one row per country.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.n_days() + 1);
        header.push("country".to_string());
        header.extend(self.dates.iter().map(|d| d.format("%Y-%m-%d").to_string()));
        w.write_record(&header)?;
        for (code, row) in self.countries.iter().zip(self.rows()) {
            let mut record = Vec::with_capacity(row.len() + 1);
            record.push(code.clone());
            record.extend(row.iter().map(|&v| fmt_f64(v)));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut records = r.records();
        let header = match records.next() {
            Some(h) => h?,
            None => return Err(Error::EmptyInput),
        };
        let dates = header
            .iter()
            .skip(1)
            .map(|s| {
                NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                    .map_err(|e| Error::parse(1, format!("bad date {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut countries = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in records.enumerate() {
            let line = i as u64 + 2;
            let rec = rec?;
            if rec.len() != dates.len() + 1 {
                return Err(Error::parse(
                    line,
                    format!("expected {} fields, found {}", dates.len() + 1, rec.len()),
                ));
            }
            countries.push(rec[0].trim().to_string());
            for field in rec.iter().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(line, format!("bad number {field:?}")))?;
                values.push(v);
            }
        }
        if countries.is_empty() {
            return Err(Error::EmptyInput);
        }
        Self::new(countries, dates, values)
    }
}
