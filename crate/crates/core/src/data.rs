//! Hourly price CSV ingestion and export.
//!
//! Files carry a header `timestamp,<name_1>,...,<name_D>` followed by one row
//! per hour with ISO-8601 timestamps, strictly increasing without gaps.

use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDateTime, TimeDelta};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: cannot parse {what} {value:?}")]
    Parse { line: u64, what: String, value: String },
    #[error("line {line}: duplicate timestamp {}", format_timestamp(.timestamp))]
    Duplicate { line: u64, timestamp: NaiveDateTime },
    #[error("line {line}: timestamp {} is earlier than the previous row", format_timestamp(.timestamp))]
    OutOfOrder { line: u64, timestamp: NaiveDateTime },
    #[error("missing hour {} (line {line} jumps to {})", format_timestamp(.missing), format_timestamp(.found))]
    Gap {
        line: u64,
        missing: NaiveDateTime,
        found: NaiveDateTime,
    },
    #[error("no data rows")]
    Empty,
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
}

/// An hourly series with its time index and column names.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub names: Vec<String>,
    pub values: Matrix,
}

const FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"];

/// Parses an ISO-8601 timestamp. Offsets are converted to UTC.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    /// Calendar months present, as `("YYYY-MM", row range)` in time order.
    pub fn months(&self) -> Vec<(String, Range<usize>)> {
        let mut out: Vec<(String, Range<usize>)> = Vec::new();
        for (i, t) in self.timestamps.iter().enumerate() {
            let label = format!("{:04}-{:02}", t.year(), t.month());
            match out.last_mut() {
                Some((l, r)) if *l == label => r.end = i + 1,
                _ => out.push((label, i..i + 1)),
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("timestamp,{}\n", self.names.join(","));
        for (t, row) in self.timestamps.iter().zip(self.values.iter_rows()) {
            out.push_str(&format_timestamp(t));
            for v in row {
                out.push(',');
                out.push_str(&format!("{v:.4}"));
            }
            out.push('\n');
        }
        out
    }

    /// Series of `values.rows()` consecutive hours starting at `start`.
    pub fn hourly(start: NaiveDateTime, names: Vec<String>, values: Matrix) -> Self {
        let timestamps = (0..values.rows()).map(|i| start + TimeDelta::hours(i as i64)).collect();
        Self {
            timestamps,
            names,
            values,
        }
    }
}

/// Reads and validates an hourly price CSV.
pub fn ingest_prices(path: impl AsRef<Path>) -> Result<PriceSeries, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_prices(&text)
}

pub fn parse_prices(text: &str) -> Result<PriceSeries, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.get(0) != Some("timestamp") {
        return Err(DataError::Header("first column must be `timestamp`".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(DataError::Header("no price columns".into()));
    }
    let mut timestamps: Vec<NaiveDateTime> = Vec::new();
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let raw = record.get(0).unwrap_or_default();
        let t = parse_timestamp(raw).ok_or_else(|| DataError::Parse {
            line,
            what: "timestamp".into(),
            value: raw.to_string(),
        })?;
        if let Some(&prev) = timestamps.last() {
            let expected = prev + TimeDelta::hours(1);
            if t == prev {
                return Err(DataError::Duplicate { line, timestamp: t });
            }
            if t < prev {
                return Err(DataError::OutOfOrder { line, timestamp: t });
            }
            if t != expected {
                return Err(DataError::Gap {
                    line,
                    missing: expected,
                    found: t,
                });
            }
        }
        timestamps.push(t);
        for (j, name) in names.iter().enumerate() {
            let cell = record.get(j + 1).unwrap_or_default();
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataError::Parse {
                    line,
                    what: format!("value in column {name}"),
                    value: cell.to_string(),
                })?;
            data.push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(DataError::Empty);
    }
    let values = Matrix::from_vec(timestamps.len(), names.len(), data);
    Ok(PriceSeries {
        timestamps,
        names,
        values,
    })
}
