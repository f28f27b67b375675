//! Generic CSV input and the canonical raw-file writer.
//!
//! The raw file has the header `date,CGM,bolus,basal,carbs,heartrate`, one row
//! per grid bin, RFC 3339 timestamps and empty cells for missing values. The
//! basal column holds the rate in U/h, so the file reads back through
//! [`parse_csv`] like any other CSV.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};

use super::merge::basal_rate_for;
use crate::error::{Error, Result};
use crate::frame::{sort_records, DatasetFrame, EventKind, EventRecord, Signal};

const TIMESTAMP_HEADERS: [&str; 5] = ["date", "timestamp", "time", "datetime", "date_time"];

pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    let text = text.trim();
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            NaiveDateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S")
                .ok()
                .map(|t| t.and_utc())
        })
}

pub fn parse_csv(path: &Path) -> Result<Vec<EventRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_reader(file)
}

/// Each non-empty cell becomes one record of its column's kind. A basal cell
/// is a rate held until the next row's timestamp (open-ended on the last row).
///
/// Row numbers in errors count the header as row 1.
pub fn parse_csv_reader<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse("csv header", e))?.clone();

    let time_col = headers
        .iter()
        .position(|h| TIMESTAMP_HEADERS.contains(&h.to_ascii_lowercase().as_str()))
        .ok_or_else(|| Error::Schema("CSV has no timestamp column (expected `date`)".into()))?;
    let signal_cols: Vec<(usize, Signal)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != time_col)
        .filter_map(|(i, h)| match h.parse::<Signal>() {
            Ok(s) => Some((i, s)),
            Err(_) => {
                log::warn!("ignoring unknown CSV column `{h}`");
                None
            }
        })
        .collect();

    let mut rows: Vec<(usize, DateTime<Utc>, Vec<(Signal, f64)>)> = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row_no = k + 2;
        let row = row.map_err(|e| Error::parse(format!("csv row {row_no}"), e))?;
        let stamp = row.get(time_col).unwrap_or("");
        let t = parse_timestamp(stamp).ok_or_else(|| {
            Error::parse(format!("csv row {row_no}"), format!("unparseable timestamp `{stamp}`"))
        })?;
        let mut cells = Vec::new();
        for &(i, signal) in &signal_cols {
            let cell = row.get(i).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    format!("csv row {row_no}"),
                    format!("column {signal}: `{cell}` is not a number"),
                )
            })?;
            cells.push((signal, v));
        }
        rows.push((row_no, t, cells));
    }
    rows.sort_by_key(|(row_no, t, _)| (*t, *row_no));

    let mut records = Vec::new();
    for (k, (row_no, t, cells)) in rows.iter().enumerate() {
        let next = rows[k + 1..].iter().map(|r| r.1).find(|n| n > t);
        for &(signal, v) in cells {
            let rec = if signal == Signal::Basal {
                let duration = next.map(|n| (n - *t).num_seconds() as f64 / 60.0);
                EventRecord::basal(*t, v, duration)
            } else {
                EventRecord::new(*t, signal.kind(), v)
            };
            records.push(rec.map_err(|e| Error::parse(format!("csv row {row_no}"), e))?);
        }
    }
    sort_records(&mut records);
    Ok(records)
}

pub const RAW_HEADER: &str = "date,CGM,bolus,basal,carbs,heartrate";

/// Serializes a frame in the canonical raw CSV layout.
pub fn write_raw_csv<W: Write>(frame: &DatasetFrame, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RAW_HEADER}")?;
    for i in 0..frame.len() {
        let stamp = frame.timestamp(i).to_rfc3339_opts(SecondsFormat::Secs, true);
        write!(out, "{stamp}")?;
        for signal in Signal::ALL {
            let cell = frame.column(signal).and_then(|c| c[i]).map(|v| {
                if signal == Signal::Basal {
                    basal_rate_for(v, frame.interval_minutes)
                } else {
                    v
                }
            });
            match cell {
                Some(v) => write!(out, ",{v}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_raw_csv(frame: &DatasetFrame, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_raw_csv(frame, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Per-kind record counts, used for command summaries.
pub fn count_by_kind(records: &[EventRecord]) -> Vec<(EventKind, usize)> {
    let mut counts: Vec<(EventKind, usize)> = Vec::new();
    for r in records {
        match counts.iter_mut().find(|(k, _)| *k == r.kind()) {
            Some((_, c)) => *c += 1,
            None => counts.push((r.kind(), 1)),
        }
    }
    counts.sort();
    counts
}
