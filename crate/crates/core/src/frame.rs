//! Raw event records and the uniformly gridded [`DatasetFrame`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plausible CGM range in mg/dL. Values outside it are violations, never clamped.
pub const CGM_MIN_MGDL: f64 = 10.0;
pub const CGM_MAX_MGDL: f64 = 600.0;

pub const DEFAULT_INTERVAL_MINUTES: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Cgm,
    Bolus,
    Basal,
    Carbs,
    HeartRate,
}

/// A named column of a [`DatasetFrame`].
///
/// The declaration order is the canonical column order used by every file
/// format (`date,CGM,bolus,basal,carbs,heartrate`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    #[serde(rename = "CGM")]
    Cgm,
    #[serde(rename = "bolus")]
    Bolus,
    #[serde(rename = "basal")]
    Basal,
    #[serde(rename = "carbs")]
    Carbs,
    #[serde(rename = "heartrate")]
    HeartRate,
}

impl Signal {
    pub const ALL: [Signal; 5] = [
        Signal::Cgm,
        Signal::Bolus,
        Signal::Basal,
        Signal::Carbs,
        Signal::HeartRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Cgm => "CGM",
            Signal::Bolus => "bolus",
            Signal::Basal => "basal",
            Signal::Carbs => "carbs",
            Signal::HeartRate => "heartrate",
        }
    }

    pub fn kind(self) -> EventKind {
        match self {
            Signal::Cgm => EventKind::Cgm,
            Signal::Bolus => EventKind::Bolus,
            Signal::Basal => EventKind::Basal,
            Signal::Carbs => EventKind::Carbs,
            Signal::HeartRate => EventKind::HeartRate,
        }
    }

    /// Signals where an absent record means "nothing happened" rather than "unknown".
    pub fn is_count_like(self) -> bool {
        matches!(self, Signal::Bolus | Signal::Carbs)
    }
}

impl From<EventKind> for Signal {
    fn from(kind: EventKind) -> Self {
        match kind {
            EventKind::Cgm => Signal::Cgm,
            EventKind::Bolus => Signal::Bolus,
            EventKind::Basal => Signal::Basal,
            EventKind::Carbs => Signal::Carbs,
            EventKind::HeartRate => Signal::HeartRate,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Signal::ALL
            .into_iter()
            .find(|sig| sig.name().eq_ignore_ascii_case(&lower))
            .or(match lower.as_str() {
                "heart_rate" | "hr" => Some(Signal::HeartRate),
                _ => None,
            })
            .ok_or_else(|| Error::Schema(format!("unknown signal `{s}`")))
    }
}

/// One raw timestamped observation from any source.
///
/// Units: CGM mg/dL, bolus U, basal U/h, carbs g, heart rate bpm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    timestamp: DateTime<Utc>,
    kind: EventKind,
    value: f64,
    duration_minutes: Option<f64>,
}

impl EventRecord {
    pub fn new(timestamp: DateTime<Utc>, kind: EventKind, value: f64) -> Result<Self> {
        Self::build(timestamp, kind, value, None)
    }

    /// A basal rate segment in U/h. `None` duration means the rate stays active
    /// until the next segment starts.
    pub fn basal(timestamp: DateTime<Utc>, rate: f64, duration_minutes: Option<f64>) -> Result<Self> {
        Self::build(timestamp, EventKind::Basal, rate, duration_minutes)
    }

    fn build(
        timestamp: DateTime<Utc>,
        kind: EventKind,
        value: f64,
        duration_minutes: Option<f64>,
    ) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidValue(format!(
                "{kind:?} value {value} must be finite and non-negative"
            )));
        }
        if kind == EventKind::Cgm && !(CGM_MIN_MGDL..=CGM_MAX_MGDL).contains(&value) {
            return Err(Error::InvalidValue(format!(
                "CGM value {value} mg/dL outside [{CGM_MIN_MGDL}, {CGM_MAX_MGDL}]"
            )));
        }
        if let Some(d) = duration_minutes {
            if kind != EventKind::Basal {
                return Err(Error::InvalidValue(format!("{kind:?} records carry no duration")));
            }
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidValue(format!("basal duration {d} must be non-negative")));
            }
        }
        // second precision
        let timestamp = DateTime::from_timestamp(timestamp.timestamp(), 0).unwrap_or(timestamp);
        Ok(EventRecord {
            timestamp,
            kind,
            value,
            duration_minutes,
        })
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }

    pub fn kind(&self) -> EventKind {
        self.kind
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn duration_minutes(&self) -> Option<f64> {
        self.duration_minutes
    }
}

/// Stable ascending sort by timestamp, then kind, then value.
pub fn sort_records(records: &mut [EventRecord]) {
    records.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then(a.kind.cmp(&b.kind))
            .then(a.value.total_cmp(&b.value))
    });
}

pub type Column = Vec<Option<f64>>;

/// Uniformly gridded multi-signal time series, always in mg/dL.
///
/// Row `i` sits at `start + i * interval_minutes`. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFrame {
    pub start: DateTime<Utc>,
    pub interval_minutes: u32,
    pub columns: BTreeMap<Signal, Column>,
}

impl DatasetFrame {
    pub fn new(start: DateTime<Utc>, interval_minutes: u32) -> Self {
        DatasetFrame {
            start,
            interval_minutes,
            columns: BTreeMap::new(),
        }
    }

    pub fn with_column(mut self, signal: Signal, values: Column) -> Self {
        self.columns.insert(signal, values);
        self
    }

    /// Row count, taken from the CGM column.
    pub fn len(&self) -> usize {
        self.columns.get(&Signal::Cgm).map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, signal: Signal) -> Option<&[Option<f64>]> {
        self.columns.get(&signal).map(Vec::as_slice)
    }

    pub fn cgm(&self) -> &[Option<f64>] {
        self.column(Signal::Cgm).unwrap_or(&[])
    }

    pub fn signals(&self) -> impl Iterator<Item = Signal> + '_ {
        self.columns.keys().copied()
    }

    pub fn interval(&self) -> Duration {
        Duration::minutes(i64::from(self.interval_minutes))
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + self.interval() * index as i32
    }

    /// Index of the bin containing `t`, if it falls inside the grid.
    pub fn index_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let secs = (t - self.start).num_seconds();
        let step = i64::from(self.interval_minutes) * 60;
        if secs < 0 || step == 0 {
            return None;
        }
        let idx = (secs / step) as usize;
        (idx < self.len()).then_some(idx)
    }

    /// Copy of rows `range`, with `start` shifted accordingly.
    pub fn slice(&self, range: std::ops::Range<usize>) -> DatasetFrame {
        DatasetFrame {
            start: self.timestamp(range.start),
            interval_minutes: self.interval_minutes,
            columns: self
                .columns
                .iter()
                .map(|(s, c)| (*s, c[range.clone()].to_vec()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub column: Option<Signal>,
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.column, self.index) {
            (Some(c), Some(i)) => write!(f, "{c}[{i}]: {}", self.message),
            (Some(c), None) => write!(f, "{c}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every frame invariant and lists each violation with its column and index.
pub fn validate_frame(frame: &DatasetFrame) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |column, index, message: String| {
        violations.push(Violation {
            column,
            index,
            message,
        })
    };

    if frame.interval_minutes == 0 {
        push(None, None, "interval must be a positive number of minutes".into());
    }
    let Some(cgm) = frame.columns.get(&Signal::Cgm) else {
        push(Some(Signal::Cgm), None, "required CGM column is absent".into());
        return ValidationReport { violations };
    };
    let n = cgm.len();
    if n == 0 {
        push(None, None, "empty frame".into());
    }
    for (signal, column) in &frame.columns {
        if column.len() != n {
            push(
                Some(*signal),
                None,
                format!("length {} differs from CGM length {n}", column.len()),
            );
        }
        for (i, v) in column.iter().enumerate() {
            let Some(v) = *v else { continue };
            if !v.is_finite() {
                push(Some(*signal), Some(i), format!("non-finite value {v}"));
            } else if *signal == Signal::Cgm && !(CGM_MIN_MGDL..=CGM_MAX_MGDL).contains(&v) {
                push(
                    Some(*signal),
                    Some(i),
                    format!("CGM {v} mg/dL outside [{CGM_MIN_MGDL}, {CGM_MAX_MGDL}]"),
                );
            }
        }
    }
    ValidationReport { violations }
}
