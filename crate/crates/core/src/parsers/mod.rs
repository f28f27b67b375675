//! Data acquisition: one parser per source, all producing [`EventRecord`]s
//! that [`merge_to_frame`] puts on a uniform grid.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{DatasetFrame, EventRecord};

pub mod apple_health;
pub mod csv;
pub mod merge;
pub mod nightscout;
pub mod ohio;
pub mod synthetic;
mod xml_util;

pub use self::apple_health::{parse_apple_health, AppleHealthImport};
pub use self::csv::{count_by_kind, parse_csv, parse_csv_reader, parse_timestamp, save_raw_csv, write_raw_csv, RAW_HEADER};
pub use self::merge::{basal_delivered, merge_to_frame};
pub use self::nightscout::{parse_nightscout, RetryPolicy};
pub use self::ohio::parse_ohio;
pub use self::synthetic::{synth_generate, MealSlot, SynthParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Nightscout,
    AppleHealth,
    OhioT1dm,
    Csv,
    Synthetic,
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nightscout" => Ok(SourceKind::Nightscout),
            "apple_health" | "applehealth" => Ok(SourceKind::AppleHealth),
            "ohio" | "ohio_t1dm" => Ok(SourceKind::OhioT1dm),
            "csv" => Ok(SourceKind::Csv),
            "synthetic" => Ok(SourceKind::Synthetic),
            other => Err(Error::InvalidValue(format!("unknown source kind `{other}`"))),
        }
    }
}

/// Where and how to fetch one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDescriptor {
    pub kind: SourceKind,
    /// URL for Nightscout, file path for file sources, unused for synthetic.
    pub location: String,
    pub credentials: Option<String>,
    pub time_range: Option<(DateTime<Utc>, DateTime<Utc>)>,
    /// Synthetic generator settings; must contain `seed`.
    pub parameters: BTreeMap<String, f64>,
}

impl SourceDescriptor {
    pub fn new(kind: SourceKind, location: impl Into<String>) -> Self {
        SourceDescriptor {
            kind,
            location: location.into(),
            credentials: None,
            time_range: None,
            parameters: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SourceKind::Nightscout => {
                if !(self.location.starts_with("http://") || self.location.starts_with("https://")) {
                    return Err(Error::InvalidValue(format!(
                        "Nightscout source needs an http(s) URL, got `{}`",
                        self.location
                    )));
                }
            }
            SourceKind::Synthetic => {
                if !self.parameters.contains_key("seed") {
                    return Err(Error::InvalidParameter("synthetic source requires a `seed`".into()));
                }
            }
            _ => {
                let path = Path::new(&self.location);
                if !path.is_file() {
                    return Err(Error::io(
                        path,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "source file not readable"),
                    ));
                }
            }
        }
        if let Some((a, b)) = self.time_range {
            if a > b {
                return Err(Error::InvalidValue("time range start is after its end".into()));
            }
        }
        Ok(())
    }
}

/// What a source yields: raw records, or a ready-made frame for synthetic data.
#[derive(Debug, Clone)]
pub enum SourceData {
    Records(Vec<EventRecord>),
    Frame(DatasetFrame),
}

/// Runs the parser for `desc.kind`. File sources honour `time_range` by filtering.
pub fn load_source(desc: &SourceDescriptor) -> Result<SourceData> {
    desc.validate()?;
    let path = Path::new(&desc.location);
    let mut records = match desc.kind {
        SourceKind::Nightscout => return parse_nightscout(desc).map(SourceData::Records),
        SourceKind::Synthetic => {
            let seed = desc.parameters["seed"];
            let days = desc.parameters.get("days").copied().unwrap_or(14.0);
            if seed < 0.0 || seed.fract() != 0.0 || days < 1.0 || days.fract() != 0.0 {
                return Err(Error::InvalidParameter("seed and days must be whole numbers, days >= 1".into()));
            }
            let params = SynthParams::from_map(&desc.parameters)?;
            return synth_generate(seed as u64, days as u32, &params).map(SourceData::Frame);
        }
        SourceKind::AppleHealth => parse_apple_health(path)?.records,
        SourceKind::OhioT1dm => parse_ohio(path)?,
        SourceKind::Csv => parse_csv(path)?,
    };
    if let Some((start, end)) = desc.time_range {
        records.retain(|r| r.timestamp() >= start && r.timestamp() <= end);
    }
    Ok(SourceData::Records(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_rules() {
        assert!(SourceDescriptor::new(SourceKind::Nightscout, "/tmp/x").validate().is_err());
        assert!(SourceDescriptor::new(SourceKind::Nightscout, "https://ns.example").validate().is_ok());
        assert!(SourceDescriptor::new(SourceKind::Synthetic, "").validate().is_err());
        let mut d = SourceDescriptor::new(SourceKind::Synthetic, "");
        d.parameters.insert("seed".into(), 7.0);
        assert!(d.validate().is_ok());
        assert!(SourceDescriptor::new(SourceKind::Csv, "/definitely/missing.csv").validate().is_err());
    }

    #[test]
    fn kind_names() {
        assert_eq!("apple-health".parse::<SourceKind>().unwrap(), SourceKind::AppleHealth);
        assert_eq!("OHIO".parse::<SourceKind>().unwrap(), SourceKind::OhioT1dm);
        assert!("tidepool".parse::<SourceKind>().is_err());
    }
}
