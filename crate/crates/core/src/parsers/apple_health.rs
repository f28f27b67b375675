//! Streaming reader for Apple Health `export.xml`.
//!
//! Exports can be several gigabytes, so the file is read event by event and
//! only `Record` elements of the four supported quantity types are kept.

use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Utc};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::xml_util::attr;
use crate::error::{Error, Result};
use crate::frame::{sort_records, EventKind, EventRecord};
use crate::units::{convert_glucose, GlucoseUnit};

pub const BLOOD_GLUCOSE: &str = "HKQuantityTypeIdentifierBloodGlucose";
pub const INSULIN_DELIVERY: &str = "HKQuantityTypeIdentifierInsulinDelivery";
pub const DIETARY_CARBS: &str = "HKQuantityTypeIdentifierDietaryCarbohydrates";
pub const HEART_RATE: &str = "HKQuantityTypeIdentifierHeartRate";
const INSULIN_REASON_KEY: &str = "HKInsulinDeliveryReason";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppleHealthImport {
    pub records: Vec<EventRecord>,
    /// `Record` elements of types this reader does not map.
    pub skipped_records: usize,
}

pub fn parse_apple_health(path: &Path) -> Result<AppleHealthImport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_apple_health_reader(std::io::BufReader::new(file))
}

struct Pending {
    type_id: String,
    unit: String,
    value: f64,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    insulin_reason: Option<String>,
}

pub fn parse_apple_health_reader<R: BufRead>(input: R) -> Result<AppleHealthImport> {
    let mut reader = Reader::from_reader(input);
    let mut buf = Vec::new();
    let mut out = AppleHealthImport::default();
    let mut pending: Option<Pending> = None;

    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| {
            Error::parse(
                format!("Apple Health export at byte {}", reader.buffer_position()),
                e,
            )
        })?;
        let offset = reader.buffer_position();
        match event {
            Event::Eof => break,
            Event::Empty(ref e) if e.local_name().as_ref() == b"Record" => {
                if let Some(p) = read_record(e, offset, &mut out)? {
                    out.records.extend(finish(p, offset)?);
                }
            }
            Event::Start(ref e) if e.local_name().as_ref() == b"Record" => {
                pending = read_record(e, offset, &mut out)?;
            }
            Event::Empty(ref e) | Event::Start(ref e)
                if e.local_name().as_ref() == b"MetadataEntry" =>
            {
                if let Some(p) = pending.as_mut() {
                    let ctx = format!("MetadataEntry at byte {offset}");
                    if attr(e, "key", &ctx)?.as_deref() == Some(INSULIN_REASON_KEY) {
                        p.insulin_reason = attr(e, "value", &ctx)?;
                    }
                }
            }
            Event::End(ref e) if e.local_name().as_ref() == b"Record" => {
                if let Some(p) = pending.take() {
                    out.records.extend(finish(p, offset)?);
                }
            }
            _ => {}
        }
        buf.clear();
    }
    if out.skipped_records > 0 {
        log::warn!("skipped {} Apple Health records of unsupported types", out.skipped_records);
    }
    sort_records(&mut out.records);
    Ok(out)
}

fn read_record(e: &BytesStart<'_>, offset: u64, out: &mut AppleHealthImport) -> Result<Option<Pending>> {
    let ctx = format!("Record at byte {offset}");
    let Some(type_id) = attr(e, "type", &ctx)? else {
        out.skipped_records += 1;
        return Ok(None);
    };
    if ![BLOOD_GLUCOSE, INSULIN_DELIVERY, DIETARY_CARBS, HEART_RATE].contains(&type_id.as_str()) {
        out.skipped_records += 1;
        return Ok(None);
    }
    let need = |name: &str| -> Result<String> {
        attr(e, name, &ctx)?.ok_or_else(|| Error::parse(&ctx, format!("missing `{name}` attribute")))
    };
    let value_text = need("value")?;
    let value: f64 = value_text
        .trim()
        .parse()
        .map_err(|_| Error::parse(&ctx, format!("value `{value_text}` is not a number")))?;
    let start = parse_apple_time(&need("startDate")?).ok_or_else(|| Error::parse(&ctx, "bad startDate"))?;
    let end = match attr(e, "endDate", &ctx)? {
        Some(s) => parse_apple_time(&s).ok_or_else(|| Error::parse(&ctx, "bad endDate"))?,
        None => start,
    };
    Ok(Some(Pending {
        type_id,
        unit: attr(e, "unit", &ctx)?.unwrap_or_default(),
        value,
        start,
        end,
        insulin_reason: None,
    }))
}

fn finish(p: Pending, offset: u64) -> Result<Option<EventRecord>> {
    let ctx = format!("{} record ending at byte {offset}", p.type_id);
    let rec = match p.type_id.as_str() {
        BLOOD_GLUCOSE => {
            let mgdl = if p.unit.to_ascii_lowercase().starts_with("mmol") {
                convert_glucose(p.value, GlucoseUnit::MmolL, GlucoseUnit::MgDl)?
            } else {
                p.value
            };
            EventRecord::new(p.start, EventKind::Cgm, mgdl)
        }
        INSULIN_DELIVERY if p.insulin_reason.as_deref() == Some("1") => {
            // basal deliveries are reported as units over [start, end]
            let minutes = (p.end - p.start).num_seconds() as f64 / 60.0;
            if minutes <= 0.0 {
                return Ok(None);
            }
            EventRecord::basal(p.start, p.value * 60.0 / minutes, Some(minutes))
        }
        INSULIN_DELIVERY => EventRecord::new(p.start, EventKind::Bolus, p.value),
        DIETARY_CARBS => EventRecord::new(p.start, EventKind::Carbs, p.value),
        HEART_RATE => EventRecord::new(p.start, EventKind::HeartRate, p.value),
        _ => return Ok(None),
    };
    rec.map(Some).map_err(|e| Error::parse(ctx, e))
}

/// Apple uses `2024-01-01 12:00:00 +0100`.
pub fn parse_apple_time(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_str(s.trim(), "%Y-%m-%d %H:%M:%S %z")
        .ok()
        .map(|t| t.with_timezone(&Utc))
}
