//! Reader for the Ohio T1DM per-subject XML layout.
//!
//! ```xml
//! <patient id="559">
//!   <glucose_level><event ts="07-12-2021 01:17:00" value="101"/></glucose_level>
//!   <basal><event ts="..." value="0.7"/></basal>
//!   <temp_basal><event ts_begin="..." ts_end="..." value="0.0"/></temp_basal>
//!   <bolus><event ts_begin="..." ts_end="..." type="normal" dose="1.2"/></bolus>
//!   <meal><event ts="..." type="Lunch" carbs="45"/></meal>
//!   <basis_heart_rate><event ts="..." value="78"/></basis_heart_rate>
//! </patient>
//! ```

use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::xml_util::attr;
use crate::error::{Error, Result};
use crate::frame::{sort_records, EventKind, EventRecord};

const TS_FORMAT: &str = "%d-%m-%Y %H:%M:%S";

pub fn parse_ohio(path: &Path) -> Result<Vec<EventRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ohio_reader(std::io::BufReader::new(file))
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Glucose,
    Basal,
    TempBasal,
    Bolus,
    Meal,
    HeartRate,
    Other,
}

impl Section {
    fn from_tag(tag: &[u8]) -> Section {
        match tag {
            b"glucose_level" => Section::Glucose,
            b"basal" => Section::Basal,
            b"temp_basal" => Section::TempBasal,
            b"bolus" => Section::Bolus,
            b"meal" => Section::Meal,
            b"basis_heart_rate" => Section::HeartRate,
            _ => Section::Other,
        }
    }
}

pub fn parse_ohio_reader<R: BufRead>(input: R) -> Result<Vec<EventRecord>> {
    let mut reader = Reader::from_reader(input);
    let mut buf = Vec::new();
    let mut section = Section::Other;
    let mut section_name = String::new();
    let mut index = 0usize;
    let mut saw_glucose = false;
    let mut out = Vec::new();

    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| {
            Error::parse(format!("Ohio XML at byte {}", reader.buffer_position()), e)
        })?;
        match event {
            Event::Eof => break,
            Event::Start(ref e) if e.local_name().as_ref() != b"event" => {
                let tag = e.local_name();
                let next = Section::from_tag(tag.as_ref());
                if next != Section::Other || tag.as_ref() != b"patient" {
                    section = next;
                    section_name = String::from_utf8_lossy(tag.as_ref()).into_owned();
                    index = 0;
                }
                if section == Section::Glucose {
                    saw_glucose = true;
                }
            }
            Event::Empty(ref e) if e.local_name().as_ref() == b"glucose_level" => saw_glucose = true,
            Event::End(ref e) if e.local_name().as_ref() != b"event" => section = Section::Other,
            Event::Empty(ref e) | Event::Start(ref e) if e.local_name().as_ref() == b"event" => {
                let ctx = format!("<{section_name}> event #{index}");
                index += 1;
                if let Some(rec) = map_event(section, e, &ctx)? {
                    out.push(rec);
                }
            }
            _ => {}
        }
        buf.clear();
    }
    if !saw_glucose {
        return Err(Error::parse("Ohio XML", "missing mandatory <glucose_level> section"));
    }
    sort_records(&mut out);
    Ok(out)
}

fn time_attr(e: &BytesStart<'_>, names: &[&str], ctx: &str) -> Result<DateTime<Utc>> {
    for name in names {
        if let Some(s) = attr(e, name, ctx)? {
            return NaiveDateTime::parse_from_str(s.trim(), TS_FORMAT)
                .map(|t| t.and_utc())
                .map_err(|_| Error::parse(ctx, format!("unparseable timestamp `{s}`")));
        }
    }
    Err(Error::parse(ctx, format!("missing `{}` attribute", names[0])))
}

fn num_attr(e: &BytesStart<'_>, name: &str, ctx: &str) -> Result<f64> {
    let s = attr(e, name, ctx)?.ok_or_else(|| Error::parse(ctx, format!("missing `{name}` attribute")))?;
    s.trim()
        .parse()
        .map_err(|_| Error::parse(ctx, format!("`{name}`=`{s}` is not a number")))
}

fn map_event(section: Section, e: &BytesStart<'_>, ctx: &str) -> Result<Option<EventRecord>> {
    let rec = match section {
        Section::Glucose => EventRecord::new(time_attr(e, &["ts"], ctx)?, EventKind::Cgm, num_attr(e, "value", ctx)?),
        Section::Basal => EventRecord::basal(time_attr(e, &["ts"], ctx)?, num_attr(e, "value", ctx)?, None),
        Section::TempBasal => {
            let begin = time_attr(e, &["ts_begin"], ctx)?;
            let end = time_attr(e, &["ts_end"], ctx)?;
            let minutes = (end - begin).num_seconds() as f64 / 60.0;
            EventRecord::basal(begin, num_attr(e, "value", ctx)?, Some(minutes.max(0.0)))
        }
        Section::Bolus => EventRecord::new(
            time_attr(e, &["ts_begin", "ts"], ctx)?,
            EventKind::Bolus,
            num_attr(e, "dose", ctx)?,
        ),
        Section::Meal => EventRecord::new(time_attr(e, &["ts"], ctx)?, EventKind::Carbs, num_attr(e, "carbs", ctx)?),
        Section::HeartRate => EventRecord::new(
            time_attr(e, &["ts"], ctx)?,
            EventKind::HeartRate,
            num_attr(e, "value", ctx)?,
        ),
        Section::Other => return Ok(None),
    };
    rec.map(Some).map_err(|err| Error::parse(ctx, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(xml: &str) -> Result<Vec<EventRecord>> {
        parse_ohio_reader(xml.as_bytes())
    }

    #[test]
    fn maps_sections() {
        let xml = r#"<patient id="1" weight="99" insulin_type="Novalog">
  <glucose_level>
    <event ts="07-12-2021 01:17:00" value="142"/>
  </glucose_level>
  <finger_stick><event ts="07-12-2021 01:20:00" value="150"/></finger_stick>
  <meal><event ts="07-12-2021 01:10:00" type="Breakfast" carbs="45"/></meal>
  <bolus><event ts_begin="07-12-2021 01:11:00" ts_end="07-12-2021 01:11:00" type="normal" dose="4.2" bwz_carb_input="45"/></bolus>
  <basal><event ts="07-12-2021 00:00:00" value="0.7"/></basal>
  <temp_basal><event ts_begin="07-12-2021 02:00:00" ts_end="07-12-2021 02:30:00" value="0.0"/></temp_basal>
</patient>"#;
        let recs = parse(xml).unwrap();
        let cgm: Vec<_> = recs.iter().filter(|r| r.kind() == EventKind::Cgm).collect();
        assert_eq!(cgm.len(), 1, "finger sticks are not CGM");
        assert_eq!(cgm[0].value(), 142.0);
        let carbs: Vec<_> = recs.iter().filter(|r| r.kind() == EventKind::Carbs).collect();
        assert_eq!(carbs[0].value(), 45.0);
        let temp = recs.iter().find(|r| r.duration_minutes().is_some()).unwrap();
        assert_eq!(temp.duration_minutes(), Some(30.0));
        assert_eq!(recs.len(), 5);
    }

    #[test]
    fn output_is_sorted() {
        let xml = r#"<patient id="1"><glucose_level>
    <event ts="07-12-2021 01:27:00" value="120"/>
    <event ts="07-12-2021 01:17:00" value="110"/>
    <event ts="06-12-2021 23:00:00" value="100"/>
  </glucose_level></patient>"#;
        let recs = parse(xml).unwrap();
        let vals: Vec<f64> = recs.iter().map(|r| r.value()).collect();
        assert_eq!(vals, vec![100.0, 110.0, 120.0]);
    }

    #[test]
    fn missing_glucose_section() {
        let xml = r#"<patient id="1"><meal><event ts="07-12-2021 01:10:00" carbs="45"/></meal></patient>"#;
        assert!(parse(xml).unwrap_err().to_string().contains("glucose_level"));
    }

    #[test]
    fn bad_timestamp_cites_element() {
        let xml = r#"<patient id="1"><glucose_level><event ts="2021-12-07T01:17" value="110"/></glucose_level></patient>"#;
        let err = parse(xml).unwrap_err().to_string();
        assert!(err.contains("<glucose_level> event #0"), "{err}");
    }
}
