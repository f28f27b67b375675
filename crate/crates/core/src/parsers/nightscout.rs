//! Nightscout REST client (`/api/v1/entries.json`, `/api/v1/treatments.json`).
//!
//! `sgv` values are mg/dL on the wire regardless of the site's display unit.

use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

use super::{SourceDescriptor, SourceKind};
use crate::error::{Error, Result};
use crate::frame::{sort_records, EventKind, EventRecord};

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
            timeout: Duration::from_secs(30),
        }
    }
}

pub const PAGE_SIZE: usize = 1000;
const MAX_PAGES: usize = 10_000;

pub fn parse_nightscout(desc: &SourceDescriptor) -> Result<Vec<EventRecord>> {
    parse_nightscout_with(desc, RetryPolicy::default())
}

pub fn parse_nightscout_with(desc: &SourceDescriptor, policy: RetryPolicy) -> Result<Vec<EventRecord>> {
    if desc.kind != SourceKind::Nightscout {
        return Err(Error::InvalidValue(format!("{:?} source given to the Nightscout parser", desc.kind)));
    }
    let client = NightscoutClient::new(&desc.location, desc.credentials.clone(), policy)?;
    let range = desc.time_range;
    let mut records = client.entries(range)?;
    records.extend(client.treatments(range)?);
    sort_records(&mut records);
    Ok(records)
}

pub struct NightscoutClient {
    base: String,
    credential: Option<String>,
    policy: RetryPolicy,
    http: Client,
}

impl NightscoutClient {
    pub fn new(base: &str, credential: Option<String>, policy: RetryPolicy) -> Result<Self> {
        let base = base.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(Error::InvalidValue(format!("Nightscout location `{base}` is not an http(s) URL")));
        }
        let http = Client::builder()
            .timeout(policy.timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(NightscoutClient {
            base,
            credential,
            policy,
            http,
        })
    }

    /// CGM entries, newest-first pages walked backwards via `find[date][$lt]`.
    pub fn entries(&self, range: Option<(DateTime<Utc>, DateTime<Utc>)>) -> Result<Vec<EventRecord>> {
        let mut out = Vec::new();
        let mut upper: Option<i64> = range.map(|(_, end)| end.timestamp_millis() + 1);
        for _ in 0..MAX_PAGES {
            let mut query = vec![("count".to_string(), PAGE_SIZE.to_string())];
            if let Some((start, _)) = range {
                query.push(("find[date][$gte]".into(), start.timestamp_millis().to_string()));
            }
            if let Some(u) = upper {
                query.push(("find[date][$lt]".into(), u.to_string()));
            }
            let items = self.get_array("/api/v1/entries.json", &query, "entries")?;
            let page_len = items.len();
            let mut oldest: Option<i64> = None;
            for item in &items {
                let ms = entry_millis(item).ok_or_else(|| {
                    Error::parse("Nightscout entries", format!("entry without a usable date: {item}"))
                })?;
                oldest = Some(oldest.map_or(ms, |o: i64| o.min(ms)));
                if let Some(rec) = map_entry(item, ms)? {
                    out.push(rec);
                }
            }
            match oldest {
                Some(o) if page_len >= PAGE_SIZE && upper != Some(o) => upper = Some(o),
                _ => break,
            }
        }
        Ok(out)
    }

    pub fn treatments(&self, range: Option<(DateTime<Utc>, DateTime<Utc>)>) -> Result<Vec<EventRecord>> {
        let iso = |t: DateTime<Utc>| t.to_rfc3339_opts(SecondsFormat::Millis, true);
        let mut out = Vec::new();
        let mut upper: Option<String> = range.map(|(_, end)| iso(end + chrono::Duration::milliseconds(1)));
        for _ in 0..MAX_PAGES {
            let mut query = vec![("count".to_string(), PAGE_SIZE.to_string())];
            if let Some((start, _)) = range {
                query.push(("find[created_at][$gte]".into(), iso(start)));
            }
            if let Some(u) = &upper {
                query.push(("find[created_at][$lt]".into(), u.clone()));
            }
            let items = self.get_array("/api/v1/treatments.json", &query, "treatments")?;
            let page_len = items.len();
            let mut oldest: Option<DateTime<Utc>> = None;
            for item in &items {
                let t = treatment_time(item).ok_or_else(|| {
                    Error::parse("Nightscout treatments", format!("treatment without created_at: {item}"))
                })?;
                oldest = Some(oldest.map_or(t, |o| o.min(t)));
                out.extend(map_treatment(item, t)?);
            }
            match oldest {
                Some(o) if page_len >= PAGE_SIZE && upper.as_deref() != Some(iso(o).as_str()) => {
                    upper = Some(iso(o))
                }
                _ => break,
            }
        }
        Ok(out)
    }

    fn get_array(&self, path: &str, query: &[(String, String)], entity: &str) -> Result<Vec<Value>> {
        let body = self.get_with_retries(path, query)?;
        let value: Value = serde_json::from_str(&body)
            .map_err(|e| Error::parse(format!("Nightscout {entity}"), e))?;
        match value {
            Value::Array(items) => Ok(items),
            other => Err(Error::parse(
                format!("Nightscout {entity}"),
                format!("expected a JSON array, got {}", kind_name(&other)),
            )),
        }
    }

    fn get_with_retries(&self, path: &str, query: &[(String, String)]) -> Result<String> {
        let url = format!("{}{}", self.base, path);
        let mut backoff = self.policy.initial_backoff;
        let mut last_err = String::new();
        for attempt in 0..self.policy.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            let mut req = self.http.get(&url).query(query).header("accept", "application/json");
            if let Some(cred) = &self.credential {
                // A 40-hex-digit credential is an already hashed API secret;
                // anything else is an access token.
                if cred.len() == 40 && cred.chars().all(|c| c.is_ascii_hexdigit()) {
                    req = req.header("api-secret", cred);
                } else {
                    req = req.query(&[("token", cred)]);
                }
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                        return Err(Error::Auth(self.base.clone()));
                    }
                    if status.is_server_error() {
                        last_err = format!("{url}: HTTP {status}");
                        continue;
                    }
                    if !status.is_success() {
                        return Err(Error::Transport(format!("{url}: HTTP {status}")));
                    }
                    return resp.text().map_err(|e| Error::Transport(format!("{url}: {e}")));
                }
                Err(e) => last_err = format!("{url}: {e}"),
            }
        }
        Err(Error::Transport(format!(
            "{last_err} (after {} attempts)",
            self.policy.attempts.max(1)
        )))
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn number(v: &Value, key: &str) -> Option<f64> {
    match v.get(key)? {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn entry_millis(item: &Value) -> Option<i64> {
    number(item, "date").map(|d| d as i64).or_else(|| {
        item.get("dateString")
            .and_then(Value::as_str)
            .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
            .map(|t| t.timestamp_millis())
    })
}

fn map_entry(item: &Value, millis: i64) -> Result<Option<EventRecord>> {
    let Some(sgv) = number(item, "sgv") else {
        return Ok(None);
    };
    let t = DateTime::from_timestamp_millis(millis)
        .ok_or_else(|| Error::parse("Nightscout entries", format!("date {millis} out of range")))?;
    match EventRecord::new(t, EventKind::Cgm, sgv) {
        Ok(r) => Ok(Some(r)),
        Err(e) => {
            log::warn!("skipping Nightscout entry at {t}: {e}");
            Ok(None)
        }
    }
}

fn treatment_time(item: &Value) -> Option<DateTime<Utc>> {
    item.get("created_at")
        .and_then(Value::as_str)
        .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
        .map(|t| t.with_timezone(&Utc))
        .or_else(|| number(item, "mills").and_then(|m| DateTime::from_timestamp_millis(m as i64)))
}

fn map_treatment(item: &Value, t: DateTime<Utc>) -> Result<Vec<EventRecord>> {
    let bad = |e: Error| Error::parse("Nightscout treatments", e);
    let mut out = Vec::new();
    let event_type = item.get("eventType").and_then(Value::as_str).unwrap_or("");
    if event_type.eq_ignore_ascii_case("Temp Basal") {
        let rate = number(item, "absolute").or_else(|| number(item, "rate"));
        if let Some(rate) = rate {
            let duration = number(item, "duration");
            out.push(EventRecord::basal(t, rate, duration).map_err(bad)?);
        }
    }
    if let Some(insulin) = number(item, "insulin").filter(|v| *v > 0.0) {
        out.push(EventRecord::new(t, EventKind::Bolus, insulin).map_err(bad)?);
    }
    if let Some(carbs) = number(item, "carbs").filter(|v| *v > 0.0) {
        out.push(EventRecord::new(t, EventKind::Carbs, carbs).map_err(bad)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn maps_sgv_entry() {
        let item = json!({"_id": "a", "sgv": 120, "date": 1704110400000i64, "type": "sgv"});
        let rec = map_entry(&item, entry_millis(&item).unwrap()).unwrap().unwrap();
        assert_eq!(rec.kind(), EventKind::Cgm);
        assert_eq!(rec.value(), 120.0);
        assert_eq!(rec.timestamp().timestamp(), 1_704_110_400);
    }

    #[test]
    fn calibration_entries_are_ignored() {
        let item = json!({"mbg": 130, "date": 1704110400000i64, "type": "mbg"});
        assert!(map_entry(&item, 1704110400000).unwrap().is_none());
    }

    #[test]
    fn maps_treatments() {
        let t = Utc::now();
        let bolus = map_treatment(&json!({"eventType": "Correction Bolus", "insulin": 2.5}), t).unwrap();
        assert_eq!(bolus.len(), 1);
        assert_eq!(bolus[0].kind(), EventKind::Bolus);
        assert_eq!(bolus[0].value(), 2.5);

        let meal = map_treatment(&json!({"eventType": "Meal Bolus", "insulin": 4, "carbs": 40}), t).unwrap();
        assert_eq!(meal.len(), 2);

        let temp = map_treatment(&json!({"eventType": "Temp Basal", "absolute": 0.8, "duration": 30}), t).unwrap();
        assert_eq!(temp[0].kind(), EventKind::Basal);
        assert_eq!(temp[0].duration_minutes(), Some(30.0));
    }

    #[test]
    fn rejects_non_http_location() {
        assert!(NightscoutClient::new("ftp://x", None, RetryPolicy::default()).is_err());
    }
}
