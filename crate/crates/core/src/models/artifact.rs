//! Model artifact files.
//!
//! A JSON container with metadata; every numeric payload array is base64 of
//! little-endian `f64`s, so a load reproduces predictions bit for bit.
//! `payload.sha256` covers the encoded payload and scaler strings.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{registry, FitReport, ModelSpec, TrainedModel};
use crate::error::{Error, Result};
use crate::preprocess::ScalerParams;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtifactFile {
    format_version: u32,
    spec: ModelSpec,
    feature_names: Vec<String>,
    scaler: EncodedScaler,
    horizons: Vec<u32>,
    config_hash: String,
    fit_reports: Vec<FitReport>,
    payload: Payload,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncodedScaler {
    mean: String,
    scale: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Payload {
    sha256: String,
    predictors: Vec<EncodedEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncodedEntry {
    kind: String,
    arrays: BTreeMap<String, String>,
}

pub fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::Integrity(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Integrity(format!("payload of {} bytes is not a float64 array", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn checksum(scaler: &EncodedScaler, entries: &[EncodedEntry]) -> String {
    let mut h = Sha256::new();
    h.update(scaler.mean.as_bytes());
    h.update(b"\n");
    h.update(scaler.scale.as_bytes());
    for e in entries {
        h.update(b"\n");
        h.update(e.kind.as_bytes());
        for (name, data) in &e.arrays {
            h.update(b"\n");
            h.update(name.as_bytes());
            h.update(b"=");
            h.update(data.as_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn model_to_json(model: &TrainedModel) -> String {
    let scaler = EncodedScaler {
        mean: encode_f64s(&model.scaler.mean),
        scale: encode_f64s(&model.scaler.scale),
    };
    let predictors: Vec<EncodedEntry> = model
        .predictors
        .iter()
        .map(|p| EncodedEntry {
            kind: p.kind().to_string(),
            arrays: p.encode().iter().map(|(k, v)| (k.clone(), encode_f64s(v))).collect(),
        })
        .collect();
    let file = ArtifactFile {
        format_version: model.format_version,
        spec: model.spec.clone(),
        feature_names: model.feature_names.clone(),
        horizons: model.horizon_minutes(),
        config_hash: model.config_hash.clone(),
        fit_reports: model.fit_reports.clone(),
        payload: Payload {
            sha256: checksum(&scaler, &predictors),
            predictors,
        },
        scaler,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("artifact serializes");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str) -> Result<TrainedModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Integrity(format!("artifact is not valid JSON: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Integrity("artifact has no format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::UnsupportedFormat {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    let file: ArtifactFile =
        serde_json::from_value(value).map_err(|e| Error::Integrity(format!("artifact layout: {e}")))?;
    if checksum(&file.scaler, &file.payload.predictors) != file.payload.sha256 {
        return Err(Error::Integrity("payload checksum mismatch".into()));
    }
    let width = file.feature_names.len();
    let scaler = ScalerParams {
        mean: decode_f64s(&file.scaler.mean)?,
        scale: decode_f64s(&file.scaler.scale)?,
    };
    if scaler.mean.len() != width || scaler.scale.len() != width {
        return Err(Error::Integrity("scaler width differs from feature count".into()));
    }
    let horizons = file.horizons.len();
    if horizons == 0 || file.payload.predictors.len() != horizons || file.fit_reports.len() != horizons {
        return Err(Error::Integrity("predictor count differs from horizon count".into()));
    }
    let interval = file.horizons[0];
    if file.horizons.iter().enumerate().any(|(k, h)| *h != interval * (k as u32 + 1)) {
        return Err(Error::Integrity("horizons are not a uniform grid".into()));
    }

    let reg = registry().read().expect("registry lock");
    let mut predictors = Vec::with_capacity(horizons);
    for entry in &file.payload.predictors {
        let decoder = reg
            .decoder(&entry.kind)
            .ok_or_else(|| Error::Integrity(format!("no decoder registered for payload kind `{}`", entry.kind)))?;
        let arrays = entry
            .arrays
            .iter()
            .map(|(k, v)| decode_f64s(v).map(|d| (k.clone(), d)))
            .collect::<Result<_>>()?;
        predictors.push(decoder(&arrays, width)?);
    }
    Ok(TrainedModel {
        spec: file.spec,
        predictors,
        scaler,
        feature_names: file.feature_names,
        config_hash: file.config_hash,
        interval_minutes: interval,
        fit_reports: file.fit_reports,
        format_version: file.format_version,
    })
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
