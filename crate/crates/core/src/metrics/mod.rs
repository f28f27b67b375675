//! Scalar error metrics, glucose-specific RMSE and error-grid analysis.

mod clarke;
mod gsrmse;
mod parkes;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{CGM_MAX_MGDL, CGM_MIN_MGDL};

pub use clarke::clarke_zone;
pub use gsrmse::{smooth_step_down, smooth_step_up, Penalty, PenaltyParams};
pub use parkes::parkes_zone;

/// Reference and predicted glucose values in mg/dL.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    reference: Vec<f64>,
    predicted: Vec<f64>,
}

impl PairedSeries {
    pub fn new(reference: Vec<f64>, predicted: Vec<f64>) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::EmptyInput);
        }
        if reference.len() != predicted.len() {
            return Err(Error::Shape {
                expected: reference.len(),
                actual: predicted.len(),
            });
        }
        if let Some(r) = reference
            .iter()
            .find(|r| !r.is_finite() || **r < CGM_MIN_MGDL || **r > CGM_MAX_MGDL)
        {
            return Err(Error::InvalidValue(format!(
                "reference glucose {r} outside [{CGM_MIN_MGDL}, {CGM_MAX_MGDL}] mg/dL"
            )));
        }
        if let Some(p) = predicted.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite prediction {p}")));
        }
        Ok(PairedSeries { reference, predicted })
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.reference.iter().copied().zip(self.predicted.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub mard_percent: f64,
    pub me: f64,
    pub mre_percent: f64,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

pub fn scalar_metrics(pairs: &PairedSeries) -> ScalarMetrics {
    let n = pairs.len();
    ScalarMetrics {
        rmse: mean(pairs.pairs().map(|(r, p)| (p - r) * (p - r)), n).sqrt(),
        mae: mean(pairs.pairs().map(|(r, p)| (p - r).abs()), n),
        mard_percent: 100.0 * mean(pairs.pairs().map(|(r, p)| (p - r).abs() / r), n),
        me: mean(pairs.pairs().map(|(r, p)| p - r), n),
        mre_percent: 100.0 * mean(pairs.pairs().map(|(r, p)| (p - r) / r), n),
    }
}

pub fn gs_rmse(pairs: &PairedSeries) -> f64 {
    gs_rmse_with(pairs, &Penalty::default())
}

pub fn gs_rmse_with(pairs: &PairedSeries, penalty: &Penalty) -> f64 {
    mean(
        pairs.pairs().map(|(r, p)| penalty.value(r, p) * (p - r) * (p - r)),
        pairs.len(),
    )
    .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Zone {
    A,
    B,
    C,
    D,
    E,
}

impl Zone {
    pub const ALL: [Zone; 5] = [Zone::A, Zone::B, Zone::C, Zone::D, Zone::E];
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Zone::A => "A",
            Zone::B => "B",
            Zone::C => "C",
            Zone::D => "D",
            Zone::E => "E",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GridKind {
    Clarke,
    Parkes,
}

impl GridKind {
    pub fn zone(self, reference: f64, predicted: f64) -> Zone {
        match self {
            GridKind::Clarke => clarke_zone(reference, predicted),
            GridKind::Parkes => parkes_zone(reference, predicted),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GridKind::Clarke => "clarke",
            GridKind::Parkes => "parkes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGridResult {
    pub grid_kind: GridKind,
    pub zone_counts: BTreeMap<Zone, usize>,
    pub zone_percentages: BTreeMap<Zone, f64>,
}

pub fn error_grid(pairs: &PairedSeries, kind: GridKind) -> ErrorGridResult {
    let mut zone_counts: BTreeMap<Zone, usize> = Zone::ALL.iter().map(|z| (*z, 0)).collect();
    for (r, p) in pairs.pairs() {
        *zone_counts.entry(kind.zone(r, p)).or_default() += 1;
    }
    let n = pairs.len() as f64;
    let zone_percentages = zone_counts
        .iter()
        .map(|(z, c)| (*z, 100.0 * *c as f64 / n))
        .collect();
    ErrorGridResult {
        grid_kind: kind,
        zone_counts,
        zone_percentages,
    }
}
