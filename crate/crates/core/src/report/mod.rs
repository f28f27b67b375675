//! Metric tables and SVG plots.

mod plots;
mod svg;
mod table;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{error_grid, gs_rmse, scalar_metrics, ErrorGridResult, GridKind, PairedSeries, ScalarMetrics};
use crate::units::GlucoseUnit;

pub use plots::{
    render_scatter, render_single_prediction, render_trajectories, scatter_svg, single_prediction_svg,
    trajectories_svg, EventMarker, HorizonPairs, SinglePrediction, TrajectoryInput,
};
pub use table::{metrics_table, TableFormat, TABLE_COLUMNS};

/// Metrics of one model at one horizon step, in mg/dL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonEvaluation {
    pub horizon_minutes: u32,
    pub metrics: ScalarMetrics,
    pub gs_rmse: f64,
    pub clarke: ErrorGridResult,
    pub parkes: ErrorGridResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub config_hash: String,
    /// Unit used when the report is displayed; stored values stay in mg/dL.
    pub unit: GlucoseUnit,
    pub horizons: Vec<HorizonEvaluation>,
}

impl EvaluationReport {
    /// Evaluates predicted trajectories against targets, one column per
    /// horizon step of `interval_minutes`.
    pub fn from_predictions(
        model: &str,
        config_hash: &str,
        unit: GlucoseUnit,
        interval_minutes: u32,
        targets: &DMatrix<f64>,
        predictions: &DMatrix<f64>,
    ) -> Result<Self> {
        if targets.shape() != predictions.shape() {
            return Err(Error::Alignment(format!(
                "targets are {}x{} but predictions are {}x{}",
                targets.nrows(),
                targets.ncols(),
                predictions.nrows(),
                predictions.ncols()
            )));
        }
        let horizons = (0..targets.ncols())
            .map(|h| {
                let pairs = PairedSeries::new(
                    targets.column(h).iter().copied().collect(),
                    predictions.column(h).iter().copied().collect(),
                )?;
                Ok(HorizonEvaluation {
                    horizon_minutes: (h as u32 + 1) * interval_minutes,
                    metrics: scalar_metrics(&pairs),
                    gs_rmse: gs_rmse(&pairs),
                    clarke: error_grid(&pairs, GridKind::Clarke),
                    parkes: error_grid(&pairs, GridKind::Parkes),
                })
            })
            .collect::<Result<_>>()?;
        Ok(EvaluationReport {
            model: model.to_string(),
            config_hash: config_hash.to_string(),
            unit,
            horizons,
        })
    }

    pub fn at_minutes(&self, minutes: u32) -> Option<&HorizonEvaluation> {
        self.horizons.iter().find(|h| h.horizon_minutes == minutes)
    }
}
