//! Blood-glucose forecasting toolkit: parse diabetes data sources into a
//! canonical 5-minute frame, train trajectory predictors and evaluate them
//! with clinical metrics and deterministic plots.

pub mod config;
pub mod error;
pub mod frame;
pub mod metrics;
pub mod models;
pub mod parsers;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod units;

pub use config::{PipelineConfig, Scaling};
pub use error::{Error, Result};
pub use frame::{validate_frame, DatasetFrame, EventKind, EventRecord, Signal};
pub use metrics::{error_grid, gs_rmse, scalar_metrics, GridKind, PairedSeries, Zone};
pub use models::{fit, predict, ModelSpec, TrainedModel};
pub use report::{metrics_table, EvaluationReport, TableFormat};
pub use units::{convert_glucose, GlucoseUnit, MGDL_PER_MMOLL};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data-sources.md")]
    mod data_sources {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
}
