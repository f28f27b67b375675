//! impute → featurize → split → scale → fit → evaluate, end to end.
//!
//! The split is made on the frame rather than on samples. The first test
//! origin fixes a boundary row `b`; training samples come from rows before
//! `b` only, so no training window or target touches a test-period value.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::frame::DatasetFrame;
use crate::models::{self, ModelSpec, TrainedModel};
use crate::preprocess::{featurize, fit_scaler, impute, train_size, ScalerParams, SupervisedSet};
use crate::report::EvaluationReport;
use crate::units::GlucoseUnit;

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: SupervisedSet,
    pub test: SupervisedSet,
    pub scaler: ScalerParams,
    /// Frame row of the first test origin; rows from here on are the test period.
    pub boundary: usize,
}

fn min_rows(config: &PipelineConfig) -> usize {
    config.num_lagged_samples + config.horizon_steps()
}

fn insufficient(frame_len: usize, config: &PipelineConfig, what: &str) -> Error {
    Error::InsufficientData(format!(
        "{what}: the dataset has {frame_len} rows of {} min but {} lagged samples plus {} horizon steps need at least {} rows for training and as many again for testing",
        config.interval_minutes,
        config.num_lagged_samples,
        config.horizon_steps(),
        2 * min_rows(config)
    ))
}

/// Builds leakage-free train and test sets and fits the scaler on training data.
pub fn prepare(frame: &DatasetFrame, config: &PipelineConfig) -> Result<PreparedData> {
    config.validate()?;
    let lags = config.num_lagged_samples;
    let full = featurize(&impute(frame, config.imputation_max_gap_minutes), config)
        .map_err(|_| insufficient(frame.len(), config, "no complete samples"))?;
    if full.len() < 2 {
        return Err(insufficient(frame.len(), config, "fewer than two samples"));
    }
    let cut = train_size(full.len(), config.test_fraction);
    let boundary = frame
        .index_of(full.sample_timestamps[cut])
        .ok_or_else(|| Error::Alignment("sample origin outside the frame".into()))?;

    let train_frame = frame.slice(0..boundary);
    let train = featurize(&impute(&train_frame, config.imputation_max_gap_minutes), config)
        .map_err(|_| insufficient(frame.len(), config, "no training samples before the test period"))?;
    let test_frame = frame.slice(boundary + 1 - lags..frame.len());
    let test = featurize(&impute(&test_frame, config.imputation_max_gap_minutes), config)
        .map_err(|_| insufficient(frame.len(), config, "no test samples"))?;
    let scaler = fit_scaler(&train, config.scaling)?;
    Ok(PreparedData {
        train,
        test,
        scaler,
        boundary,
    })
}

/// Fits `spec` on the prepared training set and stamps it with the config hash.
/// Seeded learners without their own `random_seed` use the config seed.
pub fn train(config: &PipelineConfig, data: &PreparedData, spec: &ModelSpec) -> Result<TrainedModel> {
    let mut spec = spec.clone();
    if !spec.hyperparameters.contains_key("random_seed") && spec.resolved()?.contains_key("random_seed") {
        spec = spec.with("random_seed", config.random_seed);
    }
    let mut model = models::fit(&spec, &data.train, &data.scaler)?;
    model.config_hash = config.content_hash();
    model.interval_minutes = config.interval_minutes;
    Ok(model)
}

/// Test-set evaluation at every horizon step.
pub fn evaluate(model: &TrainedModel, test: &SupervisedSet, unit: GlucoseUnit) -> Result<EvaluationReport> {
    if model.feature_names != test.feature_names {
        return Err(Error::Schema("model features differ from the test features".into()));
    }
    let predictions = models::predict(model, &test.features)?;
    EvaluationReport::from_predictions(
        &model.spec.name,
        &model.config_hash,
        unit,
        model.interval_minutes,
        &test.targets,
        &predictions,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Signal;
    use crate::parsers::{synth_generate, SynthParams};

    fn config() -> PipelineConfig {
        let mut c = PipelineConfig::new("synthetic.csv");
        c.prediction_horizon_minutes = 30;
        c.num_lagged_samples = 6;
        c.feature_signals = vec![Signal::Cgm, Signal::Carbs, Signal::Bolus];
        c.what_if_signals = vec![Signal::Carbs];
        c
    }

    fn frame() -> DatasetFrame {
        synth_generate(3, 2, &SynthParams::default()).unwrap()
    }

    #[test]
    fn train_windows_end_before_boundary() {
        let (f, c) = (frame(), config());
        let d = prepare(&f, &c).unwrap();
        let h = c.horizon_steps();
        let last_train = f.index_of(*d.train.sample_timestamps.last().unwrap()).unwrap();
        assert!(last_train + h < d.boundary);
        assert_eq!(d.test.sample_timestamps[0], f.timestamp(d.boundary));
    }

    #[test]
    fn test_mutation_does_not_reach_training() {
        let (f, c) = (frame(), config());
        let d = prepare(&f, &c).unwrap();
        let mut g = f.clone();
        for s in [Signal::Cgm, Signal::Carbs, Signal::Bolus] {
            let col = g.columns.get_mut(&s).unwrap();
            for v in col[d.boundary..].iter_mut().flatten() {
                *v += 17.0;
            }
        }
        let e = prepare(&g, &c).unwrap();
        assert_eq!(d.train, e.train);
        assert_eq!(d.scaler, e.scaler);
        assert_ne!(d.test.features, e.test.features);
    }

    #[test]
    fn short_dataset_reports_minimum() {
        let f = frame().slice(0..12);
        let mut c = config();
        c.prediction_horizon_minutes = 120;
        c.num_lagged_samples = 12;
        let err = prepare(&f, &c).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(ref m) if m.contains("72 rows")), "{err}");
    }

    #[test]
    fn evaluation_covers_every_step() {
        let (f, c) = (frame(), config());
        let d = prepare(&f, &c).unwrap();
        let m = train(&c, &d, &ModelSpec::new("ridge")).unwrap();
        assert_eq!(m.config_hash, c.content_hash());
        let r = evaluate(&m, &d.test, GlucoseUnit::MgDl).unwrap();
        let minutes: Vec<u32> = r.horizons.iter().map(|h| h.horizon_minutes).collect();
        assert_eq!(minutes, vec![5, 10, 15, 20, 25, 30]);
    }
}
