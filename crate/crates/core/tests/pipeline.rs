use bgforecast::parsers::{synth_generate, SynthParams};
use bgforecast::pipeline::{evaluate, prepare, train};
use bgforecast::preprocess::{featurize, impute, split};
use bgforecast::{DatasetFrame, GlucoseUnit, ModelSpec, PipelineConfig, Signal};
use chrono::{TimeZone, Utc};
use proptest::prelude::*;

fn config(lags: usize, horizon_minutes: u32) -> PipelineConfig {
    let mut c = PipelineConfig::new("synthetic.csv");
    c.num_lagged_samples = lags;
    c.prediction_horizon_minutes = horizon_minutes;
    c
}

fn synthetic(days: u32) -> DatasetFrame {
    synth_generate(2, days, &SynthParams::default()).unwrap()
}

#[test]
fn constant_cgm_gives_constant_targets() {
    let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let frame = DatasetFrame::new(start, 5).with_column(Signal::Cgm, vec![Some(120.0); 60]);
    let set = featurize(&impute(&frame, 30), &config(3, 60)).unwrap();
    assert_eq!(set.len(), 60 - 3 - 12 + 1);
    assert!(set.targets.iter().all(|&v| v == 120.0));
}

#[test]
fn chronological_split_orders_timestamps() {
    let set = featurize(&impute(&synthetic(2), 30), &config(6, 60)).unwrap();
    let (tr, te) = split(&set, 0.3).unwrap();
    assert_eq!(tr.len() + te.len(), set.len());
    assert!(tr.sample_timestamps.last().unwrap() < te.sample_timestamps.first().unwrap());
}

#[test]
fn prepared_train_windows_never_reach_test_targets() {
    let frame = synthetic(3);
    let c = config(12, 120);
    let data = prepare(&frame, &c).unwrap();
    let first_test = data.test.sample_timestamps[0];
    let last_train = *data.train.sample_timestamps.last().unwrap();
    let horizon = chrono::Duration::minutes(i64::from(c.prediction_horizon_minutes));
    assert!(last_train + horizon < first_test + chrono::Duration::minutes(5));
    assert_eq!(data.test.horizon_steps(), 24);
}

#[test]
fn evaluation_covers_every_horizon() {
    let frame = synthetic(3);
    let c = config(12, 120);
    let data = prepare(&frame, &c).unwrap();
    let model = train(&c, &data, &ModelSpec::new("ridge")).unwrap();
    let report = evaluate(&model, &data.test, GlucoseUnit::MgDl).unwrap();
    let minutes: Vec<u32> = report.horizons.iter().map(|h| h.horizon_minutes).collect();
    assert_eq!(minutes, (1..=24).map(|k| 5 * k).collect::<Vec<_>>());
    for m in [30, 60, 120] {
        assert!(report.at_minutes(m).is_some());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn test_period_mutation_cannot_leak(offset in 0usize..200, delta in -80.0f64..80.0, carbs in 0.0f64..90.0) {
        let mut frame = synthetic(2);
        let c = config(6, 60);
        let before = prepare(&frame, &c).unwrap();
        let n = frame.len();
        let i = (before.boundary + offset).min(n - 1);
        let cgm = frame.columns.get_mut(&Signal::Cgm).unwrap();
        cgm[i] = cgm[i].map(|v| (v + delta).clamp(40.0, 400.0));
        if let Some(col) = frame.columns.get_mut(&Signal::Carbs) {
            col[i] = Some(carbs);
        }
        let after = prepare(&frame, &c).unwrap();
        prop_assert_eq!(&before.train, &after.train);
        prop_assert_eq!(&before.scaler, &after.scaler);
        let spec = ModelSpec::new("ridge");
        let a = train(&c, &before, &spec).unwrap();
        let b = train(&c, &after, &spec).unwrap();
        prop_assert_eq!(a.payload_fingerprint(), b.payload_fingerprint());
    }
}
