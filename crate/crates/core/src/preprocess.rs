//! From a gridded frame to supervised learning matrices.

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, Scaling};
use crate::error::{Error, Result};
use crate::frame::{DatasetFrame, Signal};

/// Feature rows and multi-horizon targets. Targets are CGM in mg/dL and are
/// never scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    pub features: DMatrix<f64>,
    /// One column per horizon step, `CGM(t+1) .. CGM(t+H)`.
    pub targets: DMatrix<f64>,
    pub sample_timestamps: Vec<DateTime<Utc>>,
    pub feature_names: Vec<String>,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon_steps(&self) -> usize {
        self.targets.ncols()
    }

    /// Rows `range` as a new set.
    pub fn rows(&self, range: std::ops::Range<usize>) -> SupervisedSet {
        let n = range.len();
        SupervisedSet {
            features: self.features.rows(range.start, n).into_owned(),
            targets: self.targets.rows(range.start, n).into_owned(),
            sample_timestamps: self.sample_timestamps[range].to_vec(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }
}

pub fn lag_name(signal: Signal, lag: usize) -> String {
    format!("{}[t-{lag}]", signal.name())
}

pub fn lead_name(signal: Signal, lead: usize) -> String {
    format!("{}[t+{lead}]", signal.name())
}

/// Fills short interior gaps by linear interpolation.
///
/// Runs of at most `max_gap_minutes / interval` missing bins with a present
/// value on both sides are interpolated. Longer runs and leading or trailing
/// runs stay missing. Bolus and carbs treat every missing bin as zero.
pub fn impute(frame: &DatasetFrame, max_gap_minutes: u32) -> DatasetFrame {
    let max_run = (max_gap_minutes / frame.interval_minutes.max(1)) as usize;
    let mut out = frame.clone();
    for (signal, column) in out.columns.iter_mut() {
        if signal.is_count_like() {
            for v in column.iter_mut() {
                v.get_or_insert(0.0);
            }
            continue;
        }
        let mut i = 0;
        while i < column.len() {
            if column[i].is_some() {
                i += 1;
                continue;
            }
            let run_start = i;
            while i < column.len() && column[i].is_none() {
                i += 1;
            }
            let run_len = i - run_start;
            if run_start == 0 || i == column.len() || run_len > max_run {
                continue;
            }
            let left = column[run_start - 1].expect("left flank");
            let right = column[i].expect("right flank");
            let span = (run_len + 1) as f64;
            for k in 0..run_len {
                let w = (k + 1) as f64 / span;
                column[run_start + k] = Some(left + (right - left) * w);
            }
        }
    }
    out
}

/// Builds lagged (and optional what-if) features with multi-horizon targets.
///
/// For each origin `t`: `s(t-L+1) .. s(t)` for every feature signal, then
/// `s(t+1) .. s(t+H)` for every what-if signal; targets are `CGM(t+1) .. CGM(t+H)`.
/// Origins touching a missing value are dropped.
pub fn featurize(frame: &DatasetFrame, config: &PipelineConfig) -> Result<SupervisedSet> {
    let lags = config.num_lagged_samples;
    let horizon = config.horizon_steps();
    if lags == 0 || horizon == 0 {
        return Err(Error::InvalidConfig("lags and horizon steps must be at least 1".into()));
    }
    if config.interval_minutes != frame.interval_minutes {
        return Err(Error::InvalidConfig(format!(
            "config interval {} min does not match frame interval {} min",
            config.interval_minutes, frame.interval_minutes
        )));
    }
    let n = frame.len();
    if n < lags + horizon {
        return Err(Error::EmptySet(format!(
            "frame has {n} rows but {lags} lags + {horizon} horizon steps need at least {}",
            lags + horizon
        )));
    }
    let column = |s: Signal| {
        frame
            .column(s)
            .ok_or_else(|| Error::Schema(format!("signal `{s}` is not present in the data")))
    };
    let lagged: Vec<(Signal, &[Option<f64>])> = config
        .feature_signals
        .iter()
        .map(|&s| column(s).map(|c| (s, c)))
        .collect::<Result<_>>()?;
    let leads: Vec<(Signal, &[Option<f64>])> = config
        .what_if_signals
        .iter()
        .map(|&s| column(s).map(|c| (s, c)))
        .collect::<Result<_>>()?;
    let cgm = frame.cgm();

    let mut names = Vec::new();
    for (s, _) in &lagged {
        names.extend((0..lags).rev().map(|lag| lag_name(*s, lag)));
    }
    for (s, _) in &leads {
        names.extend((1..=horizon).map(|lead| lead_name(*s, lead)));
    }

    let mut feature_rows: Vec<f64> = Vec::new();
    let mut target_rows: Vec<f64> = Vec::new();
    let mut stamps = Vec::new();
    let mut row = Vec::with_capacity(names.len());
    let mut targets = Vec::with_capacity(horizon);
    'origins: for t in (lags - 1)..(n - horizon) {
        row.clear();
        targets.clear();
        for (_, col) in &lagged {
            for v in &col[t + 1 - lags..=t] {
                let Some(v) = *v else { continue 'origins };
                row.push(v);
            }
        }
        for (_, col) in &leads {
            for v in &col[t + 1..=t + horizon] {
                let Some(v) = *v else { continue 'origins };
                row.push(v);
            }
        }
        for v in &cgm[t + 1..=t + horizon] {
            let Some(v) = *v else { continue 'origins };
            targets.push(v);
        }
        feature_rows.extend_from_slice(&row);
        target_rows.extend_from_slice(&targets);
        stamps.push(frame.timestamp(t));
    }
    if stamps.is_empty() {
        return Err(Error::EmptySet("every candidate sample touches a missing value".into()));
    }
    let n_samples = stamps.len();
    Ok(SupervisedSet {
        features: DMatrix::from_row_slice(n_samples, names.len(), &feature_rows),
        targets: DMatrix::from_row_slice(n_samples, horizon, &target_rows),
        sample_timestamps: stamps,
        feature_names: names,
    })
}

/// Number of training rows for a chronological split: `ceil(n * (1 - f))`,
/// kept within `1 ..= n - 1`.
pub fn train_size(n: usize, test_fraction: f64) -> usize {
    // guard against 8.000000000000002 style rounding
    let raw = (n as f64 * (1.0 - test_fraction) - 1e-9).ceil() as usize;
    raw.clamp(1, n.saturating_sub(1).max(1))
}

/// Chronological split without shuffling.
pub fn split(set: &SupervisedSet, test_fraction: f64) -> Result<(SupervisedSet, SupervisedSet)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("test fraction {test_fraction} must lie in (0, 1)")));
    }
    let n = set.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} samples cannot be split (need at least 2)")));
    }
    let cut = train_size(n, test_fraction);
    Ok((set.rows(0..cut), set.rows(cut..n)))
}

/// Per-feature standardization parameters, fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ScalerParams {
    pub fn identity(width: usize) -> Self {
        ScalerParams {
            mean: vec![0.0; width],
            scale: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn transform(&self, features: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = features.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.apply(|x| *x = (*x - m) / s);
        }
        out
    }
}

/// Mean and population standard deviation per column. Columns with
/// (numerically) zero variance get scale 1.
pub fn scaler_fit(train: &SupervisedSet) -> Result<ScalerParams> {
    let n = train.len();
    if n == 0 {
        return Err(Error::EmptySet("cannot fit a scaler on zero samples".into()));
    }
    let mut mean = Vec::with_capacity(train.features.ncols());
    let mut scale = Vec::with_capacity(train.features.ncols());
    for col in train.features.column_iter() {
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        mean.push(m);
        scale.push(if sd <= 1e-12 * m.abs().max(1.0) { 1.0 } else { sd });
    }
    Ok(ScalerParams { mean, scale })
}

pub fn fit_scaler(train: &SupervisedSet, scaling: Scaling) -> Result<ScalerParams> {
    match scaling {
        Scaling::Standardize => scaler_fit(train),
        Scaling::None => Ok(ScalerParams::identity(train.features.ncols())),
    }
}

pub fn scaler_apply(params: &ScalerParams, set: &SupervisedSet) -> Result<SupervisedSet> {
    if params.width() != set.features.ncols() {
        return Err(Error::Shape {
            expected: params.width(),
            actual: set.features.ncols(),
        });
    }
    Ok(SupervisedSet {
        features: params.transform(&set.features),
        ..set.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Column;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn frame(cgm: Column) -> DatasetFrame {
        DatasetFrame::new(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(), 5).with_column(Signal::Cgm, cgm)
    }

    fn config(lags: usize, horizon_minutes: u32) -> PipelineConfig {
        let mut c = PipelineConfig::new("x.csv");
        c.num_lagged_samples = lags;
        c.prediction_horizon_minutes = horizon_minutes;
        c
    }

    #[test]
    fn impute_midpoint() {
        let f = impute(&frame(vec![Some(100.0), None, Some(110.0)]), 5);
        assert_eq!(f.cgm()[1], Some(105.0));
    }

    #[test]
    fn impute_leaves_long_and_edge_runs() {
        let mut cgm = vec![Some(100.0)];
        cgm.extend(vec![None; 7]);
        cgm.push(Some(120.0));
        let f = impute(&frame(cgm.clone()), 30);
        assert_eq!(f.cgm(), cgm.as_slice());

        let f = impute(&frame(vec![None, Some(100.0), Some(101.0), None]), 30);
        assert_eq!(f.cgm()[0], None);
        assert_eq!(f.cgm()[3], None);
    }

    #[test]
    fn impute_zero_fills_count_like() {
        let f = frame(vec![Some(100.0); 3]).with_column(Signal::Carbs, vec![None, Some(20.0), None]);
        let f = impute(&f, 0);
        assert_eq!(f.column(Signal::Carbs).unwrap(), &[Some(0.0), Some(20.0), Some(0.0)]);
    }

    #[test]
    fn featurize_counts_origins() {
        let f = frame((0..10).map(|i| Some(100.0 + i as f64)).collect());
        let set = featurize(&f, &config(2, 30)).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.feature_names, vec!["CGM[t-1]", "CGM[t-0]"]);
        assert_eq!(set.sample_timestamps[0], f.timestamp(1));
        assert_eq!(set.targets[(0, 0)], 102.0);
        assert_eq!(set.targets[(2, 5)], 109.0);
    }

    #[test]
    fn what_if_adds_horizon_columns() {
        let n = 20;
        let f = frame(vec![Some(120.0); n]).with_column(Signal::Carbs, vec![Some(0.0); n]);
        let mut c = config(2, 30);
        c.feature_signals.push(Signal::Carbs);
        let base = featurize(&f, &c).unwrap().feature_names.len();
        c.what_if_signals.push(Signal::Carbs);
        let set = featurize(&f, &c).unwrap();
        assert_eq!(set.feature_names.len(), base + 6);
        assert!(set.feature_names.contains(&"carbs[t+3]".to_string()));
        assert!(set.targets.iter().all(|v| *v == 120.0));
    }

    #[test]
    fn featurize_too_short() {
        let f = frame(vec![Some(120.0); 7]);
        assert!(matches!(featurize(&f, &config(2, 30)), Err(Error::EmptySet(_))));
    }

    #[test]
    fn featurize_drops_missing() {
        let mut cgm: Column = vec![Some(120.0); 12];
        cgm[5] = None;
        let set = featurize(&frame(cgm), &config(2, 10)).unwrap();
        // origins 1..=9, each window [t-1, t+2]; those covering index 5 are t = 3..=6
        assert_eq!(set.len(), 9 - 4);
    }

    #[test]
    fn missing_signal_is_schema_error() {
        let f = frame(vec![Some(120.0); 20]);
        let mut c = config(2, 10);
        c.feature_signals.push(Signal::HeartRate);
        assert!(matches!(featurize(&f, &c), Err(Error::Schema(_))));
    }

    fn set_of(n: usize) -> SupervisedSet {
        let f = frame((0..n + 3).map(|i| Some(100.0 + i as f64)).collect());
        featurize(&f, &config(2, 10)).unwrap()
    }

    #[test]
    fn split_sizes() {
        let set = set_of(10);
        assert_eq!(set.len(), 10);
        let (tr, te) = split(&set, 0.2).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(te.sample_timestamps, set.sample_timestamps[8..].to_vec());
        let (tr, te) = split(&set, 0.25).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert!(tr.sample_timestamps.last() < te.sample_timestamps.first());
        assert!(matches!(split(&set_of(1), 0.5), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn scaler_two_points_and_constant() {
        let set = SupervisedSet {
            features: DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 3.0, 5.0]),
            targets: DMatrix::zeros(2, 1),
            sample_timestamps: vec![Utc::now(); 2],
            feature_names: vec!["a".into(), "b".into()],
        };
        let p = scaler_fit(&set).unwrap();
        assert_eq!(p.mean, vec![2.0, 5.0]);
        assert_eq!(p.scale, vec![1.0, 1.0]);
        let out = scaler_apply(&p, &set).unwrap();
        assert_eq!(out.features.as_slice(), &[-1.0, 1.0, 0.0, 0.0]);

        let other = SupervisedSet {
            features: DMatrix::from_row_slice(1, 2, &[10.0, 10.0]),
            ..set.clone()
        };
        let out = scaler_apply(&p, &other.rows(0..1)).unwrap();
        assert_eq!(out.features[(0, 0)], 8.0);
    }

    proptest! {
        #[test]
        fn targets_match_frame(values in prop::collection::vec(proptest::option::weighted(0.9, 40.0f64..400.0), 30..120)) {
            let f = frame(values);
            let c = config(3, 30);
            if let Ok(set) = featurize(&f, &c) {
                for i in 0..set.len() {
                    let origin = f.index_of(set.sample_timestamps[i]).unwrap();
                    for k in 0..set.horizon_steps() {
                        prop_assert_eq!(Some(set.targets[(i, k)]), f.cgm()[origin + k + 1]);
                    }
                }
            }
        }

        #[test]
        fn impute_keeps_present_values(values in prop::collection::vec(proptest::option::weighted(0.6, 40.0f64..400.0), 1..80), gap in 0u32..60) {
            let f = frame(values.clone());
            let out = impute(&f, gap);
            let max_run = (gap / 5) as usize;
            for (i, (a, b)) in values.iter().zip(out.cgm()).enumerate() {
                if a.is_some() {
                    prop_assert_eq!(a, b);
                }
                if a.is_none() && b.is_some() {
                    let left = values[..i].iter().rposition(Option::is_some).unwrap();
                    let right = i + values[i..].iter().position(Option::is_some).unwrap();
                    prop_assert!(right - left - 1 <= max_run);
                }
            }
        }

        #[test]
        fn standardized_train_moments(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..50)) {
            let n = rows.len();
            let flat: Vec<f64> = rows.concat();
            let set = SupervisedSet {
                features: DMatrix::from_row_slice(n, 3, &flat),
                targets: DMatrix::zeros(n, 1),
                sample_timestamps: vec![Utc::now(); n],
                feature_names: vec!["a".into(), "b".into(), "c".into()],
            };
            let p = scaler_fit(&set).unwrap();
            let out = scaler_apply(&p, &set).unwrap();
            for (j, col) in out.features.column_iter().enumerate() {
                let m = col.iter().sum::<f64>() / n as f64;
                prop_assert!(m.abs() < 1e-10);
                if p.scale[j] != 1.0 || set.features.column(j).iter().any(|x| *x != set.features[(0, j)]) {
                    let sd = (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                    prop_assert!((sd - 1.0).abs() < 1e-10, "sd {}", sd);
                }
            }
        }
    }
}
