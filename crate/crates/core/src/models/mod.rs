//! The model zoo.
//!
//! Every model is fitted as one independent regressor per horizon step on the
//! scaled features. Built-in learners and external plug-ins share the
//! [`Learner`] / [`Predictor`] interface, and every fitted predictor encodes
//! itself as named `f64` arrays so one artifact format covers them all.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::preprocess::{ScalerParams, SupervisedSet};

mod artifact;
pub mod builtin;
pub mod linear;
pub mod tree;

pub use artifact::{load_model, save_model, FORMAT_VERSION};

pub type Hyperparameters = BTreeMap<String, Value>;
pub type EncodedPredictor = BTreeMap<String, Vec<f64>>;

/// A model name plus its hyperparameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
}

impl ModelSpec {
    pub fn new(name: &str) -> Self {
        ModelSpec {
            name: name.trim().to_ascii_lowercase(),
            hyperparameters: Hyperparameters::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.hyperparameters.insert(key.to_string(), value.into());
        self
    }

    pub fn canonical_name(&self) -> String {
        self.name.trim().to_ascii_lowercase()
    }

    /// Checks the name against the registry and every key and range.
    pub fn validate(&self) -> Result<()> {
        let learner = lookup(&self.name)?;
        let defaults = learner.defaults();
        for (key, value) in &self.hyperparameters {
            let Some(default) = defaults.get(key) else {
                let mut known: Vec<&str> = defaults.keys().map(String::as_str).collect();
                known.sort_unstable();
                return Err(Error::InvalidConfig(format!(
                    "model `{}` has no hyperparameter `{key}` (known: {})",
                    self.name,
                    if known.is_empty() { "none".to_string() } else { known.join(", ") }
                )));
            };
            check_hyperparameter(key, value, default)?;
        }
        Ok(())
    }

    /// Defaults overlaid with this spec's values.
    pub fn resolved(&self) -> Result<Hyperparameters> {
        self.validate()?;
        let mut h = lookup(&self.name)?.defaults();
        h.extend(self.hyperparameters.clone());
        Ok(h)
    }
}

fn check_hyperparameter(key: &str, value: &Value, default: &Value) -> Result<()> {
    let bad = |why: &str| Err(Error::InvalidConfig(format!("hyperparameter `{key}` = {value}: {why}")));
    if default.is_boolean() {
        return if value.is_boolean() { Ok(()) } else { bad("expected true or false") };
    }
    let Some(v) = value.as_f64().filter(|v| v.is_finite()) else {
        return bad("expected a finite number");
    };
    let whole = v.fract() == 0.0;
    let ok = match key {
        "alpha" => v >= 0.0,
        "l1_ratio" => (0.0..=1.0).contains(&v),
        "huber_delta" => v > 0.0,
        "n_trees" | "max_depth" | "min_samples_leaf" => v >= 1.0 && whole,
        "learning_rate" | "subsample" => v > 0.0 && v <= 1.0,
        "random_seed" => v >= 0.0 && whole,
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        bad("out of range")
    }
}

pub(crate) fn hp_f64(h: &Hyperparameters, key: &str) -> f64 {
    h.get(key).and_then(Value::as_f64).unwrap_or_else(|| panic!("hyperparameter {key} resolved"))
}

pub(crate) fn hp_usize(h: &Hyperparameters, key: &str) -> usize {
    hp_f64(h, key) as usize
}

pub(crate) fn hp_bool(h: &Hyperparameters, key: &str) -> bool {
    h.get(key).and_then(Value::as_bool).unwrap_or_else(|| panic!("hyperparameter {key} resolved"))
}

/// Per-horizon fit diagnostics. Non-convergence is reported here, never raised.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    /// The normal equations were singular and the least-norm solution was used.
    pub least_norm: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_history: Vec<f64>,
}

/// What a learner sees when fitting one horizon.
pub struct FitContext<'a> {
    pub hyperparameters: &'a Hyperparameters,
    pub feature_names: &'a [String],
    pub seed: u64,
}

/// A model family. Implement this (plus a [`Decoder`]) to plug in new models.
pub trait Learner: Send + Sync {
    /// Lower-case registry name.
    fn name(&self) -> &str;
    /// Every accepted hyperparameter with its default value.
    fn defaults(&self) -> Hyperparameters;
    fn fit(&self, x: &DMatrix<f64>, y: &[f64], ctx: &FitContext<'_>) -> Result<(Box<dyn Predictor>, FitReport)>;
}

/// One fitted single-horizon regressor.
pub trait Predictor: Send + Sync + Debug {
    /// Payload kind used to pick a [`Decoder`] on load.
    fn kind(&self) -> &str;
    /// `scaled` is the standardized row, `raw` the same row before scaling.
    fn predict(&self, scaled: &[f64], raw: &[f64]) -> f64;
    fn encode(&self) -> EncodedPredictor;
}

pub type Decoder = fn(&EncodedPredictor, usize) -> Result<Box<dyn Predictor>>;

#[derive(Default)]
pub struct ModelRegistry {
    learners: Vec<Arc<dyn Learner>>,
    decoders: BTreeMap<String, Decoder>,
}

impl ModelRegistry {
    pub fn with_builtins() -> Self {
        let mut r = ModelRegistry::default();
        builtin::register_all(&mut r);
        r
    }

    /// Adds a learner and the decoder for the payload kind it produces.
    /// A learner with an existing name replaces the old one.
    pub fn register(&mut self, learner: Arc<dyn Learner>, kind: &str, decoder: Decoder) {
        self.learners.retain(|l| l.name() != learner.name());
        self.learners.push(learner);
        self.decoders.insert(kind.to_string(), decoder);
    }

    pub fn names(&self) -> Vec<String> {
        self.learners.iter().map(|l| l.name().to_string()).collect()
    }

    pub fn learner(&self, name: &str) -> Result<Arc<dyn Learner>> {
        let wanted = name.trim().to_ascii_lowercase();
        self.learners
            .iter()
            .find(|l| l.name() == wanted)
            .cloned()
            .ok_or_else(|| Error::UnknownModel(format!("{name}; available: {}", self.names().join(", "))))
    }

    pub fn decoder(&self, kind: &str) -> Option<Decoder> {
        self.decoders.get(kind).copied()
    }
}

/// The process-wide registry, pre-populated with the built-in models.
pub fn registry() -> &'static RwLock<ModelRegistry> {
    static REGISTRY: OnceLock<RwLock<ModelRegistry>> = OnceLock::new();
    REGISTRY.get_or_init(|| RwLock::new(ModelRegistry::with_builtins()))
}

pub fn register_learner(learner: Arc<dyn Learner>, kind: &str, decoder: Decoder) {
    registry().write().expect("registry lock").register(learner, kind, decoder);
}

fn lookup(name: &str) -> Result<Arc<dyn Learner>> {
    registry().read().expect("registry lock").learner(name)
}

pub fn available_models() -> Vec<String> {
    registry().read().expect("registry lock").names()
}

/// A fitted per-horizon predictor bundle with everything needed to predict.
#[derive(Debug)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub predictors: Vec<Box<dyn Predictor>>,
    pub scaler: ScalerParams,
    pub feature_names: Vec<String>,
    pub config_hash: String,
    pub interval_minutes: u32,
    pub fit_reports: Vec<FitReport>,
    pub format_version: u32,
}

impl TrainedModel {
    pub fn horizon_steps(&self) -> usize {
        self.predictors.len()
    }

    pub fn horizon_minutes(&self) -> Vec<u32> {
        (1..=self.predictors.len() as u32).map(|k| k * self.interval_minutes).collect()
    }

    /// Canonical byte encoding of the fitted payload, for determinism checks.
    pub fn payload_fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for p in &self.predictors {
            out.extend_from_slice(p.kind().as_bytes());
            for (name, values) in p.encode() {
                out.extend_from_slice(name.as_bytes());
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }
}

/// Fits one regressor per target column on `scaler`-transformed features.
pub fn fit(spec: &ModelSpec, train: &SupervisedSet, scaler: &ScalerParams) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::EmptySet("training set has no samples".into()));
    }
    if scaler.width() != train.features.ncols() {
        return Err(Error::Shape {
            expected: train.features.ncols(),
            actual: scaler.width(),
        });
    }
    let learner = lookup(&spec.name)?;
    let hyper = spec.resolved()?;
    let seed = hyper.get("random_seed").and_then(Value::as_f64).map_or(0, |v| v as u64);
    let x = scaler.transform(&train.features);

    let fitted: Vec<(Box<dyn Predictor>, FitReport)> = (0..train.horizon_steps())
        .into_par_iter()
        .map(|h| {
            let y: Vec<f64> = train.targets.column(h).iter().copied().collect();
            let ctx = FitContext {
                hyperparameters: &hyper,
                feature_names: &train.feature_names,
                seed: tree::derive_seed(seed, h as u64),
            };
            learner.fit(&x, &y, &ctx)
        })
        .collect::<Result<_>>()?;
    let (predictors, fit_reports) = fitted.into_iter().unzip();
    Ok(TrainedModel {
        spec: ModelSpec {
            name: spec.canonical_name(),
            hyperparameters: spec.hyperparameters.clone(),
        },
        predictors,
        scaler: scaler.clone(),
        feature_names: train.feature_names.clone(),
        config_hash: String::new(),
        interval_minutes: 5,
        fit_reports,
        format_version: FORMAT_VERSION,
    })
}

/// Predicted trajectories: one row per input row, one column per horizon step.
pub fn predict(model: &TrainedModel, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if features.ncols() != model.feature_names.len() {
        return Err(Error::Shape {
            expected: model.feature_names.len(),
            actual: features.ncols(),
        });
    }
    let h = model.horizon_steps();
    let mut out = DMatrix::zeros(features.nrows(), h);
    for i in 0..features.nrows() {
        let raw: Vec<f64> = features.row(i).iter().copied().collect();
        let scaled = model.scaler.transform_row(&raw);
        for (k, p) in model.predictors.iter().enumerate() {
            out[(i, k)] = p.predict(&scaled, &raw);
        }
    }
    Ok(out)
}
