//! Built-in learners and their payload codecs.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde_json::json;

use super::linear::{elastic_net, huber, solve_ridge, LinearFit};
use super::tree::{fit_boosted, fit_forest, BoostParams, Boosted, Forest, ForestParams, Node, RegressionTree, TreeParams};
use super::{
    hp_bool, hp_f64, hp_usize, EncodedPredictor, FitContext, FitReport, Hyperparameters, Learner, ModelRegistry,
    Predictor,
};
use crate::error::{Error, Result};
use crate::frame::Signal;
use crate::preprocess::lag_name;

pub(super) fn register_all(r: &mut ModelRegistry) {
    for (name, kind) in [
        (LinearKind::Ols, "linear"),
        (LinearKind::Ridge, "linear"),
        (LinearKind::Lasso, "linear"),
        (LinearKind::ElasticNet, "linear"),
        (LinearKind::Huber, "linear"),
    ] {
        r.register(Arc::new(LinearLearner(name)), kind, decode_linear);
    }
    r.register(Arc::new(ForestLearner), "forest", decode_forest);
    r.register(Arc::new(BoostLearner), "boosted", decode_boosted);
    r.register(Arc::new(LocfLearner), "locf", decode_locf);
}

fn hyper(pairs: &[(&str, serde_json::Value)]) -> Hyperparameters {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn single(arrays: &EncodedPredictor, key: &str) -> Result<f64> {
    match arrays.get(key).map(Vec::as_slice) {
        Some([v]) => Ok(*v),
        _ => Err(Error::Integrity(format!("payload field `{key}` missing or not a scalar"))),
    }
}

fn array<'a>(arrays: &'a EncodedPredictor, key: &str) -> Result<&'a [f64]> {
    arrays
        .get(key)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::Integrity(format!("payload field `{key}` missing")))
}

// ---------------------------------------------------------------- linear

#[derive(Debug, Clone, Copy)]
enum LinearKind {
    Ols,
    Ridge,
    Lasso,
    ElasticNet,
    Huber,
}

struct LinearLearner(LinearKind);

impl Learner for LinearLearner {
    fn name(&self) -> &str {
        match self.0 {
            LinearKind::Ols => "ols",
            LinearKind::Ridge => "ridge",
            LinearKind::Lasso => "lasso",
            LinearKind::ElasticNet => "elastic_net",
            LinearKind::Huber => "huber",
        }
    }

    fn defaults(&self) -> Hyperparameters {
        let intercept = ("fit_intercept", json!(true));
        match self.0 {
            LinearKind::Ols => hyper(&[intercept]),
            LinearKind::Ridge => hyper(&[intercept, ("alpha", json!(1.0))]),
            LinearKind::Lasso => hyper(&[intercept, ("alpha", json!(0.1))]),
            LinearKind::ElasticNet => hyper(&[intercept, ("alpha", json!(0.1)), ("l1_ratio", json!(0.5))]),
            LinearKind::Huber => hyper(&[intercept, ("alpha", json!(0.0001)), ("huber_delta", json!(10.0))]),
        }
    }

    fn fit(&self, x: &DMatrix<f64>, y: &[f64], ctx: &FitContext<'_>) -> Result<(Box<dyn Predictor>, FitReport)> {
        let h = ctx.hyperparameters;
        let intercept = hp_bool(h, "fit_intercept");
        let (fit, report) = match self.0 {
            LinearKind::Ols | LinearKind::Ridge => {
                let alpha = if matches!(self.0, LinearKind::Ols) { 0.0 } else { hp_f64(h, "alpha") };
                let (fit, least_norm) = solve_ridge(x, y, None, alpha, intercept);
                (
                    fit,
                    FitReport {
                        converged: true,
                        iterations: 1,
                        least_norm,
                        loss_history: Vec::new(),
                    },
                )
            }
            LinearKind::Lasso => elastic_net(x, y, hp_f64(h, "alpha"), 1.0, intercept),
            LinearKind::ElasticNet => elastic_net(x, y, hp_f64(h, "alpha"), hp_f64(h, "l1_ratio"), intercept),
            LinearKind::Huber => huber(x, y, hp_f64(h, "huber_delta"), hp_f64(h, "alpha"), intercept),
        };
        Ok((Box::new(LinearPredictor(fit)), report))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor(pub LinearFit);

impl Predictor for LinearPredictor {
    fn kind(&self) -> &str {
        "linear"
    }

    fn predict(&self, scaled: &[f64], _raw: &[f64]) -> f64 {
        self.0.predict(scaled)
    }

    fn encode(&self) -> EncodedPredictor {
        [
            ("coef".to_string(), self.0.coef.clone()),
            ("intercept".to_string(), vec![self.0.intercept]),
        ]
        .into()
    }
}

fn decode_linear(arrays: &EncodedPredictor, width: usize) -> Result<Box<dyn Predictor>> {
    let coef = array(arrays, "coef")?.to_vec();
    if coef.len() != width {
        return Err(Error::Integrity(format!("{} coefficients for {width} features", coef.len())));
    }
    Ok(Box::new(LinearPredictor(LinearFit {
        intercept: single(arrays, "intercept")?,
        coef,
    })))
}

// ---------------------------------------------------------------- trees

fn tree_params(h: &Hyperparameters) -> TreeParams {
    TreeParams {
        max_depth: hp_usize(h, "max_depth"),
        min_samples_leaf: hp_usize(h, "min_samples_leaf"),
        max_features: None,
    }
}

struct ForestLearner;

impl Learner for ForestLearner {
    fn name(&self) -> &str {
        "random_forest"
    }

    fn defaults(&self) -> Hyperparameters {
        hyper(&[
            ("n_trees", json!(50)),
            ("max_depth", json!(8)),
            ("min_samples_leaf", json!(5)),
            ("subsample", json!(1.0)),
            ("bootstrap", json!(true)),
            ("random_seed", json!(0)),
        ])
    }

    fn fit(&self, x: &DMatrix<f64>, y: &[f64], ctx: &FitContext<'_>) -> Result<(Box<dyn Predictor>, FitReport)> {
        let h = ctx.hyperparameters;
        let forest = fit_forest(
            x,
            y,
            ForestParams {
                n_trees: hp_usize(h, "n_trees"),
                tree: tree_params(h),
                bootstrap: hp_bool(h, "bootstrap"),
                subsample: hp_f64(h, "subsample"),
                seed: ctx.seed,
            },
        );
        let report = FitReport {
            converged: true,
            iterations: forest.trees.len(),
            ..FitReport::default()
        };
        Ok((Box::new(ForestPredictor(forest)), report))
    }
}

struct BoostLearner;

impl Learner for BoostLearner {
    fn name(&self) -> &str {
        "gbt"
    }

    fn defaults(&self) -> Hyperparameters {
        hyper(&[
            ("n_trees", json!(100)),
            ("max_depth", json!(3)),
            ("learning_rate", json!(0.1)),
            ("min_samples_leaf", json!(5)),
            ("subsample", json!(1.0)),
            ("random_seed", json!(0)),
        ])
    }

    fn fit(&self, x: &DMatrix<f64>, y: &[f64], ctx: &FitContext<'_>) -> Result<(Box<dyn Predictor>, FitReport)> {
        let h = ctx.hyperparameters;
        let (model, report) = fit_boosted(
            x,
            y,
            BoostParams {
                n_trees: hp_usize(h, "n_trees"),
                tree: tree_params(h),
                learning_rate: hp_f64(h, "learning_rate"),
                subsample: hp_f64(h, "subsample"),
                seed: ctx.seed,
            },
        );
        Ok((Box::new(BoostedPredictor(model)), report))
    }
}

fn encode_trees(trees: &[RegressionTree], out: &mut EncodedPredictor) {
    let mut offsets = Vec::with_capacity(trees.len());
    let (mut feature, mut threshold, mut left, mut right, mut value) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in trees {
        offsets.push(feature.len() as f64);
        for n in &t.nodes {
            feature.push(if RegressionTree::is_leaf(n) { -1.0 } else { n.feature as f64 });
            threshold.push(n.threshold);
            left.push(n.left as f64);
            right.push(n.right as f64);
            value.push(n.value);
        }
    }
    out.insert("tree_offsets".into(), offsets);
    out.insert("feature".into(), feature);
    out.insert("threshold".into(), threshold);
    out.insert("left".into(), left);
    out.insert("right".into(), right);
    out.insert("value".into(), value);
}

fn decode_trees(arrays: &EncodedPredictor, width: usize) -> Result<Vec<RegressionTree>> {
    let offsets = array(arrays, "tree_offsets")?;
    let feature = array(arrays, "feature")?;
    let threshold = array(arrays, "threshold")?;
    let left = array(arrays, "left")?;
    let right = array(arrays, "right")?;
    let value = array(arrays, "value")?;
    let total = feature.len();
    if [threshold.len(), left.len(), right.len(), value.len()].iter().any(|&l| l != total) {
        return Err(Error::Integrity("tree node arrays differ in length".into()));
    }
    let mut trees = Vec::with_capacity(offsets.len());
    for (k, &start) in offsets.iter().enumerate() {
        let start = start as usize;
        let end = offsets.get(k + 1).map_or(total, |&e| e as usize);
        if start >= end || end > total {
            return Err(Error::Integrity(format!("tree {k} has an invalid node range")));
        }
        let size = end - start;
        let mut nodes = Vec::with_capacity(size);
        for i in start..end {
            let is_leaf = feature[i] < 0.0;
            let node = Node {
                feature: if is_leaf { usize::MAX } else { feature[i] as usize },
                threshold: threshold[i],
                left: left[i] as usize,
                right: right[i] as usize,
                value: value[i],
            };
            if !is_leaf && (node.feature >= width || node.left >= size || node.right >= size || node.left <= i - start || node.right <= i - start) {
                return Err(Error::Integrity(format!("tree {k} node {} is malformed", i - start)));
            }
            nodes.push(node);
        }
        trees.push(RegressionTree { nodes });
    }
    Ok(trees)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestPredictor(pub Forest);

impl Predictor for ForestPredictor {
    fn kind(&self) -> &str {
        "forest"
    }

    fn predict(&self, scaled: &[f64], _raw: &[f64]) -> f64 {
        self.0.predict(scaled)
    }

    fn encode(&self) -> EncodedPredictor {
        let mut out = EncodedPredictor::new();
        encode_trees(&self.0.trees, &mut out);
        out
    }
}

fn decode_forest(arrays: &EncodedPredictor, width: usize) -> Result<Box<dyn Predictor>> {
    let trees = decode_trees(arrays, width)?;
    if trees.is_empty() {
        return Err(Error::Integrity("forest without trees".into()));
    }
    Ok(Box::new(ForestPredictor(Forest { trees })))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedPredictor(pub Boosted);

impl Predictor for BoostedPredictor {
    fn kind(&self) -> &str {
        "boosted"
    }

    fn predict(&self, scaled: &[f64], _raw: &[f64]) -> f64 {
        self.0.predict(scaled)
    }

    fn encode(&self) -> EncodedPredictor {
        let mut out = EncodedPredictor::new();
        out.insert("init".into(), vec![self.0.init]);
        out.insert("learning_rate".into(), vec![self.0.learning_rate]);
        encode_trees(&self.0.trees, &mut out);
        out
    }
}

fn decode_boosted(arrays: &EncodedPredictor, width: usize) -> Result<Box<dyn Predictor>> {
    Ok(Box::new(BoostedPredictor(Boosted {
        init: single(arrays, "init")?,
        learning_rate: single(arrays, "learning_rate")?,
        trees: decode_trees(arrays, width)?,
    })))
}

// ---------------------------------------------------------------- baseline

struct LocfLearner;

impl Learner for LocfLearner {
    fn name(&self) -> &str {
        "locf_baseline"
    }

    fn defaults(&self) -> Hyperparameters {
        Hyperparameters::new()
    }

    fn fit(&self, _x: &DMatrix<f64>, _y: &[f64], ctx: &FitContext<'_>) -> Result<(Box<dyn Predictor>, FitReport)> {
        let wanted = lag_name(Signal::Cgm, 0);
        let index = ctx
            .feature_names
            .iter()
            .position(|n| *n == wanted)
            .ok_or_else(|| Error::Schema(format!("LOCF baseline needs the `{wanted}` feature")))?;
        let report = FitReport {
            converged: true,
            ..FitReport::default()
        };
        Ok((Box::new(LocfPredictor { index }), report))
    }
}

/// Repeats the most recent CGM reading for every horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LocfPredictor {
    pub index: usize,
}

impl Predictor for LocfPredictor {
    fn kind(&self) -> &str {
        "locf"
    }

    fn predict(&self, _scaled: &[f64], raw: &[f64]) -> f64 {
        raw[self.index]
    }

    fn encode(&self) -> EncodedPredictor {
        [("index".to_string(), vec![self.index as f64])].into()
    }
}

fn decode_locf(arrays: &EncodedPredictor, width: usize) -> Result<Box<dyn Predictor>> {
    let index = single(arrays, "index")?;
    if index < 0.0 || index.fract() != 0.0 || index as usize >= width {
        return Err(Error::Integrity(format!("LOCF index {index} outside {width} features")));
    }
    Ok(Box::new(LocfPredictor { index: index as usize }))
}
