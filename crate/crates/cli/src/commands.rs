
use bgforecast::models::{available_models, load_model, save_model};
use bgforecast::parsers::{count_by_kind, load_source, merge_to_frame, save_raw_csv, SourceData, SourceDescriptor, SourceKind};
use bgforecast::pipeline::{evaluate, prepare, train, PreparedData};
use bgforecast::preprocess::SupervisedSet;
use bgforecast::report::{
    metrics_table, render_scatter, render_single_prediction, render_trajectories, EvaluationReport, HorizonPairs,
    SinglePrediction, TableFormat, TrajectoryInput,
};
use bgforecast::{predict, validate_frame, DatasetFrame, GlucoseUnit, ModelSpec, PairedSeries, PipelineConfig, Scaling, Signal, TrainedModel};
use chrono::{DateTime, Utc};
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};
use crate::workspace::{Settings, WorkspaceLayout};
use crate::{GenerateConfigArgs, ModelsArgs, ParseArgs, PlotArgs, PlotType, ScalingArg, SetUnitArgs, TrainArgs};

const SUMMARY_MINUTES: [u32; 3] = [30, 60, 120];

fn source_name(kind: SourceKind) -> &'static str {
    match kind {
        SourceKind::Nightscout => "nightscout",
        SourceKind::AppleHealth => "apple_health",
        SourceKind::OhioT1dm => "ohio_t1dm",
        SourceKind::Csv => "csv",
        SourceKind::Synthetic => "synthetic",
    }
}

pub fn setup_directories(root: &std::path::Path) -> CliResult<()> {
    let ws = WorkspaceLayout::setup(root)?;
    for sub in crate::SUBDIRECTORIES {
        eprintln!("ready: {}", ws.dir(sub).display());
    }
    Ok(())
}

fn frame_summary(frame: &DatasetFrame) {
    if frame.is_empty() {
        return;
    }
    eprintln!(
        "{} rows of {} min from {} to {}",
        frame.len(),
        frame.interval_minutes,
        frame.timestamp(0).to_rfc3339(),
        frame.timestamp(frame.len() - 1).to_rfc3339()
    );
    for signal in frame.signals() {
        let present = frame.column(signal).map_or(0, |c| c.iter().flatten().count());
        eprintln!("  {signal}: {present} bins with data");
    }
}

pub fn parse(ws: &WorkspaceLayout, a: &ParseArgs) -> CliResult<()> {
    let location = match (&a.location, a.source) {
        (Some(l), SourceKind::Nightscout) => l.clone(),
        (Some(l), _) => {
            let p = std::path::Path::new(l);
            if p.is_absolute() { l.clone() } else { ws.root.join(p).display().to_string() }
        }
        (None, SourceKind::Synthetic) => String::new(),
        (None, kind) => {
            return Err(CliError::Usage(format!("--location is required for source `{}`", source_name(kind))))
        }
    };
    let mut desc = SourceDescriptor::new(a.source, location);
    desc.credentials = a.token.clone();
    desc.time_range = match (a.start, a.end) {
        (None, None) => None,
        (s, e) => Some((s.unwrap_or(DateTime::<Utc>::MIN_UTC), e.unwrap_or(DateTime::<Utc>::MAX_UTC))),
    };
    if a.source == SourceKind::Synthetic {
        desc.parameters.insert("seed".into(), a.seed as f64);
        desc.parameters.insert("days".into(), f64::from(a.days));
    }
    let frame = match load_source(&desc)? {
        SourceData::Records(records) => {
            for (kind, n) in count_by_kind(&records) {
                eprintln!("{kind:?}: {n} records");
            }
            merge_to_frame(&records, bgforecast::frame::DEFAULT_INTERVAL_MINUTES)?
        }
        SourceData::Frame(frame) => frame,
    };
    let report = validate_frame(&frame);
    if !report.is_ok() {
        let first: Vec<String> = report.violations.iter().take(5).map(ToString::to_string).collect();
        return Err(CliError::Core(bgforecast::Error::InvalidValue(format!(
            "merged data violates {} frame invariant(s): {}",
            report.violations.len(),
            first.join("; ")
        ))));
    }
    let name = a.output_name.clone().unwrap_or_else(|| source_name(a.source).to_string());
    let path = ws.raw_path(&name);
    save_raw_csv(&frame, &path)?;
    frame_summary(&frame);
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Config specs for `names`, falling back to defaults for unconfigured models.
fn resolve_specs(config: &PipelineConfig, names: &[String]) -> CliResult<Vec<ModelSpec>> {
    if names.is_empty() {
        if config.model_specs.is_empty() {
            return Err(CliError::Usage("the configuration lists no models".into()));
        }
        return Ok(config.model_specs.clone());
    }
    let available = available_models();
    names
        .iter()
        .map(|n| {
            let key = n.trim().to_ascii_lowercase();
            if let Some(spec) = config.model_specs.iter().find(|s| s.canonical_name() == key) {
                Ok(spec.clone())
            } else if available.contains(&key) {
                Ok(ModelSpec::new(&key))
            } else {
                Err(CliError::UnknownModel {
                    name: n.clone(),
                    available: available.join(", "),
                })
            }
        })
        .collect()
}

pub fn generate_config(ws: &WorkspaceLayout, a: &GenerateConfigArgs) -> CliResult<()> {
    let raw = ws.raw_path(&a.data);
    let data_file = raw.file_name().expect("raw file name").to_string_lossy().into_owned();
    let frame = ws.load_frame(&data_file, bgforecast::frame::DEFAULT_INTERVAL_MINUTES)?;

    let mut config = PipelineConfig::new(data_file.clone());
    config.subject_id = a.subject_id.clone();
    config.prediction_horizon_minutes = a.horizon;
    config.num_lagged_samples = a.lookback;
    config.feature_signals = a.features.clone();
    config.what_if_signals = a.what_if.clone();
    config.test_fraction = a.test_fraction;
    config.imputation_max_gap_minutes = a.max_gap;
    config.scaling = match a.scaling {
        ScalingArg::None => Scaling::None,
        ScalingArg::Standardize => Scaling::Standardize,
    };
    config.random_seed = a.seed;
    let mut specs = resolve_specs(&PipelineConfig::new(""), &a.models)?;
    for item in &a.hyperparameters {
        let (model, key, value) = crate::parse_hyperparameter(item).map_err(CliError::Usage)?;
        let spec = specs
            .iter_mut()
            .find(|s| s.canonical_name() == model)
            .ok_or_else(|| CliError::Usage(format!("hyperparameter `{item}` names a model that is not configured")))?;
        spec.hyperparameters.insert(key, value);
    }
    config.model_specs = specs;
    config.validate()?;

    let available: Vec<String> = frame.signals().map(|s| s.to_string()).collect();
    for s in config.feature_signals.iter().chain(&config.what_if_signals) {
        if frame.column(*s).is_none() {
            return Err(CliError::Core(bgforecast::Error::Schema(format!(
                "signal `{s}` has no data in {data_file} (available: {})",
                available.join(", ")
            ))));
        }
    }
    let path = ws.config_path(&a.output_name);
    config.save(&path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn rmse_summary(report: &EvaluationReport, unit: GlucoseUnit) -> String {
    let parts: Vec<String> = SUMMARY_MINUTES
        .iter()
        .filter_map(|m| report.at_minutes(*m))
        .map(|h| format!("{} min {:.2}", h.horizon_minutes, unit.from_mgdl(h.metrics.rmse)))
        .collect();
    if parts.is_empty() {
        "n/a".into()
    } else {
        format!("{} ({})", parts.join(", "), unit.label())
    }
}

pub fn train_model(ws: &WorkspaceLayout, a: &TrainArgs) -> CliResult<()> {
    let (config, config_name) = ws.load_config(&a.config)?;
    let names: Vec<String> = a.model.iter().cloned().collect();
    let specs = resolve_specs(&config, &names)?;
    let unit = ws.display_unit(&config)?;
    let frame = ws.load_frame(&config.data_file, config.interval_minutes)?;
    let data = prepare(&frame, &config)?;
    eprintln!("{} training samples, {} test samples", data.train.len(), data.test.len());
    for spec in &specs {
        let model = train(&config, &data, spec)?;
        let path = ws.artifact_path(&spec.canonical_name(), &config_name);
        save_model(&model, &path)?;
        let converged = model.fit_reports.iter().all(|r| r.converged);
        let least_norm = model.fit_reports.iter().any(|r| r.least_norm);
        let fit = evaluate(&model, &data.train, unit)?;
        eprintln!(
            "{}: converged={converged} least_norm={least_norm} training RMSE {}",
            spec.canonical_name(),
            rmse_summary(&fit, unit)
        );
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

struct Loaded {
    config: PipelineConfig,
    config_name: String,
    unit: GlucoseUnit,
    frame: DatasetFrame,
    data: PreparedData,
    models: Vec<TrainedModel>,
}

/// Loads config, data and fresh artifacts for the requested models.
fn load_trained(ws: &WorkspaceLayout, a: &ModelsArgs) -> CliResult<Loaded> {
    let (config, config_name) = ws.load_config(&a.config)?;
    let specs = resolve_specs(&config, &a.models)?;
    let hash = config.content_hash();
    let mut models = Vec::new();
    for spec in &specs {
        let path = ws.artifact_path(&spec.canonical_name(), &config_name);
        if !path.is_file() {
            return Err(CliError::ArtifactNotFound(path));
        }
        let model = load_model(&path)?;
        if model.config_hash != hash {
            return Err(CliError::StaleModel {
                model: spec.canonical_name(),
                artifact: model.config_hash.clone(),
                config: hash,
            });
        }
        models.push(model);
    }
    let unit = ws.display_unit(&config)?;
    let frame = ws.load_frame(&config.data_file, config.interval_minutes)?;
    let data = prepare(&frame, &config)?;
    Ok(Loaded {
        config,
        config_name,
        unit,
        frame,
        data,
        models,
    })
}

fn write_text(path: &std::path::Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| {
        CliError::Core(bgforecast::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

pub fn calculate_metrics(ws: &WorkspaceLayout, a: &ModelsArgs) -> CliResult<()> {
    let l = load_trained(ws, a)?;
    for model in &l.models {
        let report = evaluate(model, &l.data.test, l.unit)?;
        for format in TableFormat::ALL {
            let path = ws.report_path(&model.spec.name, &l.config_name, format.extension());
            write_text(&path, &metrics_table(std::slice::from_ref(&report), format))?;
            eprintln!("wrote {}", path.display());
        }
        eprintln!("{}: test RMSE {}", model.spec.name, rmse_summary(&report, l.unit));
        for m in SUMMARY_MINUTES {
            if let Some(h) = report.at_minutes(m) {
                eprintln!(
                    "  {m} min: MARD {:.2} %, gsRMSE {:.2}, Clarke A {:.1} %, Parkes A {:.1} %",
                    h.metrics.mard_percent,
                    l.unit.from_mgdl(h.gs_rmse),
                    h.clarke.zone_percentages[&bgforecast::Zone::A],
                    h.parkes.zone_percentages[&bgforecast::Zone::A]
                );
            }
        }
    }
    Ok(())
}

fn select_rows(set: &SupervisedSet, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), set.features.ncols(), |i, j| set.features[(rows[i], j)])
}

fn scatter_series(model: &TrainedModel, test: &SupervisedSet) -> CliResult<Vec<HorizonPairs>> {
    let predictions = predict(model, &test.features)?;
    let minutes = model.horizon_minutes();
    let mut wanted: Vec<usize> = minutes
        .iter()
        .enumerate()
        .filter(|(_, m)| SUMMARY_MINUTES.contains(m))
        .map(|(i, _)| i)
        .collect();
    if wanted.is_empty() {
        wanted.push(minutes.len() - 1);
    }
    wanted
        .into_iter()
        .map(|k| {
            let pairs = PairedSeries::new(
                test.targets.column(k).iter().copied().collect(),
                predictions.column(k).iter().copied().collect(),
            )?;
            Ok(HorizonPairs {
                horizon_minutes: minutes[k],
                pairs,
            })
        })
        .collect()
}

fn draw_trajectories(l: &Loaded, model: &TrainedModel, title: &str, path: &std::path::Path) -> CliResult<()> {
    let test = &l.data.test;
    let interval = l.frame.interval_minutes.max(1) as usize;
    let window = test.len().min(24 * 60 / interval);
    let rows: Vec<usize> = (test.len() - window..test.len()).step_by((30 / interval).max(1)).collect();
    let predictions = predict(model, &select_rows(test, &rows))?;
    let origins: Vec<DateTime<Utc>> = rows.iter().map(|r| test.sample_timestamps[*r]).collect();
    let start = origins[0];
    let start_index = l
        .frame
        .index_of(start)
        .ok_or_else(|| bgforecast::Error::Alignment(format!("origin {start} outside the data")))?;
    let input = TrajectoryInput {
        title,
        start,
        interval_minutes: l.frame.interval_minutes,
        measurements: &l.frame.cgm()[start_index..],
        origins: &origins,
        predictions: &predictions,
        unit: l.unit,
    };
    Ok(render_trajectories(path, &input)?)
}

/// First test origin taken 30 minutes after a carb entry, else the middle sample.
fn default_origin(frame: &DatasetFrame, test: &SupervisedSet) -> usize {
    let lag = (30 / frame.interval_minutes.max(1)) as usize;
    let carbs = frame.column(Signal::Carbs);
    let after_meal = test.sample_timestamps.iter().position(|t| {
        let (Some(i), Some(c)) = (frame.index_of(*t), carbs) else { return false };
        i >= lag && c[i - lag].is_some_and(|v| v > 0.0)
    });
    after_meal.unwrap_or(test.len() / 2)
}

fn draw_single(l: &Loaded, a: &PlotArgs, model: &TrainedModel, title: &str, path: &std::path::Path) -> CliResult<()> {
    let test = &l.data.test;
    let row = match a.origin {
        Some(t) => test
            .sample_timestamps
            .iter()
            .position(|s| *s == t)
            .ok_or_else(|| CliError::Usage(format!("--origin {} is not a test-set sample time", t.to_rfc3339())))?,
        None => default_origin(&l.frame, test),
    };
    let prediction: Vec<f64> = predict(model, &select_rows(test, &[row]))?.row(0).iter().copied().collect();
    let origin_index = l
        .frame
        .index_of(test.sample_timestamps[row])
        .ok_or_else(|| bgforecast::Error::Alignment("origin outside the data".into()))?;
    let history = l
        .config
        .num_lagged_samples
        .max((120 / l.frame.interval_minutes.max(1)) as usize);
    let input = SinglePrediction::from_frame(&l.frame, origin_index, history, prediction, title, l.unit)?;
    Ok(render_single_prediction(path, &input)?)
}

pub fn draw_plots(ws: &WorkspaceLayout, a: &PlotArgs) -> CliResult<()> {
    let l = load_trained(ws, &a.models)?;
    let mut kinds = a.plot_type.clone();
    kinds.dedup();
    for model in &l.models {
        let title = format!("{} ({})", model.spec.name, l.config_name);
        for kind in &kinds {
            let path = ws.figure_path(&model.spec.name, &l.config_name, kind.name());
            match kind {
                PlotType::Scatter => render_scatter(&path, &title, &scatter_series(model, &l.data.test)?, l.unit)?,
                PlotType::Trajectories => draw_trajectories(&l, model, &title, &path)?,
                PlotType::Single => draw_single(&l, a, model, &title, &path)?,
            }
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

pub fn set_unit(ws: &WorkspaceLayout, a: &SetUnitArgs) -> CliResult<()> {
    ws.save_settings(&Settings { unit: a.unit })?;
    eprintln!("display unit set to {}", a.unit.label());
    Ok(())
}

