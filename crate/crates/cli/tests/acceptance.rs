//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use bgforecast::metrics::{clarke_zone, parkes_zone};
use bgforecast::parsers::{merge_to_frame, parse_csv, parse_ohio, synth_generate, SynthParams};
use bgforecast::pipeline::{evaluate, prepare, train, PreparedData};
use bgforecast::preprocess::{ScalerParams, SupervisedSet};
use bgforecast::{
    fit, gs_rmse, scalar_metrics, GlucoseUnit, ModelSpec, PairedSeries, PipelineConfig, Signal, TrainedModel, Zone,
    MGDL_PER_MMOLL,
};
use chrono::{TimeZone, Utc};
use nalgebra::{DMatrix, DVector};
use quick_xml::events::Event;
use quick_xml::Reader;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

const RIDGE_TOLERANCE: f64 = 1e-6;
const KKT_TOLERANCE: f64 = 1e-4;
const UNIT_RELATIVE_TOLERANCE: f64 = 1e-9;
const RANDOM_INSTANCES: u64 = 20;
const LOCF_RMSE_RATIO: f64 = 0.95;
const SHORT_HORIZON_RATIO: f64 = 2.0;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- linear oracles

fn random_instance(seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(20..=200);
    let p = rng.gen_range(1..=20);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal) * 10.0 + 50.0);
    let truth: Vec<f64> = (0..p).map(|_| if rng.gen_bool(0.6) { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect();
    let y = (0..n)
        .map(|i| 7.0 + (0..p).map(|j| x[(i, j)] * truth[j]).sum::<f64>() + 3.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (x, y)
}

fn single_target(x: &DMatrix<f64>, y: &[f64]) -> SupervisedSet {
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    SupervisedSet {
        sample_timestamps: (0..x.nrows() as i64).map(|i| t0 + chrono::Duration::minutes(5 * i)).collect(),
        feature_names: (0..x.ncols()).map(|j| format!("x{j}")).collect(),
        features: x.clone(),
        targets: DMatrix::from_column_slice(y.len(), 1, y),
    }
}

fn fitted_line(spec: &ModelSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, f64), String> {
    let model = fit(spec, &single_target(x, y), &ScalerParams::identity(x.ncols())).map_err(|e| e.to_string())?;
    let enc = model.predictors[0].encode();
    Ok((enc["coef"].clone(), enc["intercept"][0]))
}

/// Normal equations of the centered problem with penalty `lambda`, solved by LU.
fn ridge_oracle(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let (n, p) = x.shape();
    let xm: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let ym = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - xm[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let a = xc.transpose() * &xc + DMatrix::identity(p, p) * lambda;
    let w = a.lu().solve(&(xc.transpose() * yc)).expect("oracle system is regular");
    let b = ym - w.iter().zip(&xm).map(|(w, m)| w * m).sum::<f64>();
    (w.iter().copied().collect(), b)
}

fn elastic_net_matches_ridge() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..RANDOM_INSTANCES {
        let (x, y) = random_instance(seed);
        let alpha = [0.01, 0.1, 1.0, 10.0][seed as usize % 4];
        let spec = ModelSpec::new("elastic_net").with("alpha", alpha).with("l1_ratio", 0.0);
        let (w, b) = fitted_line(&spec, &x, &y)?;
        let (wo, bo) = ridge_oracle(&x, &y, x.nrows() as f64 * alpha);
        let diff = w.iter().zip(&wo).map(|(a, o)| (a - o).abs()).fold((b - bo).abs(), f64::max);
        ensure(diff < RIDGE_TOLERANCE, || format!("instance {seed}: max |diff| {diff:.3e}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("max |diff| {worst:.2e} over {RANDOM_INSTANCES} instances"))
}

fn kkt_residual(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64, alpha: f64) -> f64 {
    let n = x.nrows();
    let r: Vec<f64> = (0..n)
        .map(|i| y[i] - b - (0..x.ncols()).map(|j| x[(i, j)] * w[j]).sum::<f64>())
        .collect();
    (0..x.ncols())
        .map(|j| {
            let grad = -(0..n).map(|i| x[(i, j)] * r[i]).sum::<f64>() / n as f64;
            if w[j] == 0.0 {
                (grad.abs() - alpha).max(0.0)
            } else {
                (grad + alpha * w[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn lasso_kkt() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 100..100 + RANDOM_INSTANCES {
        let (x, y) = random_instance(seed);
        let alpha = [0.05, 0.5, 2.0, 8.0][seed as usize % 4];
        let (w, b) = fitted_line(&ModelSpec::new("lasso").with("alpha", alpha), &x, &y)?;
        let res = kkt_residual(&x, &y, &w, b, alpha);
        ensure(res < KKT_TOLERANCE, || format!("instance {seed}: KKT residual {res:.3e}"))?;
        worst = worst.max(res);
    }
    Ok(format!("max KKT residual {worst:.2e} over {RANDOM_INSTANCES} instances"))
}

// ---------------------------------------------------------------- metrics

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let reference: Vec<f64> = (0..500).map(|_| f64::from(rng.gen_range(40u32..=400))).collect();
    let perfect = PairedSeries::new(reference.clone(), reference.clone()).map_err(|e| e.to_string())?;
    let m = scalar_metrics(&perfect);
    let zeros = [m.rmse, m.mae, m.mard_percent, m.me, m.mre_percent, gs_rmse(&perfect)];
    ensure(zeros.iter().all(|&v| v == 0.0), || format!("perfect prediction gave {zeros:?}"))?;

    let shifted = reference.iter().map(|r| r + 10.0).collect();
    let m = scalar_metrics(&PairedSeries::new(reference, shifted).map_err(|e| e.to_string())?);
    ensure(m.me == 10.0 && m.mae == 10.0 && m.rmse == 10.0, || {
        format!("offset 10 gave me {} mae {} rmse {}", m.me, m.mae, m.rmse)
    })?;

    for k in 0..1000 {
        let n = rng.gen_range(1..200);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..600.0)).collect();
        let p: Vec<f64> = r.iter().map(|v| (v + rng.gen_range(-150.0..150.0)).max(0.0)).collect();
        let pairs = PairedSeries::new(r, p).map_err(|e| e.to_string())?;
        let (g, e) = (gs_rmse(&pairs), scalar_metrics(&pairs).rmse);
        ensure(g >= e, || format!("series {k}: gs_rmse {g} < rmse {e}"))?;
    }
    Ok("zero error, exact offset, gs_rmse >= rmse on 1000 series".into())
}

/// Clarke regions in integer arithmetic, first matching rule wins.
fn clarke_oracle(r: i64, p: i64) -> Zone {
    if (5 * p >= 4 * r && 5 * p <= 6 * r) || (r < 70 && p < 70) {
        Zone::A
    } else if (r >= 180 && p <= 70) || (r <= 70 && p >= 180) {
        Zone::E
    } else if ((70..=290).contains(&r) && p >= r + 110) || ((130..=180).contains(&r) && 5 * p <= 7 * r - 910) {
        Zone::C
    } else if (r >= 240 || r <= 70) && (70..=180).contains(&p) {
        Zone::D
    } else {
        Zone::B
    }
}

/// Walking vertically away from the diagonal never moves to a better zone.
fn nested(zone: fn(f64, f64) -> Zone, r: i64) -> Result<(), String> {
    let walk = |range: Box<dyn Iterator<Item = i64>>| -> Result<(), String> {
        let mut prev = Zone::A;
        for p in range {
            let z = zone(r as f64, p as f64);
            ensure(z >= prev, || format!("({r}, {p}) is {z:?} after {prev:?}"))?;
            prev = z;
        }
        Ok(())
    };
    walk(Box::new(r..=600))?;
    walk(Box::new((10..=r).rev()))
}

fn error_grid_lattice() -> Outcome {
    let mut counts: BTreeMap<(&str, Zone), usize> = BTreeMap::new();
    for r in 10..=600i64 {
        for p in 10..=600i64 {
            let (rf, pf) = (r as f64, p as f64);
            let c = clarke_zone(rf, pf);
            let expected = clarke_oracle(r, p);
            ensure(c == expected, || format!("Clarke ({r}, {p}): {c:?}, oracle {expected:?}"))?;
            *counts.entry(("clarke", c)).or_default() += 1;
            *counts.entry(("parkes", parkes_zone(rf, pf))).or_default() += 1;
        }
        ensure(clarke_zone(r as f64, r as f64) == Zone::A, || format!("Clarke diagonal {r}"))?;
        ensure(parkes_zone(r as f64, r as f64) == Zone::A, || format!("Parkes diagonal {r}"))?;
        nested(clarke_zone, r).map_err(|e| format!("Clarke {e}"))?;
        nested(parkes_zone, r).map_err(|e| format!("Parkes {e}"))?;
    }
    let total = 591 * 591;
    for grid in ["clarke", "parkes"] {
        let sum: usize = counts.iter().filter(|((g, _), _)| *g == grid).map(|(_, c)| c).sum();
        ensure(sum == total, || format!("{grid}: {sum} zone assignments for {total} points"))?;
    }
    let parkes: Vec<usize> = counts.iter().filter(|((g, _), _)| *g == "parkes").map(|(_, c)| *c).collect();
    Ok(format!("{total} points per grid, Parkes zone counts {parkes:?}"))
}

// ---------------------------------------------------------------- models on synthetic data

fn forecasting_config(features: Vec<Signal>) -> PipelineConfig {
    let mut c = PipelineConfig::new("synthetic.csv");
    c.prediction_horizon_minutes = 60;
    c.num_lagged_samples = 12;
    c.feature_signals = features;
    c
}

fn rmse_at(model: &TrainedModel, test: &SupervisedSet, minutes: u32) -> Result<f64, String> {
    let report = evaluate(model, test, GlucoseUnit::MgDl).map_err(|e| e.to_string())?;
    report.at_minutes(minutes).map(|h| h.metrics.rmse).ok_or_else(|| format!("no {minutes} min row"))
}

fn models_beat_locf() -> Outcome {
    let frame = synth_generate(7, 14, &SynthParams::default()).map_err(|e| e.to_string())?;
    let config = forecasting_config(vec![Signal::Cgm, Signal::Carbs, Signal::Bolus]);
    let data = prepare(&frame, &config).map_err(|e| e.to_string())?;
    let locf = train(&config, &data, &ModelSpec::new("locf_baseline")).map_err(|e| e.to_string())?;
    let (locf60, locf5) = (rmse_at(&locf, &data.test, 60)?, rmse_at(&locf, &data.test, 5)?);
    let mut summary = vec![format!("locf {locf60:.1}")];
    for name in ["ols", "ridge", "elastic_net", "huber", "random_forest", "gbt"] {
        let model = train(&config, &data, &ModelSpec::new(name)).map_err(|e| e.to_string())?;
        let (r60, r5) = (rmse_at(&model, &data.test, 60)?, rmse_at(&model, &data.test, 5)?);
        ensure(r60 <= LOCF_RMSE_RATIO * locf60, || format!("{name}: 60 min RMSE {r60:.2} vs LOCF {locf60:.2}"))?;
        ensure(r5 <= SHORT_HORIZON_RATIO * locf5, || format!("{name}: 5 min RMSE {r5:.2} vs LOCF {locf5:.2}"))?;
        summary.push(format!("{name} {r60:.1}"));
    }
    Ok(format!("60 min RMSE: {}", summary.join(", ")))
}

fn test_period_cannot_leak() -> Outcome {
    let frame = synth_generate(5, 4, &SynthParams::default()).map_err(|e| e.to_string())?;
    let mut config = forecasting_config(vec![Signal::Cgm, Signal::Carbs, Signal::Bolus]);
    config.num_lagged_samples = 6;
    let before = prepare(&frame, &config).map_err(|e| e.to_string())?;
    let specs = [
        ModelSpec::new("ridge"),
        ModelSpec::new("lasso"),
        ModelSpec::new("huber"),
        ModelSpec::new("random_forest").with("n_trees", 10),
        ModelSpec::new("gbt").with("n_trees", 20),
    ];
    let fingerprints = |data: &PreparedData| -> Result<Vec<Vec<u8>>, String> {
        specs
            .iter()
            .map(|s| train(&config, data, s).map(|m| m.payload_fingerprint()).map_err(|e| e.to_string()))
            .collect()
    };
    let reference = fingerprints(&before)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 5;
    for trial in 0..trials {
        let mut mutated = frame.clone();
        let n = mutated.len();
        for _ in 0..10 {
            let i = rng.gen_range(before.boundary..n);
            if let Some(v) = mutated.columns.get_mut(&Signal::Cgm).and_then(|c| c[i].as_mut()) {
                *v = (*v + rng.gen_range(-80.0..80.0)).clamp(40.0, 400.0);
            }
            if let Some(col) = mutated.columns.get_mut(&Signal::Carbs) {
                col[i] = Some(rng.gen_range(5.0..90.0));
            }
            if let Some(col) = mutated.columns.get_mut(&Signal::Bolus) {
                col[i] = Some(rng.gen_range(0.5..8.0));
            }
        }
        let after = prepare(&mutated, &config).map_err(|e| e.to_string())?;
        ensure(after.train == before.train, || format!("trial {trial}: training set changed"))?;
        ensure(after.scaler == before.scaler, || format!("trial {trial}: scaler changed"))?;
        ensure(fingerprints(&after)? == reference, || format!("trial {trial}: fitted parameters changed"))?;
    }
    Ok(format!("{trials} trials x 10 mutations, {} models unchanged", specs.len()))
}

// ---------------------------------------------------------------- CLI

const SYNTH_SEED: u64 = 7;
const SYNTH_DAYS: u32 = 5;

fn bg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bgforecast")).args(args).current_dir(dir).output().expect("spawn bgforecast")
}

fn run(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = bg(dir, args);
    ensure(out.status.success(), || {
        format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr).trim())
    })
}

fn golden_workflow(dir: &Path) -> Result<(), String> {
    let seed = SYNTH_SEED.to_string();
    let days = SYNTH_DAYS.to_string();
    run(dir, &["setup_directories"])?;
    run(dir, &["parse", "--source", "synthetic", "--seed", &seed, "--days", &days, "--output-name", "synth"])?;
    run(dir, &["generate_config", "--data", "synth"])?;
    run(dir, &["train_model", "--config", "config"])?;
    run(dir, &["calculate_metrics", "--config", "config"])?;
    run(dir, &["draw_plots", "--config", "config"])
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn well_formed_svg(bytes: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(bytes) else { return false };
    let mut reader = Reader::from_str(text);
    let (mut depth, mut saw_svg) = (0i32, false);
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                saw_svg |= e.name().as_ref() == b"svg";
                depth += 1;
            }
            Ok(Event::End(_)) => depth -= 1,
            Ok(Event::Eof) => return saw_svg && depth == 0,
            Ok(_) => {}
            Err(_) => return false,
        }
    }
}

fn cli_golden_run() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    golden_workflow(a.path())?;
    golden_workflow(b.path())?;
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let under = |prefix: &str| sa.iter().filter(move |(p, _)| p.starts_with(prefix)).collect::<Vec<_>>();
    let artifacts = under("data/trained_models");
    ensure(artifacts.len() == 2, || format!("{} model artifacts", artifacts.len()))?;
    for ext in ["csv", "json", "md"] {
        let n = under("data/reports").iter().filter(|(p, _)| p.extension().is_some_and(|e| e == ext)).count();
        ensure(n >= 1, || format!("no .{ext} report"))?;
    }
    let figures = under("data/figures");
    ensure(figures.len() >= 2, || format!("{} figures", figures.len()))?;
    for (path, bytes) in &figures {
        ensure(well_formed_svg(bytes), || format!("{} is not well-formed SVG", path.display()))?;
    }
    ensure(sa.keys().eq(sb.keys()), || "the two runs produced different file sets".into())?;
    for (path, bytes) in &sa {
        ensure(sb[path] == *bytes, || format!("{} differs between runs", path.display()))?;
    }
    Ok(format!("{} files byte-identical across two runs, {} figures", sa.len(), figures.len()))
}

fn trained_workspace() -> Result<tempfile::TempDir, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seed = SYNTH_SEED.to_string();
    let days = SYNTH_DAYS.to_string();
    run(dir.path(), &["setup_directories"])?;
    run(dir.path(), &["parse", "--source", "synthetic", "--seed", &seed, "--days", &days, "--output-name", "synth"])?;
    run(dir.path(), &["generate_config", "--data", "synth"])?;
    run(dir.path(), &["train_model", "--config", "config"])?;
    run(dir.path(), &["calculate_metrics", "--config", "config"])?;
    Ok(dir)
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn required_horizons_reported() -> Outcome {
    let dir = trained_workspace()?;
    let reports = dir.path().join("data/reports");
    let wanted = [30u32, 60, 120];
    let mut checked = 0;
    for model in ["ridge", "locf_baseline"] {
        let stem = reports.join(format!("{model}__config__metrics"));
        let csv = read(&stem.with_extension("csv"))?;
        let csv_minutes: Vec<u32> = csv.lines().skip(1).filter_map(|l| l.split(',').nth(1)?.parse().ok()).collect();
        let json: Value = serde_json::from_str(&read(&stem.with_extension("json"))?).map_err(|e| e.to_string())?;
        let json_minutes: Vec<u32> = json["rows"]
            .as_array()
            .ok_or("JSON report without rows")?
            .iter()
            .filter_map(|r| r["horizon_minutes"].as_u64().map(|m| m as u32))
            .collect();
        let md = read(&stem.with_extension("md"))?;
        let md_minutes: Vec<u32> = md
            .lines()
            .filter(|l| l.starts_with('|'))
            .filter_map(|l| l.split('|').nth(2)?.trim().parse().ok())
            .collect();
        for (format, minutes) in [("csv", &csv_minutes), ("json", &json_minutes), ("md", &md_minutes)] {
            for m in wanted {
                ensure(minutes.contains(&m), || format!("{model} {format} report has no {m} min row"))?;
            }
            checked += 1;
        }
    }
    Ok(format!("30/60/120 min rows present in {checked} tables"))
}

fn json_rows(path: &Path) -> Result<Vec<serde_json::Map<String, Value>>, String> {
    let v: Value = serde_json::from_str(&read(path)?).map_err(|e| e.to_string())?;
    v["rows"]
        .as_array()
        .ok_or_else(|| "JSON report without rows".to_string())?
        .iter()
        .map(|r| r.as_object().cloned().ok_or_else(|| "row is not an object".to_string()))
        .collect()
}

fn unit_conversion_in_reports() -> Outcome {
    let dir = trained_workspace()?;
    let path = dir.path().join("data/reports/ridge__config__metrics.json");
    let mgdl = json_rows(&path)?;
    run(dir.path(), &["set_unit", "--unit", "mmol/L"])?;
    run(dir.path(), &["calculate_metrics", "--config", "config"])?;
    let mmol = json_rows(&path)?;
    ensure(mgdl.len() == mmol.len() && !mgdl.is_empty(), || "row count changed".into())?;
    let zones = ["A", "B", "C", "D", "E"];
    let unchanged: Vec<String> = ["mard".to_string(), "mre".to_string()]
        .into_iter()
        .chain(zones.iter().flat_map(|z| [format!("clarke_{z}"), format!("parkes_{z}")]))
        .collect();
    let mut worst = 0.0f64;
    for (a, b) in mgdl.iter().zip(&mmol) {
        let cell = |row: &serde_json::Map<String, Value>, col: &str| {
            row.get(col).and_then(Value::as_f64).ok_or_else(|| format!("missing numeric {col}"))
        };
        for col in ["rmse", "mae", "me", "gs_rmse"] {
            let (x, y) = (cell(a, col)?, cell(b, col)?);
            let expected = x / MGDL_PER_MMOLL;
            let rel = if expected == 0.0 { y.abs() } else { ((y - expected) / expected).abs() };
            ensure(rel <= UNIT_RELATIVE_TOLERANCE, || format!("{col}: {y} vs {expected} (rel {rel:.2e})"))?;
            worst = worst.max(rel);
        }
        for col in &unchanged {
            let (x, y) = (cell(a, col)?, cell(b, col)?);
            ensure(x == y, || format!("{col} changed from {x} to {y}"))?;
        }
        ensure(b.get("unit").and_then(Value::as_str) == Some("mmol/L"), || "unit column not mmol/L".into())?;
    }
    Ok(format!("{} rows, max relative deviation {worst:.1e}", mgdl.len()))
}

fn raw_csv_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seed = SYNTH_SEED.to_string();
    let days = SYNTH_DAYS.to_string();
    run(dir.path(), &["setup_directories"])?;
    run(dir.path(), &["parse", "--source", "synthetic", "--seed", &seed, "--days", &days, "--output-name", "synth"])?;
    let records = parse_csv(&dir.path().join("data/raw/synth.csv")).map_err(|e| e.to_string())?;
    let expected = synth_generate(SYNTH_SEED, SYNTH_DAYS, &SynthParams::default()).map_err(|e| e.to_string())?;
    let frame = merge_to_frame(&records, expected.interval_minutes).map_err(|e| e.to_string())?;
    ensure(frame == expected, || "synthetic frame differs after the CSV round trip".into())?;

    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ohio_subject.xml");
    run(dir.path(), &["parse", "--source", "ohio_t1dm", "--location", fixture.to_str().unwrap(), "--output-name", "ohio"])?;
    let direct = merge_to_frame(&parse_ohio(&fixture).map_err(|e| e.to_string())?, 5).map_err(|e| e.to_string())?;
    let records = parse_csv(&dir.path().join("data/raw/ohio.csv")).map_err(|e| e.to_string())?;
    let via_csv = merge_to_frame(&records, 5).map_err(|e| e.to_string())?;
    ensure(via_csv == direct, || "Ohio frame differs after the CSV round trip".into())?;
    Ok(format!("{} synthetic rows and {} Ohio rows identical", frame.len(), direct.len()))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "elastic net with l1_ratio 0 equals ridge", budget: Duration::from_secs(10), run: elastic_net_matches_ridge },
        Criterion { id: 2, name: "lasso satisfies KKT conditions", budget: Duration::from_secs(10), run: lasso_kkt },
        Criterion { id: 3, name: "metric identities", budget: Duration::from_secs(10), run: metric_identities },
        Criterion { id: 4, name: "error grids partition the lattice", budget: Duration::from_secs(30), run: error_grid_lattice },
        Criterion { id: 5, name: "models beat LOCF at 60 minutes", budget: Duration::from_secs(180), run: models_beat_locf },
        Criterion { id: 6, name: "CLI golden workflow is reproducible", budget: Duration::from_secs(120), run: cli_golden_run },
        Criterion { id: 7, name: "reports cover 30/60/120 minutes", budget: Duration::from_secs(60), run: required_horizons_reported },
        Criterion { id: 8, name: "unit switch converts glucose metrics only", budget: Duration::from_secs(60), run: unit_conversion_in_reports },
        Criterion { id: 9, name: "test-period data cannot leak into training", budget: Duration::from_secs(120), run: test_period_cannot_leak },
        Criterion { id: 10, name: "raw CSV round trip", budget: Duration::from_secs(30), run: raw_csv_round_trip },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > c.budget => Err(format!("took {:.1} s, budget {} s", elapsed.as_secs_f64(), c.budget.as_secs())),
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failures += 1;
        }
        println!("{status} [{:>2}] {} ({:.2} s): {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
