//! Scatter, trajectory and single-prediction plots.

use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use nalgebra::DMatrix;

use super::svg::{nice_range, num, tick_label, Scale, Svg, HEIGHT, PALETTE, WIDTH};
use crate::error::{Error, Result};
use crate::frame::{DatasetFrame, EventKind, Signal};
use crate::metrics::PairedSeries;
use crate::units::GlucoseUnit;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Draws tick marks, grid lines and labels for one axis.
fn y_axis(svg: &mut Svg, scale: &Scale, step: f64, x_left: f64, x_right: f64) {
    let mut v = scale.lo;
    while v <= scale.hi + step * 1e-9 {
        let y = scale.map(v);
        svg.line(x_left, y, x_right, y, "stroke=\"#e0e0e0\" stroke-width=\"1\"");
        svg.text(x_left - 6.0, y + 4.0, &tick_label(v, step), "text-anchor=\"end\"");
        v += step;
    }
}

fn frame_box(svg: &mut Svg, x0: f64, y0: f64, x1: f64, y1: f64) {
    svg.rect(x0, y0, x1 - x0, y1 - y0, "fill=\"none\" stroke=\"black\" stroke-width=\"1\"");
}

/// Paired values for one horizon.
#[derive(Debug, Clone)]
pub struct HorizonPairs {
    pub horizon_minutes: u32,
    pub pairs: PairedSeries,
}

/// Measured (x) against predicted (y) on a square canvas with the identity
/// line. Every pair becomes one `circle` element of class `point`.
pub fn scatter_svg(title: &str, series: &[HorizonPairs], unit: GlucoseUnit) -> String {
    let mut sorted: Vec<&HorizonPairs> = series.iter().collect();
    sorted.sort_by_key(|s| s.horizon_minutes);
    let conv = |v: f64| unit.from_mgdl(v);

    let mut lo = conv(0.0);
    let mut hi = conv(400.0);
    for s in &sorted {
        for (r, p) in s.pairs.pairs() {
            lo = lo.min(conv(r)).min(conv(p));
            hi = hi.max(conv(r)).max(conv(p));
        }
    }
    let (lo, hi, step) = nice_range(lo, hi, 8.0);
    let (x0, y0, size) = (250.0, 40.0, 500.0);
    let xs = Scale { lo, hi, a: x0, b: x0 + size };
    let ys = Scale { lo, hi, a: y0 + size, b: y0 };

    let mut svg = Svg::new(title);
    svg.text(WIDTH / 2.0, 24.0, title, "text-anchor=\"middle\" font-size=\"16\"");
    y_axis(&mut svg, &ys, step, x0, x0 + size);
    let mut v = lo;
    while v <= hi + step * 1e-9 {
        let x = xs.map(v);
        svg.line(x, y0, x, y0 + size, "stroke=\"#e0e0e0\" stroke-width=\"1\"");
        svg.text(x, y0 + size + 16.0, &tick_label(v, step), "text-anchor=\"middle\"");
        v += step;
    }
    frame_box(&mut svg, x0, y0, x0 + size, y0 + size);
    svg.line(
        xs.map(lo),
        ys.map(lo),
        xs.map(hi),
        ys.map(hi),
        "class=\"identity\" stroke=\"#555555\" stroke-width=\"1\"",
    );
    svg.text(
        x0 + size / 2.0,
        y0 + size + 40.0,
        &format!("Measured glucose ({})", unit.label()),
        "text-anchor=\"middle\"",
    );
    svg.text(
        0.0,
        0.0,
        &format!("Predicted glucose ({})", unit.label()),
        &format!(
            "text-anchor=\"middle\" transform=\"translate({},{}) rotate(-90)\"",
            num(x0 - 50.0),
            num(y0 + size / 2.0)
        ),
    );

    for (i, s) in sorted.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.raw(&format!("<g class=\"series\" data-horizon-minutes=\"{}\">", s.horizon_minutes));
        for (r, p) in s.pairs.pairs() {
            svg.circle(
                xs.map(conv(r)),
                ys.map(conv(p)),
                2.5,
                &format!("class=\"point\" fill=\"{color}\" fill-opacity=\"0.6\""),
            );
        }
        svg.raw("</g>");
        let ly = y0 + 10.0 + 20.0 * i as f64;
        svg.rect(x0 + size + 30.0, ly - 8.0, 10.0, 10.0, &format!("fill=\"{color}\""));
        svg.text(x0 + size + 46.0, ly + 1.0, &format!("{} min", s.horizon_minutes), "");
    }
    svg.finish()
}

pub fn render_scatter(path: &Path, title: &str, series: &[HorizonPairs], unit: GlucoseUnit) -> Result<()> {
    write_file(path, &scatter_svg(title, series, unit))
}

/// Measured CGM of a segment and predicted trajectories from origins in it.
#[derive(Debug, Clone)]
pub struct TrajectoryInput<'a> {
    pub title: &'a str,
    pub start: DateTime<Utc>,
    pub interval_minutes: u32,
    /// CGM in mg/dL on the segment grid.
    pub measurements: &'a [Option<f64>],
    pub origins: &'a [DateTime<Utc>],
    /// One row per origin, one column per horizon step, mg/dL.
    pub predictions: &'a DMatrix<f64>,
    pub unit: GlucoseUnit,
}

impl TrajectoryInput<'_> {
    fn origin_indices(&self) -> Result<Vec<usize>> {
        if self.predictions.nrows() != self.origins.len() {
            return Err(Error::Alignment(format!(
                "{} prediction rows for {} origins",
                self.predictions.nrows(),
                self.origins.len()
            )));
        }
        let step = i64::from(self.interval_minutes.max(1)) * 60;
        self.origins
            .iter()
            .map(|t| {
                let offset = (*t - self.start).num_seconds();
                let idx = offset / step;
                if offset < 0 || offset % step != 0 || idx as usize >= self.measurements.len() {
                    Err(Error::Alignment(format!("prediction origin {t} is not on the segment grid")))
                } else {
                    Ok(idx as usize)
                }
            })
            .collect()
    }
}

/// Visible trajectory points per origin. Steps past the final measurement
/// are cut off, so an origin at the last measurement yields nothing.
fn truncated_trajectories(input: &TrajectoryInput<'_>) -> Result<Vec<(usize, Vec<(usize, f64)>)>> {
    let indices = input.origin_indices()?;
    let last = input.measurements.iter().rposition(Option::is_some);
    Ok(indices
        .into_iter()
        .enumerate()
        .map(|(row, o)| {
            let pts = (0..input.predictions.ncols())
                .map(|k| (o + k + 1, input.predictions[(row, k)]))
                .take_while(|(i, _)| last.is_some_and(|l| *i <= l))
                .collect();
            (o, pts)
        })
        .collect())
}

fn time_ticks(svg: &mut Svg, xs: &Scale, start: DateTime<Utc>, minutes: i64, y_top: f64, y_bottom: f64) {
    let step = [5, 15, 30, 60, 120, 180, 360, 720, 1440, 2880]
        .into_iter()
        .find(|s| minutes / s <= 10)
        .unwrap_or(10080);
    let mut m = 0;
    while m <= minutes {
        let x = xs.map(m as f64);
        svg.line(x, y_top, x, y_bottom, "stroke=\"#e0e0e0\" stroke-width=\"1\"");
        let t = start + Duration::minutes(m);
        svg.text(x, y_bottom + 16.0, &t.format("%m-%d %H:%M").to_string(), "text-anchor=\"middle\"");
        m += step;
    }
}

/// Measurements as markers, each in-bounds trajectory as a dashed polyline
/// of class `trajectory`.
pub fn trajectories_svg(input: &TrajectoryInput<'_>) -> Result<String> {
    let trajectories = truncated_trajectories(input)?;
    let conv = |v: f64| input.unit.from_mgdl(v);
    let interval = f64::from(input.interval_minutes);
    let span = ((input.measurements.len().max(2) - 1) as f64 * interval).max(interval);

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let values = input
        .measurements
        .iter()
        .flatten()
        .copied()
        .chain(trajectories.iter().flat_map(|(_, p)| p.iter().map(|(_, v)| *v)));
    for v in values {
        lo = lo.min(conv(v));
        hi = hi.max(conv(v));
    }
    if !lo.is_finite() {
        lo = conv(40.0);
        hi = conv(400.0);
    }
    let (lo, hi, step) = nice_range(lo, hi, 8.0);
    let (x0, x1, y0, y1) = (90.0, 820.0, 40.0, 540.0);
    let xs = Scale { lo: 0.0, hi: span, a: x0, b: x1 };
    let ys = Scale { lo, hi, a: y1, b: y0 };
    let x_of = |i: usize| xs.map(i as f64 * interval);

    let mut svg = Svg::new(input.title);
    svg.text(WIDTH / 2.0, 24.0, input.title, "text-anchor=\"middle\" font-size=\"16\"");
    y_axis(&mut svg, &ys, step, x0, x1);
    time_ticks(&mut svg, &xs, input.start, span as i64, y0, y1);
    frame_box(&mut svg, x0, y0, x1, y1);
    svg.text((x0 + x1) / 2.0, HEIGHT - 20.0, "Time (UTC)", "text-anchor=\"middle\"");
    svg.text(
        0.0,
        0.0,
        &format!("Glucose ({})", input.unit.label()),
        &format!(
            "text-anchor=\"middle\" transform=\"translate({},{}) rotate(-90)\"",
            num(x0 - 55.0),
            num((y0 + y1) / 2.0)
        ),
    );

    svg.raw("<g class=\"measurements\">");
    for (i, v) in input.measurements.iter().enumerate() {
        if let Some(v) = v {
            svg.circle(x_of(i), ys.map(conv(*v)), 2.0, "class=\"measurement\" fill=\"#1f77b4\"");
        }
    }
    svg.raw("</g>");
    svg.raw("<g class=\"trajectories\">");
    for (o, pts) in &trajectories {
        if pts.is_empty() {
            continue;
        }
        let mut line = Vec::with_capacity(pts.len() + 1);
        if let Some(m) = input.measurements[*o] {
            line.push((x_of(*o), ys.map(conv(m))));
        }
        line.extend(pts.iter().map(|(i, v)| (x_of(*i), ys.map(conv(*v)))));
        svg.polyline(
            &line,
            "class=\"trajectory\" stroke=\"#d62728\" stroke-width=\"1.2\" stroke-dasharray=\"4 3\"",
        );
    }
    svg.raw("</g>");
    legend(
        &mut svg,
        x1 + 20.0,
        y0 + 10.0,
        &[("Measured CGM", LegendStyle::Dot("#1f77b4")), ("Predicted trajectory", LegendStyle::Dashed("#d62728"))],
    );
    Ok(svg.finish())
}

pub fn render_trajectories(path: &Path, input: &TrajectoryInput<'_>) -> Result<()> {
    write_file(path, &trajectories_svg(input)?)
}

enum LegendStyle {
    Dot(&'static str),
    Solid(&'static str),
    Dashed(&'static str),
}

fn legend(svg: &mut Svg, x: f64, y: f64, entries: &[(&str, LegendStyle)]) {
    for (i, (label, style)) in entries.iter().enumerate() {
        let ly = y + 20.0 * i as f64;
        match style {
            LegendStyle::Dot(c) => svg.rect(x + 6.0, ly - 4.0, 6.0, 6.0, &format!("fill=\"{c}\"")),
            LegendStyle::Solid(c) => svg.line(x, ly, x + 18.0, ly, &format!("stroke=\"{c}\" stroke-width=\"2\"")),
            LegendStyle::Dashed(c) => svg.line(
                x,
                ly,
                x + 18.0,
                ly,
                &format!("stroke=\"{c}\" stroke-width=\"2\" stroke-dasharray=\"4 3\""),
            ),
        }
        svg.text(x + 24.0, ly + 4.0, label, "");
    }
}

/// A treatment event near the prediction origin.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMarker {
    pub timestamp: DateTime<Utc>,
    pub kind: EventKind,
    pub value: f64,
}

/// One prediction origin with its context.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePrediction {
    pub title: String,
    pub origin: DateTime<Utc>,
    pub interval_minutes: u32,
    /// CGM in mg/dL ending at the origin, oldest first.
    pub history: Vec<Option<f64>>,
    /// Predicted CGM for the steps after the origin.
    pub prediction: Vec<f64>,
    /// Measured CGM after the origin; may be shorter than the prediction.
    pub actual: Vec<Option<f64>>,
    pub events: Vec<EventMarker>,
    pub unit: GlucoseUnit,
}

impl SinglePrediction {
    /// Collects history, ground truth and bolus/carb events around
    /// `origin_index` from `frame`.
    pub fn from_frame(
        frame: &DatasetFrame,
        origin_index: usize,
        history_steps: usize,
        prediction: Vec<f64>,
        title: &str,
        unit: GlucoseUnit,
    ) -> Result<Self> {
        if origin_index >= frame.len() {
            return Err(Error::Alignment(format!(
                "origin index {origin_index} outside a frame of {} rows",
                frame.len()
            )));
        }
        let cgm = frame.cgm();
        let first = (origin_index + 1).saturating_sub(history_steps.max(1));
        let end = (origin_index + prediction.len()).min(frame.len() - 1);
        let mut events = Vec::new();
        for (signal, kind) in [(Signal::Carbs, EventKind::Carbs), (Signal::Bolus, EventKind::Bolus)] {
            if let Some(col) = frame.column(signal) {
                for i in first..=end {
                    if let Some(v) = col[i].filter(|v| *v > 0.0) {
                        events.push(EventMarker {
                            timestamp: frame.timestamp(i),
                            kind,
                            value: v,
                        });
                    }
                }
            }
        }
        events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.kind.cmp(&b.kind)));
        Ok(SinglePrediction {
            title: title.to_string(),
            origin: frame.timestamp(origin_index),
            interval_minutes: frame.interval_minutes,
            history: cgm[first..=origin_index].to_vec(),
            prediction,
            actual: cgm[origin_index + 1..=end.max(origin_index)].to_vec(),
            events,
            unit,
        })
    }
}

/// History, prediction and measured future around one origin, with one
/// marker per carb (`carb-marker`) and bolus (`bolus-marker`) event.
pub fn single_prediction_svg(input: &SinglePrediction) -> Result<String> {
    if input.prediction.is_empty() {
        return Err(Error::Alignment("empty prediction".into()));
    }
    if input.actual.len() > input.prediction.len() {
        return Err(Error::Alignment(format!(
            "{} future measurements for a {}-step prediction",
            input.actual.len(),
            input.prediction.len()
        )));
    }
    let conv = |v: f64| input.unit.from_mgdl(v);
    let interval = f64::from(input.interval_minutes);
    let n_hist = input.history.len();
    let hist_minutes = (n_hist.max(1) - 1) as f64 * interval;
    let fut_minutes = input.prediction.len() as f64 * interval;
    // x in minutes relative to the origin
    let hist_x = |i: usize| (i as f64 + 1.0 - n_hist as f64) * interval;
    let fut_x = |k: usize| (k as f64 + 1.0) * interval;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let values = input
        .history
        .iter()
        .flatten()
        .chain(input.actual.iter().flatten())
        .chain(input.prediction.iter())
        .copied();
    for v in values {
        lo = lo.min(conv(v));
        hi = hi.max(conv(v));
    }
    let (lo, hi, step) = nice_range(lo, hi, 8.0);
    let (x0, x1, y0, y1) = (90.0, 820.0, 40.0, 440.0);
    let xs = Scale {
        lo: -hist_minutes,
        hi: fut_minutes,
        a: x0,
        b: x1,
    };
    let ys = Scale { lo, hi, a: y1, b: y0 };

    let mut svg = Svg::new(&input.title);
    let heading = format!("{} at {}", input.title, input.origin.format("%Y-%m-%d %H:%M UTC"));
    svg.text(WIDTH / 2.0, 24.0, &heading, "text-anchor=\"middle\" font-size=\"16\"");
    y_axis(&mut svg, &ys, step, x0, x1);
    let x_step = super::svg::tick_step(hist_minutes + fut_minutes, 10.0).max(interval);
    let mut m = (-hist_minutes / x_step).ceil() * x_step;
    while m <= fut_minutes + 1e-9 {
        let x = xs.map(m);
        svg.line(x, y0, x, y1, "stroke=\"#e0e0e0\" stroke-width=\"1\"");
        svg.text(x, y1 + 16.0, &tick_label(m, x_step), "text-anchor=\"middle\"");
        m += x_step;
    }
    frame_box(&mut svg, x0, y0, x1, y1);
    svg.line(xs.map(0.0), y0, xs.map(0.0), y1, "class=\"origin\" stroke=\"black\" stroke-dasharray=\"2 2\"");
    svg.text(
        (x0 + x1) / 2.0,
        y1 + 34.0,
        "Minutes relative to prediction time",
        "text-anchor=\"middle\"",
    );
    svg.text(
        0.0,
        0.0,
        &format!("Glucose ({})", input.unit.label()),
        &format!(
            "text-anchor=\"middle\" transform=\"translate({},{}) rotate(-90)\"",
            num(x0 - 55.0),
            num((y0 + y1) / 2.0)
        ),
    );

    let history: Vec<(f64, f64)> = input
        .history
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (xs.map(hist_x(i)), ys.map(conv(v)))))
        .collect();
    if !history.is_empty() {
        svg.polyline(&history, "class=\"history\" stroke=\"#1f77b4\" stroke-width=\"2\"");
    }
    let actual: Vec<(f64, f64)> = input
        .actual
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (xs.map(fut_x(k)), ys.map(conv(v)))))
        .collect();
    if !actual.is_empty() {
        svg.polyline(&actual, "class=\"actual\" stroke=\"#2ca02c\" stroke-width=\"2\"");
    }
    let mut predicted: Vec<(f64, f64)> = Vec::with_capacity(input.prediction.len() + 1);
    if let Some(Some(last)) = input.history.last() {
        predicted.push((xs.map(0.0), ys.map(conv(*last))));
    }
    predicted.extend(
        input
            .prediction
            .iter()
            .enumerate()
            .map(|(k, v)| (xs.map(fut_x(k)), ys.map(conv(*v)))),
    );
    svg.polyline(
        &predicted,
        "class=\"prediction\" stroke=\"#d62728\" stroke-width=\"2\" stroke-dasharray=\"6 3\"",
    );

    for e in &input.events {
        let minutes = (e.timestamp - input.origin).num_seconds() as f64 / 60.0;
        if minutes < -hist_minutes || minutes > fut_minutes {
            continue;
        }
        let x = xs.map(minutes);
        let (class, color, label, marker_y) = match e.kind {
            EventKind::Carbs => ("carb-marker", "#ff7f0e", format!("{} g", tick_label(e.value, 1.0)), y1 + 65.0),
            EventKind::Bolus => ("bolus-marker", "#9467bd", format!("{} U", tick_label(e.value, 0.1)), y1 + 110.0),
            _ => continue,
        };
        svg.path(
            &format!(
                "M {} {} L {} {} L {} {} Z",
                num(x),
                num(marker_y - 8.0),
                num(x - 6.0),
                num(marker_y + 4.0),
                num(x + 6.0),
                num(marker_y + 4.0)
            ),
            &format!("class=\"{class}\" fill=\"{color}\""),
        );
        svg.text(x, marker_y + 18.0, &label, "text-anchor=\"middle\" font-size=\"10\"");
    }

    svg.text(x0 - 8.0, y1 + 69.0, "Carbs", "text-anchor=\"end\"");
    svg.text(x0 - 8.0, y1 + 114.0, "Bolus", "text-anchor=\"end\"");
    let mut entries = vec![
        ("History", LegendStyle::Solid("#1f77b4")),
        ("Prediction", LegendStyle::Dashed("#d62728")),
    ];
    if !actual.is_empty() {
        entries.push(("Measured future", LegendStyle::Solid("#2ca02c")));
    }
    entries.push(("Carbs", LegendStyle::Dot("#ff7f0e")));
    entries.push(("Bolus", LegendStyle::Dot("#9467bd")));
    legend(&mut svg, x1 + 20.0, y0 + 10.0, &entries);
    Ok(svg.finish())
}

pub fn render_single_prediction(path: &Path, input: &SinglePrediction) -> Result<()> {
    write_file(path, &single_prediction_svg(input)?)
}
