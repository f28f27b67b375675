//! Seeded synthetic CGM generator used as a stand-in for restricted datasets.
//!
//! One step is five minutes:
//!
//! ```text
//! g(t+1) = g(t) + carb_effect(t) - insulin_effect(t) + drift(t)
//!          - reversion * (g(t) - baseline) + noise(t)
//! ```
//!
//! Each meal raises glucose by `carbs * sensitivity / carb_ratio` in total,
//! spread over a triangular 60 minute absorption kernel. Each bolus lowers it
//! by `units * sensitivity`, spread over a triangular 180 minute action
//! kernel peaking at 75 minutes. Basal insulin is recorded but assumed to
//! balance endogenous production, so it has no net effect. Output is clamped
//! to [40, 400] mg/dL.

use std::collections::BTreeMap;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::merge::basal_delivered;
use crate::error::{Error, Result};
use crate::frame::{Column, DatasetFrame, Signal};

pub const STEP_MINUTES: u32 = 5;
const STEPS_PER_DAY: usize = 288;
const CARB_KERNEL_MINUTES: f64 = 60.0;
const INSULIN_KERNEL_MINUTES: f64 = 180.0;
const INSULIN_PEAK_MINUTES: f64 = 75.0;
pub const SYNTH_MIN_MGDL: f64 = 40.0;
pub const SYNTH_MAX_MGDL: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MealSlot {
    pub minute_of_day: u32,
    pub carbs_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub baseline_mgdl: f64,
    pub meals: Vec<MealSlot>,
    /// Uniform jitter applied to each meal time, +/- minutes.
    pub meal_time_jitter_minutes: f64,
    /// Uniform relative jitter applied to each meal size.
    pub meal_size_jitter: f64,
    /// mg/dL drop per unit of insulin.
    pub insulin_sensitivity: f64,
    /// grams covered by one unit.
    pub carb_ratio: f64,
    pub bolus_with_meals: bool,
    /// Uniform relative error of the meal bolus.
    pub bolus_error: f64,
    pub basal_rate: f64,
    pub noise_sd: f64,
    /// Peak circadian drift in mg/dL per step.
    pub circadian_amplitude: f64,
    /// Fraction of the distance to baseline recovered per step.
    pub reversion: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            baseline_mgdl: 120.0,
            meals: vec![
                MealSlot { minute_of_day: 7 * 60 + 30, carbs_g: 50.0 },
                MealSlot { minute_of_day: 12 * 60 + 30, carbs_g: 70.0 },
                MealSlot { minute_of_day: 16 * 60, carbs_g: 20.0 },
                MealSlot { minute_of_day: 19 * 60, carbs_g: 80.0 },
            ],
            meal_time_jitter_minutes: 30.0,
            meal_size_jitter: 0.3,
            insulin_sensitivity: 40.0,
            carb_ratio: 10.0,
            bolus_with_meals: true,
            bolus_error: 0.25,
            basal_rate: 0.8,
            noise_sd: 5.0,
            circadian_amplitude: 0.3,
            reversion: 0.02,
        }
    }
}

impl SynthParams {
    /// Flat parameters with no meals, insulin, drift or noise: the output stays at baseline.
    pub fn quiet(baseline_mgdl: f64) -> Self {
        SynthParams {
            baseline_mgdl,
            meals: Vec::new(),
            bolus_with_meals: false,
            noise_sd: 0.0,
            circadian_amplitude: 0.0,
            ..SynthParams::default()
        }
    }

    /// Overrides scalar fields from a string-keyed map; `meals = 0` drops the
    /// meal schedule. Unknown keys are rejected.
    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = SynthParams::default();
        for (key, &v) in map {
            match key.as_str() {
                "seed" | "days" => {}
                "baseline_mgdl" | "baseline" => p.baseline_mgdl = v,
                "meals" => {
                    if v == 0.0 {
                        p.meals.clear();
                    }
                }
                "meal_time_jitter_minutes" => p.meal_time_jitter_minutes = v,
                "meal_size_jitter" => p.meal_size_jitter = v,
                "insulin_sensitivity" => p.insulin_sensitivity = v,
                "carb_ratio" => p.carb_ratio = v,
                "bolus_with_meals" => p.bolus_with_meals = v != 0.0,
                "bolus_error" => p.bolus_error = v,
                "basal_rate" => p.basal_rate = v,
                "noise_sd" | "noise" => p.noise_sd = v,
                "circadian_amplitude" | "drift" => p.circadian_amplitude = v,
                "reversion" => p.reversion = v,
                other => {
                    return Err(Error::InvalidParameter(format!("unknown synthetic parameter `{other}`")))
                }
            }
        }
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 10] = [
            (self.insulin_sensitivity >= 0.0, "insulin_sensitivity must be non-negative"),
            (self.carb_ratio > 0.0, "carb_ratio must be positive"),
            (self.noise_sd >= 0.0, "noise_sd must be non-negative"),
            (self.basal_rate >= 0.0, "basal_rate must be non-negative"),
            ((0.0..1.0).contains(&self.reversion), "reversion must lie in [0, 1)"),
            ((0.0..=1.0).contains(&self.meal_size_jitter), "meal_size_jitter must lie in [0, 1]"),
            ((0.0..=1.0).contains(&self.bolus_error), "bolus_error must lie in [0, 1]"),
            (self.meal_time_jitter_minutes >= 0.0, "meal_time_jitter_minutes must be non-negative"),
            (
                (SYNTH_MIN_MGDL..=SYNTH_MAX_MGDL).contains(&self.baseline_mgdl),
                "baseline_mgdl must lie in [40, 400]",
            ),
            (
                self.meals.iter().all(|m| m.carbs_g >= 0.0 && m.minute_of_day < 1440),
                "meals need non-negative carbs and a minute_of_day below 1440",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParameter(msg.into()));
            }
        }
        let finite = [
            self.baseline_mgdl,
            self.insulin_sensitivity,
            self.carb_ratio,
            self.noise_sd,
            self.basal_rate,
            self.circadian_amplitude,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Normalized per-step weights of a triangle over `[0, support]` peaking at `peak`.
fn triangular_kernel(support: f64, peak: f64) -> Vec<f64> {
    let steps = (support / f64::from(STEP_MINUTES)) as usize;
    let raw: Vec<f64> = (0..steps)
        .map(|k| {
            let m = (k as f64 + 0.5) * f64::from(STEP_MINUTES);
            if m <= peak {
                m / peak
            } else {
                (support - m) / (support - peak)
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn carb_kernel() -> Vec<f64> {
    triangular_kernel(CARB_KERNEL_MINUTES, CARB_KERNEL_MINUTES / 2.0)
}

pub fn insulin_kernel() -> Vec<f64> {
    triangular_kernel(INSULIN_KERNEL_MINUTES, INSULIN_PEAK_MINUTES)
}

pub fn synthetic_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// Generates `days` of 5 minute data; a pure function of its arguments.
pub fn synth_generate(seed: u64, days: u32, params: &SynthParams) -> Result<DatasetFrame> {
    if days == 0 {
        return Err(Error::InvalidParameter("days must be at least 1".into()));
    }
    params.validate()?;
    let n = days as usize * STEPS_PER_DAY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut carbs: Column = vec![None; n];
    let mut bolus: Column = vec![None; n];
    for day in 0..days as usize {
        for meal in &params.meals {
            let jitter = if params.meal_time_jitter_minutes > 0.0 {
                rng.gen_range(-params.meal_time_jitter_minutes..=params.meal_time_jitter_minutes)
            } else {
                0.0
            };
            let size = meal.carbs_g * (1.0 + params.meal_size_jitter * rng.gen_range(-1.0..=1.0));
            let bolus_factor = 1.0 + params.bolus_error * rng.gen_range(-1.0..=1.0);
            let minute = f64::from(meal.minute_of_day) + jitter;
            let step = day as i64 * STEPS_PER_DAY as i64 + (minute / f64::from(STEP_MINUTES)).round() as i64;
            let Ok(step) = usize::try_from(step) else { continue };
            if step >= n || size <= 0.0 {
                continue;
            }
            let grams = (size * 10.0).round() / 10.0;
            *carbs[step].get_or_insert(0.0) += grams;
            if params.bolus_with_meals {
                let units = (grams / params.carb_ratio * bolus_factor * 20.0).round() / 20.0;
                if units > 0.0 {
                    *bolus[step].get_or_insert(0.0) += units;
                }
            }
        }
    }

    let carb_w = carb_kernel();
    let ins_w = insulin_kernel();
    let carb_factor = params.insulin_sensitivity / params.carb_ratio;
    let mut carb_effect = vec![0.0; n + carb_w.len()];
    let mut insulin_effect = vec![0.0; n + ins_w.len()];
    for t in 0..n {
        if let Some(g) = carbs[t] {
            for (k, w) in carb_w.iter().enumerate() {
                carb_effect[t + k] += g * carb_factor * w;
            }
        }
        if let Some(u) = bolus[t] {
            for (k, w) in ins_w.iter().enumerate() {
                insulin_effect[t + k] += u * params.insulin_sensitivity * w;
            }
        }
    }

    let noise = Normal::new(0.0, params.noise_sd.max(0.0)).expect("finite sd");
    let mut cgm: Column = Vec::with_capacity(n);
    let mut g = params.baseline_mgdl;
    for t in 0..n {
        cgm.push(Some(g));
        let phase = 2.0 * std::f64::consts::PI * (t % STEPS_PER_DAY) as f64 / STEPS_PER_DAY as f64;
        let drift = params.circadian_amplitude * phase.sin();
        let eps = if params.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        g = g + carb_effect[t] - insulin_effect[t] + drift - params.reversion * (g - params.baseline_mgdl) + eps;
        g = g.clamp(SYNTH_MIN_MGDL, SYNTH_MAX_MGDL);
    }

    let mut frame = DatasetFrame::new(synthetic_start(), STEP_MINUTES).with_column(Signal::Cgm, cgm);
    for (signal, column) in [(Signal::Bolus, bolus), (Signal::Carbs, carbs)] {
        if column.iter().any(Option::is_some) {
            frame.columns.insert(signal, column);
        }
    }
    if params.basal_rate > 0.0 {
        let delivered = basal_delivered(params.basal_rate, STEP_MINUTES);
        frame.columns.insert(Signal::Basal, vec![Some(delivered); n]);
    }
    Ok(frame)
}
