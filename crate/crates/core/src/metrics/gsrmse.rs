//! Glucose-specific RMSE penalty surface (Del Favero et al., 2012).
//!
//! ```text
//! pen(g, ĝ) = 1 + a_L * down(g; T_L, b_L) * up(ĝ - g; 0, c_L)
//!               + a_H * up(g; T_H, b_H) * down(ĝ - g; 0, c_H)
//! ```
//!
//! `up(x; a, e)` is a C1 smooth step from 0 at `x = a` to 1 at `x = a + e`,
//! `down(x; a, e)` falls from 1 at `x = a - e` to 0 at `x = a`. The first
//! term penalizes overestimation in and near hypoglycemia, the second
//! underestimation in hyperglycemia. The penalty lies in [1, 1 + max(a_L, a_H)].

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub beta_low: f64,
    pub beta_high: f64,
    pub gamma_low: f64,
    pub gamma_high: f64,
    pub threshold_low: f64,
    pub threshold_high: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams {
            alpha_low: 1.5,
            alpha_high: 1.0,
            beta_low: 30.0,
            beta_high: 100.0,
            gamma_low: 10.0,
            gamma_high: 20.0,
            threshold_low: 85.0,
            threshold_high: 155.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    /// `pen = 1` everywhere; gsRMSE reduces to RMSE.
    Uniform,
    Clinical(PenaltyParams),
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::Clinical(PenaltyParams::default())
    }
}

/// Smooth step rising from 0 at `a` to 1 at `a + eps`.
pub fn smooth_step_up(x: f64, a: f64, eps: f64) -> f64 {
    if x <= a {
        return 0.0;
    }
    if x >= a + eps {
        return 1.0;
    }
    let xi = 2.0 / eps * (x - a - eps / 2.0);
    if x <= a + eps / 2.0 {
        -0.5 * xi.powi(4) - xi.powi(3) + xi + 0.5
    } else {
        0.5 * xi.powi(4) - xi.powi(3) + xi + 0.5
    }
}

/// Smooth step falling from 1 at `a - eps` to 0 at `a`.
pub fn smooth_step_down(x: f64, a: f64, eps: f64) -> f64 {
    1.0 - smooth_step_up(x, a - eps, eps)
}

impl Penalty {
    pub fn value(&self, reference: f64, predicted: f64) -> f64 {
        match self {
            Penalty::Uniform => 1.0,
            Penalty::Clinical(p) => {
                let err = predicted - reference;
                1.0 + p.alpha_low
                    * smooth_step_down(reference, p.threshold_low, p.beta_low)
                    * smooth_step_up(err, 0.0, p.gamma_low)
                    + p.alpha_high
                        * smooth_step_up(reference, p.threshold_high, p.beta_high)
                        * smooth_step_down(err, 0.0, p.gamma_high)
            }
        }
    }
}
