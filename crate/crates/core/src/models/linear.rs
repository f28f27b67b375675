//! Linear learners: closed-form ridge/OLS, coordinate-descent elastic net
//! and Huber regression by iteratively reweighted least squares.
//!
//! Intercepts are never penalized: the design and target are centered
//! (weighted, for IRLS) and the intercept is recovered afterwards.

use nalgebra::{DMatrix, DVector};

use super::FitReport;

pub const CD_TOLERANCE: f64 = 1e-6;
pub const CD_MAX_SWEEPS: usize = 10_000;
pub const IRLS_TOLERANCE: f64 = 1e-6;
pub const IRLS_MAX_ITER: usize = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coef).map(|(x, w)| x * w).sum::<f64>()
    }
}

/// `sign(z) * max(|z| - gamma, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Exact minimizer of the one-coordinate elastic-net subproblem, where `rho`
/// is the partial-residual correlation `(1/n) x_j . (r + x_j w_j)` and
/// `z = (1/n) x_j . x_j`.
pub fn coordinate_update(rho: f64, z: f64, alpha: f64, l1_ratio: f64) -> f64 {
    let denom = z + alpha * (1.0 - l1_ratio);
    if denom <= 0.0 {
        0.0
    } else {
        soft_threshold(rho, alpha * l1_ratio) / denom
    }
}

/// Weighted column means (plain means when `weights` is `None`).
fn centers(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>, fit_intercept: bool) -> (Vec<f64>, f64) {
    if !fit_intercept {
        return (vec![0.0; x.ncols()], 0.0);
    }
    let n = x.nrows();
    let (wsum, w): (f64, Box<dyn Fn(usize) -> f64>) = match weights {
        Some(ws) => (ws.iter().sum(), Box::new(move |i| ws[i])),
        None => (n as f64, Box::new(|_| 1.0)),
    };
    let x_mean = x
        .column_iter()
        .map(|c| c.iter().enumerate().map(|(i, v)| w(i) * v).sum::<f64>() / wsum)
        .collect();
    let y_mean = y.iter().enumerate().map(|(i, v)| w(i) * v).sum::<f64>() / wsum;
    (x_mean, y_mean)
}

/// Solves `(Xc' W Xc + alpha I) w = Xc' W yc`. Falls back to the least-norm
/// least-squares solution when the system is singular; the returned flag
/// reports that fallback.
pub fn solve_ridge(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    alpha: f64,
    fit_intercept: bool,
) -> (LinearFit, bool) {
    let (n, p) = x.shape();
    let (x_mean, y_mean) = centers(x, y, weights, fit_intercept);
    // rows scaled by sqrt(weight)
    let mut xs = DMatrix::zeros(n, p);
    let mut ys = DVector::zeros(n);
    for i in 0..n {
        let sw = weights.map_or(1.0, |w| w[i].sqrt());
        for j in 0..p {
            xs[(i, j)] = sw * (x[(i, j)] - x_mean[j]);
        }
        ys[i] = sw * (y[i] - y_mean);
    }
    let xt = xs.transpose();
    let mut gram = &xt * &xs;
    for j in 0..p {
        gram[(j, j)] += alpha;
    }
    let rhs = &xt * &ys;

    let mut least_norm = false;
    let coef = match gram.clone().cholesky() {
        Some(ch) if alpha > 0.0 || well_conditioned(&ch) => ch.solve(&rhs),
        _ => {
            least_norm = true;
            least_norm_solution(&xs, &ys, alpha)
        }
    };
    let coef: Vec<f64> = coef.iter().copied().collect();
    let intercept = y_mean - x_mean.iter().zip(&coef).map(|(m, w)| m * w).sum::<f64>();
    (LinearFit { intercept, coef }, least_norm)
}

fn well_conditioned(ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let diag = ch.l_dirty().diagonal();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    // diag of L is sqrt of pivots; rounding alone leaves pivots near sqrt(eps)
    max > 0.0 && min > max * 1e-6
}

/// Minimum-norm solution of the (ridge-augmented) least-squares problem via SVD.
fn least_norm_solution(xs: &DMatrix<f64>, ys: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let p = xs.ncols();
    let (a, b) = if alpha > 0.0 {
        let mut a = DMatrix::zeros(xs.nrows() + p, p);
        a.rows_mut(0, xs.nrows()).copy_from(xs);
        for j in 0..p {
            a[(xs.nrows() + j, j)] = alpha.sqrt();
        }
        let mut b = DVector::zeros(xs.nrows() + p);
        b.rows_mut(0, xs.nrows()).copy_from(ys);
        (a, b)
    } else {
        (xs.clone(), ys.clone())
    };
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = max_sv * f64::EPSILON * (xs.nrows().max(p) as f64);
    svd.solve(&b, eps).expect("U and V were computed")
}

/// Elastic net by cyclic coordinate descent, minimizing
/// `(1/2n)|y - b - Xw|^2 + alpha (l1_ratio |w|_1 + (1 - l1_ratio)/2 |w|^2)`.
pub fn elastic_net(
    x: &DMatrix<f64>,
    y: &[f64],
    alpha: f64,
    l1_ratio: f64,
    fit_intercept: bool,
) -> (LinearFit, FitReport) {
    let (n, p) = x.shape();
    let nf = n as f64;
    let (x_mean, y_mean) = centers(x, y, None, fit_intercept);
    let xc: Vec<Vec<f64>> = (0..p)
        .map(|j| x.column(j).iter().map(|v| v - x_mean[j]).collect())
        .collect();
    let z: Vec<f64> = xc.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();
    // RMS of each raw column; a sweep moves predictions by at most sum |step| * scale
    let scale: Vec<f64> = (0..p).map(|j| (z[j] + x_mean[j] * x_mean[j]).sqrt().max(1.0)).collect();
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut w = vec![0.0; p];

    let mut report = FitReport::default();
    let mut prev_sweep = f64::INFINITY;
    for sweep in 1..=CD_MAX_SWEEPS {
        let mut sweep_change: f64 = 0.0;
        for j in 0..p {
            let col = &xc[j];
            let old = w[j];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + z[j] * old;
            let new = if z[j] == 0.0 { 0.0 } else { coordinate_update(rho, z[j], alpha, l1_ratio) };
            let delta = new - old;
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= a * delta;
                }
                w[j] = new;
            }
            sweep_change += delta.abs() * scale[j];
        }
        report.iterations = sweep;
        // geometric tail of the remaining steps at the observed contraction rate
        let rate = (sweep_change / prev_sweep).min(1.0 - 1e-3);
        let remaining = sweep_change * rate / (1.0 - rate);
        if sweep_change.max(remaining) < CD_TOLERANCE {
            report.converged = true;
            break;
        }
        prev_sweep = sweep_change;
    }
    let intercept = y_mean - x_mean.iter().zip(&w).map(|(m, c)| m * c).sum::<f64>();
    (LinearFit { intercept, coef: w }, report)
}

/// Huber regression: minimizes `sum huber_delta(r_i) + (alpha/2)|w|^2` by
/// iteratively reweighted least squares, starting from the ridge solution.
pub fn huber(
    x: &DMatrix<f64>,
    y: &[f64],
    delta: f64,
    alpha: f64,
    fit_intercept: bool,
) -> (LinearFit, FitReport) {
    let n = x.nrows();
    let mut report = FitReport::default();
    let (mut fit, ln) = solve_ridge(x, y, None, alpha, fit_intercept);
    report.least_norm |= ln;
    let mut weights = vec![1.0; n];
    for iter in 1..=IRLS_MAX_ITER {
        for i in 0..n {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let r = (y[i] - fit.predict(&row)).abs();
            weights[i] = if r <= delta { 1.0 } else { delta / r };
        }
        let (next, ln) = solve_ridge(x, y, Some(&weights), alpha, fit_intercept);
        report.least_norm |= ln;
        let change = next
            .coef
            .iter()
            .zip(&fit.coef)
            .map(|(a, b)| (a - b).abs())
            .fold((next.intercept - fit.intercept).abs(), f64::max);
        fit = next;
        report.iterations = iter;
        if change < IRLS_TOLERANCE {
            report.converged = true;
            break;
        }
    }
    (fit, report)
}
