//! ARIMA(p, d, q) by conditional sum of squares.
//!
//! After `d`-fold differencing the series `w` is modelled in mean form,
//! `(w_t - c) = sum phi_i (w_{t-i} - c) + e_t + sum theta_j e_{t-j}`.
//! Innovations are recursed from `t = p` with zero pre-sample innovations.
//! The CSS is minimised by Levenberg-Marquardt with the exact Jacobian of
//! the innovation recursion, started from a Hannan-Rissanen estimate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{cell_series, cube_from_cells, BaselineError};
use crate::grid::CrimeCube;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    /// Mean of the differenced series; the one-step forecast is
    /// `c + sum phi_i (w_{t-i} - c) + sum theta_j e_{t-j}`.
    pub c: f64,
    pub sigma2: f64,
    pub css: f64,
    /// CSS after initialisation and after every accepted step.
    pub css_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArimaOptions {
    pub max_iter: usize,
    /// Stop when an accepted step lowers the CSS by less than this fraction.
    pub rel_tol: f64,
}

impl Default for ArimaOptions {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-10 }
    }
}

fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut w = series.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

struct Params<'a> {
    c: f64,
    phi: &'a [f64],
    theta: &'a [f64],
}

fn innovations(w: &[f64], p: &Params) -> Vec<f64> {
    let np = p.phi.len();
    let mut e = vec![0.0; w.len()];
    for t in np..w.len() {
        let mut v = w[t] - p.c;
        for (i, f) in p.phi.iter().enumerate() {
            v -= f * (w[t - 1 - i] - p.c);
        }
        for (j, th) in p.theta.iter().enumerate() {
            if t > j {
                v -= th * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

fn css_of(e: &[f64], np: usize) -> f64 {
    e[np..].iter().map(|v| v * v).sum()
}

/// Innovations and their Jacobian (rows `t >= p`, columns `c, phi, theta`).
fn jacobian(w: &[f64], p: &Params) -> (Vec<f64>, DMatrix<f64>) {
    let (np, nq) = (p.phi.len(), p.theta.len());
    let k = 1 + np + nq;
    let e = innovations(w, p);
    let n = w.len() - np;
    let mut jac = DMatrix::zeros(n, k);
    // de[t] for every t, needed by the MA recursion.
    let mut de = vec![vec![0.0; k]; w.len()];
    for t in np..w.len() {
        let mut row = vec![0.0; k];
        row[0] = -1.0 + p.phi.iter().sum::<f64>();
        for i in 0..np {
            row[1 + i] = -(w[t - 1 - i] - p.c);
        }
        for j in 0..nq {
            if t > j {
                row[1 + np + j] = -e[t - 1 - j];
            }
        }
        for (j, th) in p.theta.iter().enumerate() {
            if t > j {
                for (r, prev) in row.iter_mut().zip(&de[t - 1 - j]) {
                    *r -= th * prev;
                }
            }
        }
        for (col, v) in row.iter().enumerate() {
            jac[(t - np, col)] = *v;
        }
        de[t] = row;
    }
    (e, jac)
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    xtx.cholesky().map(|ch| ch.solve(&xty))
}

/// Hannan-Rissanen start: long AR by least squares, then regression of the
/// centred series on its lags and the long-AR residuals.
fn hannan_rissanen(w: &[f64], p: usize, q: usize, mean: f64) -> (Vec<f64>, Vec<f64>) {
    let n = w.len();
    let x: Vec<f64> = w.iter().map(|v| v - mean).collect();
    let resid = if q > 0 {
        let m = (p + q + 10).max((n as f64).ln().ceil() as usize).min(n / 3);
        let rows = n - m;
        let design = DMatrix::from_fn(rows, m, |r, i| x[m + r - 1 - i]);
        let target = DVector::from_fn(rows, |r, _| x[m + r]);
        match least_squares(&design, &target) {
            Some(a) => {
                let mut e = vec![0.0; n];
                for t in m..n {
                    e[t] = x[t] - (0..m).map(|i| a[i] * x[t - 1 - i]).sum::<f64>();
                }
                Some((e, m))
            }
            None => None,
        }
    } else {
        None
    };
    let start = p.max(resid.as_ref().map_or(0, |(_, m)| m + q));
    if n <= start + p + q {
        return (vec![0.0; p], vec![0.0; q]);
    }
    let rows = n - start;
    let design = DMatrix::from_fn(rows, p + q, |r, col| {
        let t = start + r;
        if col < p {
            x[t - 1 - col]
        } else {
            resid.as_ref().map_or(0.0, |(e, _)| e[t - 1 - (col - p)])
        }
    });
    let target = DVector::from_fn(rows, |r, _| x[start + r]);
    match least_squares(&design, &target) {
        Some(b) => (b.as_slice()[..p].to_vec(), b.as_slice()[p..].to_vec()),
        None => (vec![0.0; p], vec![0.0; q]),
    }
}

pub fn arima_fit(series: &[f64], order: ArimaOrder) -> Result<ArimaModel, BaselineError> {
    arima_fit_with(series, order, &ArimaOptions::default())
}

pub fn arima_fit_with(series: &[f64], order: ArimaOrder, opts: &ArimaOptions) -> Result<ArimaModel, BaselineError> {
    let ArimaOrder { p, d, q } = order;
    if series.iter().any(|v| !v.is_finite()) {
        return Err(BaselineError::Degenerate("non-finite value".into()));
    }
    let w = difference(series, d);
    let need = 2 * (p + q) + 2;
    if w.len() < need {
        return Err(BaselineError::TooShort { need: need + d, got: series.len() });
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let n_eff = (w.len() - p) as f64;
    if p + q > 0 && w.iter().all(|&v| v == w[0]) {
        return Err(BaselineError::Degenerate("constant series".into()));
    }

    let (phi0, theta0) = if p + q > 0 { hannan_rissanen(&w, p, q, mean) } else { (vec![], vec![]) };
    let mut beta: Vec<f64> = std::iter::once(mean).chain(phi0).chain(theta0).collect();
    let unpack = |b: &[f64]| (b[0], b[1..1 + p].to_vec(), b[1 + p..].to_vec());
    let css_at = |b: &[f64]| {
        let (c, phi, theta) = unpack(b);
        css_of(&innovations(&w, &Params { c, phi: &phi, theta: &theta }), p)
    };
    let mut css = css_at(&beta);
    if !css.is_finite() {
        beta = std::iter::once(mean).chain(std::iter::repeat(0.0).take(p + q)).collect();
        css = css_at(&beta);
    }
    let mut history = vec![css];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (c, phi, theta) = unpack(&beta);
        let (e, jac) = jacobian(&w, &Params { c, phi: &phi, theta: &theta });
        let r = DVector::from_column_slice(&e[p..]);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() <= 1e-12 * css.max(1e-300) {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
            let cand_css = css_at(&cand);
            if cand_css.is_finite() && cand_css < css {
                let rel = (css - cand_css) / css.max(1e-300);
                beta = cand;
                css = cand_css;
                history.push(css);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < opts.rel_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left at machine precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    let (c, phi, theta) = unpack(&beta);
    let model = ArimaModel { order, phi, theta, c, sigma2: css / n_eff, css, css_history: history };
    if converged {
        Ok(model)
    } else {
        Err(BaselineError::NotConverged { iterations, best: Box::new(model) })
    }
}

impl ArimaModel {
    /// One-step-ahead forecast of the undifferenced series after `history`.
    pub fn forecast_next(&self, history: &[f64]) -> f64 {
        let ArimaOrder { p, d, .. } = self.order;
        let w = difference(history, d);
        let e = innovations(&w, &Params { c: self.c, phi: &self.phi, theta: &self.theta });
        let n = w.len();
        let mut next = self.c;
        for (i, f) in self.phi.iter().enumerate() {
            if n > i {
                next += f * (w[n - 1 - i] - self.c);
            }
        }
        for (j, th) in self.theta.iter().enumerate() {
            if n > j && n - 1 - j >= p {
                next += th * e[n - 1 - j];
            }
        }
        // Undo the differencing: y_t = w_t - sum_{k=1..d} (-1)^k C(d,k) y_{t-k}.
        let mut binom = 1.0;
        for k in 1..=d {
            binom = binom * (d + 1 - k) as f64 / k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            next -= sign * binom * history[history.len() - k];
        }
        next
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingForecast {
    /// `predictions[i]` forecasts `series[start + i]`.
    pub predictions: Vec<f64>,
    /// Steps whose fit failed and fell back to the previous value.
    pub failed: Vec<usize>,
    /// Refit steps that hit the iteration cap; their best iterate is used.
    pub unconverged: Vec<usize>,
}

/// Walks `t = start..series.len()`, refitting on `series[..t]` every
/// `refit_every` steps and forecasting `series[t]` from `series[..t]` only.
pub fn arima_rolling_forecast(
    series: &[f64],
    order: ArimaOrder,
    start: usize,
    refit_every: usize,
    opts: &ArimaOptions,
) -> Result<RollingForecast, BaselineError> {
    if refit_every == 0 {
        return Err(BaselineError::Config("refit_every must be >= 1".into()));
    }
    if start == 0 || start > series.len() {
        return Err(BaselineError::TooShort { need: 1, got: start });
    }
    let mut out = RollingForecast { predictions: Vec::new(), failed: Vec::new(), unconverged: Vec::new() };
    let mut model: Option<ArimaModel> = None;
    for t in start..series.len() {
        if (t - start) % refit_every == 0 {
            model = match arima_fit_with(&series[..t], order, opts) {
                Ok(m) => Some(m),
                Err(BaselineError::NotConverged { best, .. }) => {
                    out.unconverged.push(t);
                    Some(*best)
                }
                Err(_) => None,
            };
        }
        match &model {
            Some(m) => out.predictions.push(m.forecast_next(&series[..t])),
            None => {
                out.predictions.push(series[t - 1]);
                out.failed.push(t);
            }
        }
    }
    Ok(out)
}

/// Rolling forecasts for every cell over hours `start..cube.hours`;
/// returns the forecast cube with the total failed-step and unconverged
/// refit counts.
pub fn arima_forecast_cube(
    cube: &CrimeCube,
    order: ArimaOrder,
    start: usize,
    refit_every: usize,
    opts: &ArimaOptions,
) -> Result<(CrimeCube, usize, usize), BaselineError> {
    let runs: Vec<RollingForecast> = cell_series(cube)
        .par_iter()
        .map(|s| arima_rolling_forecast(s, order, start, refit_every, opts))
        .collect::<Result<_, _>>()?;
    let failed = runs.iter().map(|r| r.failed.len()).sum();
    let unconverged = runs.iter().map(|r| r.unconverged.len()).sum();
    let cells: Vec<Vec<f64>> = runs.into_iter().map(|r| r.predictions).collect();
    Ok((cube_from_cells(cube, start, &cells), failed, unconverged))
}
