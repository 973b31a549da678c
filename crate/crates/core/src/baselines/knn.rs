//! Mean of the `k` most recent values, with `k` chosen by five-fold
//! contiguous cross validation.

use rayon::prelude::*;

use super::{cell_series, cube_from_cells, BaselineError};
use crate::grid::CrimeCube;

pub const CV_FOLDS: usize = 5;

pub fn knn_forecast(history: &[f64], k: usize) -> Result<f64, BaselineError> {
    if k == 0 {
        return Err(BaselineError::Config("k must be >= 1".into()));
    }
    if history.len() < k {
        return Err(BaselineError::TooShort { need: k, got: history.len() });
    }
    Ok(history[history.len() - k..].iter().sum::<f64>() / k as f64)
}

/// Mean over folds of the one-step RMSE of each candidate, pooling all
/// series within a fold. Steps before the largest candidate are skipped so
/// every candidate is scored on the same points.
pub fn knn_cv_scores(series: &[&[f64]], candidates: &[usize]) -> Result<Vec<f64>, BaselineError> {
    let kmax = *candidates.iter().max().ok_or_else(|| BaselineError::Config("no k candidates".into()))?;
    if candidates.contains(&0) {
        return Err(BaselineError::Config("k must be >= 1".into()));
    }
    let len = series.first().map_or(0, |s| s.len());
    if series.iter().any(|s| s.len() != len) {
        return Err(BaselineError::Config("series lengths differ".into()));
    }
    if len < kmax + CV_FOLDS {
        return Err(BaselineError::TooShort { need: kmax + CV_FOLDS, got: len });
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &k in candidates {
        let mut fold_rmse = 0.0;
        let mut folds = 0usize;
        for f in 0..CV_FOLDS {
            let (lo, hi) = (f * len / CV_FOLDS, (f + 1) * len / CV_FOLDS);
            let mut sse = 0.0;
            let mut n = 0usize;
            for s in series {
                for t in lo.max(kmax)..hi {
                    let pred = s[t - k..t].iter().sum::<f64>() / k as f64;
                    sse += (pred - s[t]).powi(2);
                    n += 1;
                }
            }
            if n > 0 {
                fold_rmse += (sse / n as f64).sqrt();
                folds += 1;
            }
        }
        scores.push(fold_rmse / folds.max(1) as f64);
    }
    Ok(scores)
}

fn argmin_smallest_k(candidates: &[usize], scores: &[f64]) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for (&k, &s) in candidates.iter().zip(scores) {
        if s < best.0 || (s == best.0 && k < best.1) {
            best = (s, k);
        }
    }
    best.1
}

/// Candidate with the lowest mean fold RMSE; ties go to the smaller `k`.
pub fn knn_select_k(series: &[f64], candidates: &[usize]) -> Result<usize, BaselineError> {
    let scores = knn_cv_scores(&[series], candidates)?;
    Ok(argmin_smallest_k(candidates, &scores))
}

/// One `k` shared by all cells of a cube.
pub fn knn_select_k_pooled(cube: &CrimeCube, candidates: &[usize]) -> Result<usize, BaselineError> {
    let cells = cell_series(cube);
    let refs: Vec<&[f64]> = cells.iter().map(Vec::as_slice).collect();
    let scores = knn_cv_scores(&refs, candidates)?;
    Ok(argmin_smallest_k(candidates, &scores))
}

/// One-step forecasts for hours `start..cube.hours`, each from the values
/// before it.
pub fn knn_forecast_cube(cube: &CrimeCube, k: usize, start: usize) -> Result<CrimeCube, BaselineError> {
    if start < k || start > cube.hours {
        return Err(BaselineError::TooShort { need: k, got: start });
    }
    let cells: Vec<Vec<f64>> = cell_series(cube)
        .par_iter()
        .map(|s| (start..cube.hours).map(|t| knn_forecast(&s[..t], k)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    Ok(cube_from_cells(cube, start, &cells))
}
