//! Comparison forecasters on per-cell scalar series: historical average,
//! nearest previous steps and rolling ARIMA, plus ACF/PACF diagnostics.

mod acf;
mod arima;
mod ha;
mod knn;

use thiserror::Error;

pub use acf::{acf, pacf};
pub use arima::{
    arima_fit, arima_fit_with, arima_forecast_cube, arima_rolling_forecast, ArimaModel,
    ArimaOptions, ArimaOrder, RollingForecast,
};
pub use ha::{ha_fit, ha_forecast, ha_forecast_cube, HaTable};
pub use knn::{
    knn_cv_scores, knn_forecast, knn_forecast_cube, knn_select_k, knn_select_k_pooled,
};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty training window")]
    Empty,
    #[error("series too short: need {need}, have {got}")]
    TooShort { need: usize, got: usize },
    #[error("degenerate series: {0}")]
    Degenerate(String),
    #[error("no convergence after {iterations} iterations (best CSS {})", best.css)]
    NotConverged { iterations: usize, best: Box<ArimaModel> },
    #[error("invalid baseline config: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Per-cell series of a cube, row-major over cells.
pub(crate) fn cell_series(cube: &crate::grid::CrimeCube) -> Vec<Vec<f64>> {
    (0..cube.rows)
        .flat_map(|r| (0..cube.cols).map(move |c| (r, c)))
        .map(|(r, c)| cube.cell_series(r, c))
        .collect()
}

/// Reassembles per-cell forecasts for hours `start..cube.hours` into a cube.
pub(crate) fn cube_from_cells(
    cube: &crate::grid::CrimeCube,
    start: usize,
    cells: &[Vec<f64>],
) -> crate::grid::CrimeCube {
    let hours = cube.hours - start;
    let mut out =
        crate::grid::CrimeCube::zeros(cube.start_hour + start as i64, hours, cube.rows, cube.cols, cube.state);
    out.scale_meta = cube.scale_meta.clone();
    for (ci, series) in cells.iter().enumerate() {
        let (r, c) = (ci / cube.cols, ci % cube.cols);
        for (t, &v) in series.iter().enumerate() {
            out.set(t, r, c, v);
        }
    }
    out
}
