//! The end-to-end predictor: super-resolve and integrate the count cube,
//! scale it for the network, and turn network outputs back into
//! non-negative cumulative and hourly forecasts on the original grid.

use std::ops::Range;

use thiserror::Error;

use crate::baselines::{
    arima_forecast_cube, ha_fit, ha_forecast_cube, knn_forecast_cube, knn_select_k_pooled,
    ArimaOptions, ArimaOrder, BaselineError,
};
use crate::eval::{Domain, ForecastRun};
use crate::grid::{CrimeCube, CubeState};
use crate::ingest::FeatureTable;
use crate::nnet::{Dataset, Lags, Model, NnetError};
use crate::signal::{
    diurnal_integrate, downsample_frame, scale_to_unit, spatial_upsample, unscale_value, SignalError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("{0}")]
    Setup(String),
}

/// Every representation of one count cube the pipeline needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Hourly counts on the base grid.
    pub raw: CrimeCube,
    /// Within-window cumulative counts on the base grid.
    pub cumulative: CrimeCube,
    /// Super-resolved cumulative counts scaled to `[-1, 1]`.
    pub scaled: CrimeCube,
    pub scale: (f64, f64),
    pub period: usize,
    pub train_hours: usize,
}

/// Upsamples, integrates and scales `raw`. Scale bounds come from the first
/// `train_hours` hours only.
pub fn prepare(raw: &CrimeCube, train_hours: usize, period: usize) -> Result<Prepared, PipelineError> {
    if raw.state != CubeState::Raw {
        return Err(PipelineError::Setup(format!("expected a raw cube, got {}", raw.state)));
    }
    if train_hours == 0 || train_hours > raw.hours {
        return Err(PipelineError::Setup(format!(
            "train_hours {train_hours} outside 1..={}",
            raw.hours
        )));
    }
    let cumulative = diurnal_integrate(raw, period)?;
    let up = diurnal_integrate(&spatial_upsample(raw)?, period)?;
    let train = &up.values[..train_hours * up.frame_len()];
    let min = train.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = train.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled = scale_to_unit(&up, min, max)?;
    Ok(Prepared { raw: raw.clone(), cumulative, scaled, scale: (min, max), period, train_hours })
}

impl Prepared {
    pub fn dataset(&self, features: Option<&FeatureTable>, lags: Lags) -> Result<Dataset, PipelineError> {
        Ok(Dataset::from_cube(&self.scaled, features, lags)?)
    }

    /// Training targets: hours with a full lag history before `train_hours`.
    pub fn train_samples(&self, lags: &Lags) -> Vec<usize> {
        (lags.max()..self.train_hours).collect()
    }

    pub fn test_range(&self) -> Range<usize> {
        self.train_hours..self.raw.hours
    }
}

/// Network forecasts on the base grid for a range of hours.
#[derive(Debug, Clone)]
pub struct NetForecast {
    pub cumulative: CrimeCube,
    pub raw: CrimeCube,
}

/// Forecasts each hour `t` in `hours` from the observed frames before it:
/// network output, unscale, subsample to the base grid, then clip to the
/// positive part and, inside a window, to at least the observed cumulative
/// value of hour `t - 1`. The hourly forecast is the increment over that
/// observed value.
pub fn forecast_network(
    model: &Model,
    data: &Dataset,
    prep: &Prepared,
    hours: Range<usize>,
) -> Result<NetForecast, PipelineError> {
    let (rows, cols) = (prep.raw.rows, prep.raw.cols);
    let (uh, uw) = (prep.scaled.rows, prep.scaled.cols);
    let plane = uh * uw;
    let start_hour = prep.raw.start_hour + hours.start as i64;
    let n = hours.len();
    let mut cum = CrimeCube::zeros(start_hour, n, rows, cols, CubeState::Cumulative);
    let mut raw = CrimeCube::zeros(start_hour, n, rows, cols, CubeState::Raw);
    let targets: Vec<usize> = hours.clone().collect();
    let (min, max) = prep.scale;
    for chunk in targets.chunks(64) {
        let out = model.predict(&data.batch(chunk)?)?;
        for (i, &t) in chunk.iter().enumerate() {
            let up: Vec<f64> = out[i * plane..(i + 1) * plane].iter().map(|&s| unscale_value(s, min, max)).collect();
            let yhat = downsample_frame(&up, uh, uw);
            let window_start = t % prep.period == 0;
            let zeros;
            let prev: &[f64] = if window_start || t == 0 {
                zeros = vec![0.0; rows * cols];
                &zeros
            } else {
                prep.cumulative.frame(t - 1)
            };
            let y = crate::signal::postprocess_prediction(&yhat, prev, t, prep.period)?;
            let k = t - hours.start;
            for (ci, (&yv, &pv)) in y.iter().zip(prev).enumerate() {
                cum.frame_mut(k)[ci] = yv;
                raw.frame_mut(k)[ci] = if window_start { yv } else { yv - pv };
            }
        }
    }
    Ok(NetForecast { cumulative: cum, raw })
}

/// Truth cubes (cumulative, raw) over the test hours.
pub fn test_truth(prep: &Prepared) -> (CrimeCube, CrimeCube) {
    let r = prep.test_range();
    (prep.cumulative.slice_hours(r.start, r.end), prep.raw.slice_hours(r.start, r.end))
}

pub fn network_runs(method: &str, fc: &NetForecast, prep: &Prepared) -> Vec<ForecastRun> {
    let (cum_truth, raw_truth) = test_truth(prep);
    vec![
        ForecastRun { method: method.into(), predictions: fc.cumulative.clone(), truth: cum_truth, domain: Domain::Cumulative },
        ForecastRun { method: method.into(), predictions: fc.raw.clone(), truth: raw_truth, domain: Domain::Raw },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSettings {
    pub knn_candidates: Vec<usize>,
    /// `None` skips ARIMA.
    pub arima: Option<ArimaOrder>,
    pub arima_refit_every: usize,
    pub arima_options: ArimaOptions,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            knn_candidates: vec![1, 2, 3, 4, 6, 12, 24],
            arima: None,
            arima_refit_every: 24,
            arima_options: ArimaOptions::default(),
        }
    }
}

/// Outcome of the baseline forecasters on both signals.
#[derive(Debug, Clone)]
pub struct BaselineRuns {
    pub runs: Vec<ForecastRun>,
    /// Selected `k` for the cumulative and raw signals.
    pub knn_k: (usize, usize),
    /// Rolling ARIMA steps that fell back to the previous value.
    pub arima_failures: usize,
    /// ARIMA refits stopped at the iteration cap.
    pub arima_unconverged: usize,
}

/// HA, KNN (k by five-fold CV on the training hours) and optionally ARIMA,
/// each fitted separately on the cumulative and the raw base-grid series.
pub fn baseline_runs(prep: &Prepared, settings: &BaselineSettings) -> Result<BaselineRuns, PipelineError> {
    let test = prep.test_range();
    let (cum_truth, raw_truth) = test_truth(prep);
    let mut runs = Vec::new();
    let mut ks = [0usize; 2];
    let mut arima_failures = 0;
    let mut arima_unconverged = 0;
    for (di, (domain, full, truth)) in [
        (Domain::Cumulative, &prep.cumulative, &cum_truth),
        (Domain::Raw, &prep.raw, &raw_truth),
    ]
    .into_iter()
    .enumerate()
    {
        let train = full.slice_hours(0, prep.train_hours);
        let table = ha_fit(&train)?;
        let ha = ha_forecast_cube(&table, &train, full.start_hour + test.start as i64, test.len());
        runs.push(ForecastRun { method: "HA".into(), predictions: ha, truth: truth.clone(), domain });

        let k = knn_select_k_pooled(&train, &settings.knn_candidates)?;
        ks[di] = k;
        let knn = knn_forecast_cube(full, k, test.start)?;
        runs.push(ForecastRun { method: "KNN".into(), predictions: knn, truth: truth.clone(), domain });

        if let Some(order) = settings.arima {
            let (ar, failed, unconverged) =
                arima_forecast_cube(full, order, test.start, settings.arima_refit_every, &settings.arima_options)?;
            arima_failures += failed;
            arima_unconverged += unconverged;
            runs.push(ForecastRun { method: "ARIMA".into(), predictions: ar, truth: truth.clone(), domain });
        }
    }
    Ok(BaselineRuns { runs, knn_k: (ks[0], ks[1]), arima_failures, arima_unconverged })
}
