//! Regularity-enhancing transforms and the prediction postprocessor.
//!
//! All transforms here are exactly invertible on the values they produce:
//! integration is undone by first differences within each window, and the
//! corner-aligned bilinear upsampler keeps the original samples on the even
//! lattice so that subsampling recovers them bit for bit.

use thiserror::Error;

use crate::grid::{CrimeCube, CubeState, ScaleMeta};

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("expected cube state {expected}, found {found}")]
    State { expected: &'static str, found: CubeState },
    #[error("size error: {0}")]
    Size(String),
    #[error("degenerate scale: min {min} must be below max {max}")]
    DegenerateScale { min: f64, max: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Default diurnal window length in hours.
pub const DAY_HOURS: usize = 24;

/// Per-run transform settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformMeta {
    pub period_hours: usize,
    pub scale: Option<(f64, f64)>,
}

impl Default for TransformMeta {
    fn default() -> Self {
        Self {
            period_hours: DAY_HOURS,
            scale: None,
        }
    }
}

impl TransformMeta {
    /// Spatial super-resolution factor per dimension (fixed).
    pub const UPSAMPLE_FACTOR: usize = 2;
}

/// Within-window inclusive cumulative sum per cell. Windows are
/// `[kT, (k+1)T)` hour offsets from the cube start.
pub fn diurnal_integrate(cube: &CrimeCube, period: usize) -> Result<CrimeCube, SignalError> {
    let state = match cube.state {
        CubeState::Raw => CubeState::Cumulative,
        CubeState::UpsampledRaw => CubeState::UpsampledCumulative,
        found => {
            return Err(SignalError::State {
                expected: "raw or upsampled-raw",
                found,
            })
        }
    };
    check_period(period)?;
    let n = cube.frame_len();
    let mut out = cube.clone();
    out.state = state;
    for t in 0..cube.hours {
        if t % period == 0 {
            continue;
        }
        let (prev, cur) = out.values.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        for (c, p) in cur[..n].iter_mut().zip(prev) {
            *c += *p;
        }
    }
    Ok(out)
}

/// Inverse of [`diurnal_integrate`]: first differences restarting at each
/// window start. Negative outputs are allowed.
pub fn diurnal_differentiate(cube: &CrimeCube, period: usize) -> Result<CrimeCube, SignalError> {
    let state = match cube.state {
        CubeState::Cumulative => CubeState::Raw,
        CubeState::UpsampledCumulative => CubeState::UpsampledRaw,
        found => {
            return Err(SignalError::State {
                expected: "cumulative or upsampled-cumulative",
                found,
            })
        }
    };
    check_period(period)?;
    let n = cube.frame_len();
    let mut out = cube.clone();
    out.state = state;
    for t in (1..cube.hours).rev() {
        if t % period == 0 {
            continue;
        }
        for i in 0..n {
            out.values[t * n + i] = cube.values[t * n + i] - cube.values[(t - 1) * n + i];
        }
    }
    Ok(out)
}

fn check_period(period: usize) -> Result<(), SignalError> {
    if period == 0 {
        return Err(SignalError::Size("period must be >= 1".into()));
    }
    Ok(())
}

/// Corner-aligned bilinear 2x upsampling of one `h x w` frame to
/// `(2h-1) x (2w-1)`.
pub fn upsample_frame(frame: &[f64], h: usize, w: usize) -> Vec<f64> {
    debug_assert_eq!(frame.len(), h * w);
    let (oh, ow) = (2 * h - 1, 2 * w - 1);
    let mut out = vec![0.0; oh * ow];
    let at = |i: usize, j: usize| frame[i * w + j];
    for i in 0..h {
        for j in 0..w {
            out[(2 * i) * ow + 2 * j] = at(i, j);
            if i + 1 < h {
                out[(2 * i + 1) * ow + 2 * j] = (at(i, j) + at(i + 1, j)) / 2.0;
            }
            if j + 1 < w {
                out[(2 * i) * ow + 2 * j + 1] = (at(i, j) + at(i, j + 1)) / 2.0;
            }
            if i + 1 < h && j + 1 < w {
                out[(2 * i + 1) * ow + 2 * j + 1] =
                    (at(i, j) + at(i + 1, j) + at(i, j + 1) + at(i + 1, j + 1)) / 4.0;
            }
        }
    }
    out
}

/// Even-index subsampling of an odd-sized `(2h-1) x (2w-1)` frame.
pub fn downsample_frame(frame: &[f64], oh: usize, ow: usize) -> Vec<f64> {
    debug_assert_eq!(frame.len(), oh * ow);
    let (h, w) = (oh.div_ceil(2), ow.div_ceil(2));
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            out.push(frame[(2 * i) * ow + 2 * j]);
        }
    }
    out
}

/// Upsamples every frame; the state gains the `upsampled-` prefix.
pub fn spatial_upsample(cube: &CrimeCube) -> Result<CrimeCube, SignalError> {
    let state = match cube.state {
        CubeState::Raw => CubeState::UpsampledRaw,
        CubeState::Cumulative => CubeState::UpsampledCumulative,
        found => {
            return Err(SignalError::State {
                expected: "raw or cumulative",
                found,
            })
        }
    };
    if cube.rows < 2 || cube.cols < 2 {
        return Err(SignalError::Size(format!(
            "upsampling needs at least 2x2 frames, got {}x{}",
            cube.rows, cube.cols
        )));
    }
    let (oh, ow) = (2 * cube.rows - 1, 2 * cube.cols - 1);
    let mut values = Vec::with_capacity(cube.hours * oh * ow);
    for t in 0..cube.hours {
        values.extend(upsample_frame(cube.frame(t), cube.rows, cube.cols));
    }
    Ok(CrimeCube {
        start_hour: cube.start_hour,
        hours: cube.hours,
        rows: oh,
        cols: ow,
        values,
        state,
        scale_meta: None,
    })
}

/// Inverse of [`spatial_upsample`].
pub fn spatial_downsample(cube: &CrimeCube) -> Result<CrimeCube, SignalError> {
    let state = match cube.state {
        CubeState::UpsampledRaw => CubeState::Raw,
        CubeState::UpsampledCumulative => CubeState::Cumulative,
        found => {
            return Err(SignalError::State {
                expected: "upsampled-raw or upsampled-cumulative",
                found,
            })
        }
    };
    if cube.rows % 2 == 0 || cube.cols % 2 == 0 {
        return Err(SignalError::Size(format!(
            "downsampling needs odd dimensions, got {}x{}",
            cube.rows, cube.cols
        )));
    }
    let (h, w) = (cube.rows.div_ceil(2), cube.cols.div_ceil(2));
    let mut values = Vec::with_capacity(cube.hours * h * w);
    for t in 0..cube.hours {
        values.extend(downsample_frame(cube.frame(t), cube.rows, cube.cols));
    }
    Ok(CrimeCube {
        start_hour: cube.start_hour,
        hours: cube.hours,
        rows: h,
        cols: w,
        values,
        state,
        scale_meta: None,
    })
}

/// Maps `v` from `[min, max]` to `[-1, 1]`.
pub fn scale_value(v: f64, min: f64, max: f64) -> f64 {
    2.0 * (v - min) / (max - min) - 1.0
}

pub fn unscale_value(s: f64, min: f64, max: f64) -> f64 {
    (s + 1.0) * 0.5 * (max - min) + min
}

/// Affine map of every value to `[-1, 1]` using the given (training) bounds.
pub fn scale_to_unit(cube: &CrimeCube, min: f64, max: f64) -> Result<CrimeCube, SignalError> {
    if !(min < max) {
        return Err(SignalError::DegenerateScale { min, max });
    }
    if cube.state == CubeState::Scaled {
        return Err(SignalError::State {
            expected: "any unscaled state",
            found: cube.state,
        });
    }
    let mut out = cube.clone();
    out.values.iter_mut().for_each(|v| *v = scale_value(*v, min, max));
    out.scale_meta = Some(ScaleMeta {
        min,
        max,
        source: cube.state,
    });
    out.state = CubeState::Scaled;
    Ok(out)
}

/// Inverse of [`scale_to_unit`] using the cube's recorded bounds.
pub fn unscale(cube: &CrimeCube) -> Result<CrimeCube, SignalError> {
    let meta = match (cube.state, cube.scale_meta) {
        (CubeState::Scaled, Some(meta)) => meta,
        (found, _) => {
            return Err(SignalError::State {
                expected: "scaled",
                found,
            })
        }
    };
    if !(meta.min < meta.max) {
        return Err(SignalError::DegenerateScale {
            min: meta.min,
            max: meta.max,
        });
    }
    let mut out = cube.clone();
    out.values
        .iter_mut()
        .for_each(|v| *v = unscale_value(*v, meta.min, meta.max));
    out.state = meta.source;
    out.scale_meta = None;
    Ok(out)
}

/// Enforces the cumulative-signal contract on a predicted frame.
///
/// At the first hour of a window (`n % period == 0`) the prediction is clipped
/// to its positive part; otherwise it is also raised to at least the previous
/// hour's cumulative frame.
pub fn postprocess_prediction(
    yhat_next: &[f64],
    y_prev: &[f64],
    n: usize,
    period: usize,
) -> Result<Vec<f64>, SignalError> {
    if yhat_next.len() != y_prev.len() {
        return Err(SignalError::Shape(format!(
            "prediction has {} cells, previous frame {}",
            yhat_next.len(),
            y_prev.len()
        )));
    }
    check_period(period)?;
    let window_start = n % period == 0;
    Ok(yhat_next
        .iter()
        .zip(y_prev)
        .map(|(&y, &p)| {
            let pos = y.max(0.0);
            if window_start {
                pos
            } else {
                pos.max(p)
            }
        })
        .collect())
}
