//! Sample autocorrelation and partial autocorrelation.

use super::BaselineError;

fn check(series: &[f64], max_lag: usize) -> Result<(), BaselineError> {
    if series.len() <= max_lag {
        return Err(BaselineError::TooShort { need: max_lag + 1, got: series.len() });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(BaselineError::Degenerate("non-finite value".into()));
    }
    Ok(())
}

/// `acf[l]` for `l = 0..=max_lag`: mean-centred autocovariance over the
/// lag-0 value.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>, BaselineError> {
    check(series, max_lag)?;
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(BaselineError::Degenerate("zero variance".into()));
    }
    Ok((0..=max_lag)
        .map(|l| c[..n - l].iter().zip(&c[l..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// `pacf[l]` for `l = 1..=max_lag` (index 0 holds lag 1), by the
/// Durbin-Levinson recursion on the sample ACF.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>, BaselineError> {
    let r = acf(series, max_lag)?;
    let mut out = Vec::with_capacity(max_lag);
    let mut phi: Vec<f64> = Vec::new();
    let mut v = 1.0;
    for k in 1..=max_lag {
        let num = r[k] - phi.iter().enumerate().map(|(j, p)| p * r[k - 1 - j]).sum::<f64>();
        let a = if v > 0.0 { num / v } else { 0.0 };
        let next: Vec<f64> = phi
            .iter()
            .enumerate()
            .map(|(j, p)| p - a * phi[k - 2 - j])
            .chain(std::iter::once(a))
            .collect();
        phi = next;
        v *= 1.0 - a * a;
        out.push(a);
    }
    Ok(out)
}
