//! Forecast accuracy: RMSE, hit-set counts and method comparison tables.

use thiserror::Error;

use crate::grid::CrimeCube;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("misaligned runs: {0}")]
    Misaligned(String),
    #[error("invalid threshold {0}")]
    Threshold(f64),
}

/// Signal a run is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Raw,
    Cumulative,
}

/// One method's predictions against ground truth in one domain.
#[derive(Debug, Clone)]
pub struct ForecastRun {
    pub method: String,
    pub predictions: CrimeCube,
    pub truth: CrimeCube,
    pub domain: Domain,
}

impl ForecastRun {
    pub fn check_aligned(&self) -> Result<(), EvalError> {
        if !self.predictions.same_shape(&self.truth) {
            return Err(EvalError::Shape(format!(
                "{}: prediction {}x{}x{} vs truth {}x{}x{}",
                self.method,
                self.predictions.hours,
                self.predictions.rows,
                self.predictions.cols,
                self.truth.hours,
                self.truth.rows,
                self.truth.cols
            )));
        }
        if self.predictions.start_hour != self.truth.start_hour {
            return Err(EvalError::Misaligned(format!(
                "{}: prediction starts at hour {}, truth at {}",
                self.method, self.predictions.start_hour, self.truth.start_hour
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    Cell { row: usize, col: usize },
}

/// Root mean squared error between two equal-length series.
pub fn rmse_values(truth: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::Shape(format!("{} truth vs {} predicted values", truth.len(), pred.len())));
    }
    if truth.is_empty() {
        return Err(EvalError::Shape("empty series".into()));
    }
    let sse: f64 = truth.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// RMSE over all cells and hours, or over the hours of one cell.
pub fn rmse(run: &ForecastRun, scope: Scope) -> Result<f64, EvalError> {
    run.check_aligned()?;
    match scope {
        Scope::All => rmse_values(&run.truth.values, &run.predictions.values),
        Scope::Cell { row, col } => {
            if row >= run.truth.rows || col >= run.truth.cols {
                return Err(EvalError::Shape(format!("cell ({row}, {col}) outside grid")));
            }
            rmse_values(&run.truth.cell_series(row, col), &run.predictions.cell_series(row, col))
        }
    }
}

/// Slot counts: observed slots with at least one event, slots flagged by the
/// forecaster, and their overlap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HitMetrics {
    pub true_slots: usize,
    pub pred_slots: usize,
    pub hits: usize,
}

pub const DEFAULT_HIT_THRESHOLD: f64 = 0.5;

pub fn hit_metrics(truth: &[f64], pred: &[f64], threshold: f64) -> Result<HitMetrics, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::Shape(format!("{} truth vs {} predicted slots", truth.len(), pred.len())));
    }
    if !(threshold > 0.0) {
        return Err(EvalError::Threshold(threshold));
    }
    let mut m = HitMetrics::default();
    for (&t, &p) in truth.iter().zip(pred) {
        let observed = t >= 1.0;
        let flagged = p >= threshold;
        m.true_slots += observed as usize;
        m.pred_slots += flagged as usize;
        m.hits += (observed && flagged) as usize;
    }
    Ok(m)
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub rmse_cumulative: f64,
    pub rmse_raw: f64,
    pub hits: HitMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: &str = "method,rmse_cumulative,rmse_raw,true_slots,pred_slots,hits";

impl Report {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{},{},{}\n",
                r.method, r.rmse_cumulative, r.rmse_raw, r.hits.true_slots, r.hits.pred_slots, r.hits.hits
            ));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
        let mut s = format!(
            "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}  {:>8}\n",
            "method", "rmse_cum", "rmse_raw", "true_slots", "pred_slots", "hits"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<width$}  {:>10.4}  {:>10.4}  {:>10}  {:>10}  {:>8}\n",
                r.method, r.rmse_cumulative, r.rmse_raw, r.hits.true_slots, r.hits.pred_slots, r.hits.hits
            ));
        }
        s
    }

    pub fn row(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Builds the comparison table. Every method needs one cumulative and one raw
/// run, and all runs of a domain must share the same truth. Rows follow the
/// order in which methods first appear. Hit counts come from the raw runs.
pub fn compare_report(runs: &[ForecastRun], scope: Scope, threshold: f64) -> Result<Report, EvalError> {
    let mut methods: Vec<&str> = Vec::new();
    for r in runs {
        r.check_aligned()?;
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    for domain in [Domain::Raw, Domain::Cumulative] {
        let mut of_domain = runs.iter().filter(|r| r.domain == domain);
        if let Some(first) = of_domain.next() {
            for other in of_domain {
                if other.truth != first.truth {
                    return Err(EvalError::Misaligned(format!(
                        "{} and {} use different {:?} truth",
                        first.method, other.method, domain
                    )));
                }
            }
        }
    }
    let find = |m: &str, d: Domain| {
        runs.iter()
            .find(|r| r.method == m && r.domain == d)
            .ok_or_else(|| EvalError::Misaligned(format!("method {m} lacks a {d:?} run")))
    };
    let mut rows = Vec::with_capacity(methods.len());
    for m in methods {
        let cum = find(m, Domain::Cumulative)?;
        let raw = find(m, Domain::Raw)?;
        let (truth, pred) = match scope {
            Scope::All => (raw.truth.values.clone(), raw.predictions.values.clone()),
            Scope::Cell { row, col } => (raw.truth.cell_series(row, col), raw.predictions.cell_series(row, col)),
        };
        rows.push(ReportRow {
            method: m.to_string(),
            rmse_cumulative: rmse(cum, scope)?,
            rmse_raw: rmse(raw, scope)?,
            hits: hit_metrics(&truth, &pred, threshold)?,
        });
    }
    Ok(Report { rows })
}
