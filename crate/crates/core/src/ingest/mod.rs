//! Event, weather and holiday ingestion, external features and synthetic
//! event generation.

mod events;
mod features;
mod synth;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use thiserror::Error;

pub use events::{parse_events, parse_events_lenient, write_events, EventParse, EventRecord};
pub use features::{
    build_feature_table, parse_holidays, parse_weather, read_feature_table, write_feature_table, write_holidays,
    write_weather, FeatureTable, WeatherRow, FEATURE_NAMES, FEATURE_WIDTH,
};
pub use synth::{
    diurnal_profile, hotspot_rates, synth_events, synth_holidays, synth_weather, Excitation,
    SynthConfig,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{count} bad row(s); first: {first}")]
    BadRows { count: usize, first: RowError, rows: Vec<RowError> },
    #[error("no weather rows inside the requested hour range")]
    NoWeather,
    #[error("invalid range: {0}")]
    Range(String),
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A rejected input row; `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// Half-open interval `[start, end)` of UTC epoch hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HourRange {
    pub start: i64,
    pub end: i64,
}

impl HourRange {
    pub fn new(start: i64, end: i64) -> Result<Self, IngestError> {
        if end <= start {
            return Err(IngestError::Range(format!("empty hour range [{start}, {end})")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, hour: i64) -> bool {
        hour >= self.start && hour < self.end
    }
}

/// Parses an ISO-8601 timestamp to UTC epoch seconds. A missing offset is
/// read as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn format_timestamp(secs: i64) -> String {
    DateTime::<Utc>::from_timestamp(secs, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| secs.to_string())
}

/// Epoch hour of midnight UTC on `date`.
pub fn date_to_epoch_hour(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() / 3600
}

pub fn epoch_hour_to_date(hour: i64) -> NaiveDate {
    DateTime::<Utc>::from_timestamp(hour * 3600, 0)
        .expect("hour in chrono range")
        .date_naive()
}
