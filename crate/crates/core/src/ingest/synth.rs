use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{epoch_hour_to_date, EventRecord, IngestError, WeatherRow};
use crate::grid::GridSpec;

/// Self-excitation kernel of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    /// Expected number of direct offspring per event; must be in `[0, 1)`.
    pub branching: f64,
    /// Mean offspring delay in hours (exponential).
    pub decay_hours: f64,
    /// Standard deviation of the offspring displacement, in cells.
    pub spread_cells: f64,
}

impl Default for Excitation {
    fn default() -> Self {
        Self {
            branching: 0.0,
            decay_hours: 1.0,
            spread_cells: 0.0,
        }
    }
}

/// Configuration of the seeded Hawkes-style event generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub grid: GridSpec,
    /// Epoch hour of the first generated hour; should be a UTC midnight.
    pub start_hour: i64,
    pub days: usize,
    /// Background rate per cell (row-major) and hour of day, events/hour.
    pub base_rates: Vec<[f64; 24]>,
    pub excitation: Excitation,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        self.grid
            .validate()
            .map_err(|e| IngestError::Config(e.to_string()))?;
        let ex = &self.excitation;
        if !(0.0..1.0).contains(&ex.branching) {
            return Err(IngestError::Config(format!(
                "branching ratio {} must be in [0, 1)",
                ex.branching
            )));
        }
        if ex.branching > 0.0 && !(ex.decay_hours > 0.0 && ex.decay_hours.is_finite()) {
            return Err(IngestError::Config("decay_hours must be positive".into()));
        }
        if !(ex.spread_cells >= 0.0 && ex.spread_cells.is_finite()) {
            return Err(IngestError::Config("spread_cells must be non-negative".into()));
        }
        if self.base_rates.len() != self.grid.n_cells() {
            return Err(IngestError::Config(format!(
                "{} rate profiles for {} cells",
                self.base_rates.len(),
                self.grid.n_cells()
            )));
        }
        if self
            .base_rates
            .iter()
            .flatten()
            .any(|r| !(r.is_finite() && *r >= 0.0))
        {
            return Err(IngestError::Config("rates must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn hours(&self) -> usize {
        self.days * 24
    }
}

/// Relative diurnal intensity with unit mean over the day: low before dawn,
/// peaking in the late afternoon.
pub fn diurnal_profile(hour: usize) -> f64 {
    let h = hour as f64;
    1.0 + 0.6 * (TAU * (h - 17.0) / 24.0).cos() + 0.15 * (2.0 * TAU * (h - 13.0) / 24.0).cos()
}

/// Per-cell diurnal rates from a few seeded Gaussian hotspots, scaled so the
/// grid-wide mean rate is `mean_rate` events per cell-hour.
pub fn hotspot_rates(rows: usize, cols: usize, mean_rate: f64, seed: u64) -> Vec<[f64; 24]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_4075_9075);
    let n_spots = 3;
    let spots: Vec<(f64, f64, f64, f64)> = (0..n_spots)
        .map(|_| {
            let r = rng.gen_range(0.0..rows as f64);
            let c = rng.gen_range(0.0..cols as f64);
            let width = rng.gen_range(0.1..0.25) * rows.max(cols) as f64;
            let weight = rng.gen_range(0.5..1.5);
            (r, c, width.max(0.75), weight)
        })
        .collect();
    let spatial: Vec<f64> = (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64 + 0.5, (i % cols) as f64 + 0.5);
            0.15 + spots
                .iter()
                .map(|&(sr, sc, w, a)| {
                    let d2 = (r - sr).powi(2) + (c - sc).powi(2);
                    a * (-d2 / (2.0 * w * w)).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let mean = spatial.iter().sum::<f64>() / spatial.len() as f64;
    spatial
        .iter()
        .map(|s| {
            let mut profile = [0.0; 24];
            for (h, p) in profile.iter_mut().enumerate() {
                *p = mean_rate * s / mean * diurnal_profile(h);
            }
            profile
        })
        .collect()
}

struct Pending {
    time_h: f64,
    row: usize,
    col: usize,
}

/// Generates events from a background Poisson process per cell-hour plus
/// exponentially delayed, Gaussian-displaced offspring.
///
/// The output is a pure function of `cfg`; events are sorted by start time.
pub fn synth_events(cfg: &SynthConfig) -> Result<Vec<EventRecord>, IngestError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let horizon_h = cfg.hours() as f64;
    let (rows, cols) = (cfg.grid.rows, cfg.grid.cols);
    let mut queue: VecDeque<Pending> = VecDeque::new();
    let mut all: Vec<Pending> = Vec::new();

    for hour in 0..cfg.hours() {
        let hod = hour % 24;
        for cell in 0..rows * cols {
            let rate = cfg.base_rates[cell][hod];
            if rate <= 0.0 {
                continue;
            }
            let n = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
            for _ in 0..n {
                queue.push_back(Pending {
                    time_h: hour as f64 + rng.gen::<f64>(),
                    row: cell / cols,
                    col: cell % cols,
                });
            }
        }
    }

    let ex = cfg.excitation;
    let offspring = (ex.branching > 0.0).then(|| {
        (
            Poisson::new(ex.branching).expect("branching > 0"),
            Exp::new(1.0 / ex.decay_hours).expect("decay > 0"),
            Normal::new(0.0, ex.spread_cells.max(0.0)).expect("spread >= 0"),
        )
    });
    while let Some(ev) = queue.pop_front() {
        if let Some((n_dist, delay, disp)) = &offspring {
            let n = n_dist.sample(&mut rng) as usize;
            for _ in 0..n {
                let t = ev.time_h + delay.sample(&mut rng);
                let r = ev.row as f64 + 0.5 + disp.sample(&mut rng);
                let c = ev.col as f64 + 0.5 + disp.sample(&mut rng);
                if t >= horizon_h {
                    continue;
                }
                queue.push_back(Pending {
                    time_h: t,
                    row: (r.floor().max(0.0) as usize).min(rows - 1),
                    col: (c.floor().max(0.0) as usize).min(cols - 1),
                });
            }
        }
        all.push(ev);
    }

    all.sort_by(|a, b| a.time_h.total_cmp(&b.time_h));
    let base_secs = cfg.start_hour * 3600;
    let events = all
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (lat_lo, lat_hi, lon_lo, lon_hi) = cfg.grid.cell_bounds(p.row, p.col);
            // Stay clear of the cell edges so re-binning is exact.
            let u: f64 = rng.gen_range(1e-6..1.0 - 1e-6);
            let v: f64 = rng.gen_range(1e-6..1.0 - 1e-6);
            EventRecord {
                id: format!("s{i}"),
                start: base_secs + (p.time_h * 3600.0).floor() as i64,
                end: None,
                lat: lat_lo + u * (lat_hi - lat_lo),
                lon: lon_lo + v * (lon_hi - lon_lo),
            }
        })
        .collect();
    Ok(events)
}

/// Seeded hourly weather for synthetic runs: a diurnal temperature cycle with
/// noise, gusty wind and occasional fog, rain and thunder spells. Every
/// seventh hour is left out so the interpolation path is exercised.
pub fn synth_weather(start_hour: i64, hours: usize, seed: u64) -> Vec<WeatherRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77ea_7e77);
    let noise = Normal::new(0.0, 1.5).unwrap();
    let mut rows = Vec::with_capacity(hours);
    let mut rain_left = 0usize;
    for t in 0..hours {
        let hour = start_hour + t as i64;
        if t % 7 == 6 {
            continue;
        }
        let hod = hour.rem_euclid(24) as f64;
        let season = (TAU * t as f64 / (24.0 * 365.0)).cos();
        let temp = 18.0 + 4.0 * season + 6.0 * (PI * (hod - 9.0) / 12.0).sin() + noise.sample(&mut rng);
        let wind = (8.0 + 4.0 * rng.gen::<f64>() + 2.0 * noise.sample(&mut rng)).max(0.0);
        if rain_left == 0 && rng.gen_bool(0.01) {
            rain_left = rng.gen_range(2..8);
        }
        let rain = rain_left > 0;
        rain_left = rain_left.saturating_sub(1);
        rows.push(WeatherRow {
            ts: hour * 3600,
            temp,
            wind,
            fog: (hod < 8.0) && rng.gen_bool(0.1),
            rain,
            thunder: rain && rng.gen_bool(0.2),
        });
    }
    rows
}

/// Fixed-date holidays falling in `[start_hour, start_hour + hours)`.
pub fn synth_holidays(start_hour: i64, hours: usize) -> Vec<NaiveDate> {
    let first = epoch_hour_to_date(start_hour);
    let last = epoch_hour_to_date(start_hour + hours as i64 - 1);
    first
        .iter_days()
        .take_while(|d| *d <= last)
        .filter(|d| matches!((d.month(), d.day()), (1, 1) | (7, 4) | (11, 11) | (12, 25)))
        .collect()
}
