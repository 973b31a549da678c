use std::path::Path;

use stcast_core::grid::bin_events;
use stcast_core::ingest::{
    build_feature_table, hotspot_rates, parse_events, parse_events_lenient, parse_holidays, parse_weather,
    synth_events, synth_holidays, synth_weather, write_events, write_feature_table, write_holidays, write_weather,
    Excitation, FeatureTable, HourRange, SynthConfig,
};
use stcast_core::pipeline::prepare;
use stcast_core::signal::DAY_HOURS;

use super::{grid_spec, load_prepared, save_prepared, start_hour, write_cube, Stats, FEATURES_FILE};
use crate::config::Config;
use crate::error::CliError;

pub fn synth(cfg: &mut Config, out: &Path) -> Result<Stats, CliError> {
    let grid = grid_spec(cfg)?;
    let start = start_hour(cfg, "start_date", Some("2015-01-01"))?.expect("defaulted");
    let days: usize = cfg.get("days", 104)?;
    let mean_rate: f64 = cfg.get("mean_rate", 0.3)?;
    let excitation = Excitation {
        branching: cfg.get("branching", 0.3)?,
        decay_hours: cfg.get("decay_hours", 2.0)?,
        spread_cells: cfg.get("spread_cells", 0.5)?,
    };
    let seed: u64 = cfg.get("seed", 0)?;
    cfg.finish()?;
    if days == 0 || !(mean_rate > 0.0) {
        return Err(CliError::Usage("days and mean_rate must be positive".into()));
    }
    let sc = SynthConfig {
        grid,
        start_hour: start,
        days,
        base_rates: hotspot_rates(grid.rows, grid.cols, mean_rate, seed),
        excitation,
        seed,
    };
    let events = synth_events(&sc).map_err(|e| CliError::Usage(e.to_string()))?;
    let hours = sc.hours();
    write_events(&out.join("events.csv"), &events)?;
    write_weather(&out.join("weather.csv"), &synth_weather(start, hours, seed))?;
    write_holidays(&out.join("holidays.csv"), &synth_holidays(start, hours))?;
    Ok(vec![("stat.events".into(), events.len().to_string())])
}

pub fn ingest(cfg: &mut Config, out: &Path) -> Result<Stats, CliError> {
    let events_path = cfg.require_input("events")?;
    let weather_path = cfg.input_path("weather")?;
    let holidays_path = cfg.input_path("holidays")?;
    let grid = grid_spec(cfg)?;
    let start = start_hour(cfg, "start_date", None)?;
    let days: Option<usize> = cfg.opt("days")?;
    let lenient: bool = cfg.get("lenient", false)?;
    cfg.finish()?;

    let mut stats = Stats::new();
    let events = if lenient {
        let parsed = parse_events_lenient(&events_path)?;
        stats.push(("stat.rejected_rows".into(), parsed.rejected.len().to_string()));
        if let Some(first) = parsed.rejected.first() {
            log::warn!("{} malformed event row(s) skipped; first: {first}", parsed.rejected.len());
        }
        parsed.records
    } else {
        parse_events(&events_path)?
    };
    if events.is_empty() {
        return Err(CliError::Data(format!("{}: no events", events_path.display())));
    }
    // Default range: whole UTC days covering every event.
    let day = DAY_HOURS as i64;
    let first = events.iter().map(|e| e.start.div_euclid(3600)).min().expect("non-empty");
    let last = events.iter().map(|e| e.start.div_euclid(3600)).max().expect("non-empty");
    let start = start.unwrap_or(first.div_euclid(day) * day);
    let end = match days {
        Some(d) => start + d as i64 * day,
        None => (last.div_euclid(day) + 1) * day,
    };
    let range = HourRange::new(start, end)?;
    let (cube, report) = bin_events(&events, &grid, range);
    if report.out_of_range() > 0 {
        log::warn!(
            "{} event(s) outside the region, {} outside the hour range",
            report.outside_region,
            report.outside_range
        );
    }
    let features = match &weather_path {
        Some(w) => {
            let holidays = match &holidays_path {
                Some(h) => parse_holidays(h)?,
                None => Vec::new(),
            };
            build_feature_table(&parse_weather(w)?, &holidays, range)?
        }
        None => {
            if holidays_path.is_some() {
                return Err(CliError::Usage("`holidays` needs `weather`".into()));
            }
            FeatureTable::from_rows(range.start, (range.start..range.end).map(FeatureTable::time_only_row).collect())
        }
    };
    write_cube(&cube, &out.join("cube"))?;
    write_feature_table(&out.join(FEATURES_FILE), &features)?;
    stats.extend([
        ("stat.hours".into(), range.len().to_string()),
        ("stat.binned".into(), report.binned.to_string()),
        ("stat.outside_region".into(), report.outside_region.to_string()),
        ("stat.outside_range".into(), report.outside_range.to_string()),
    ]);
    Ok(stats)
}

pub fn preprocess(cfg: &mut Config, out: &Path) -> Result<Stats, CliError> {
    let data = cfg.require_input("data")?;
    let test_days: usize = cfg.get("test_days", 14)?;
    let period: usize = cfg.get("period", DAY_HOURS)?;
    cfg.finish()?;
    let raw = stcast_core::grid::CrimeCube::read_dir(&data.join("cube"))?;
    let test_hours = test_days * DAY_HOURS;
    if test_hours >= raw.hours {
        return Err(CliError::Usage(format!(
            "test_days {test_days} leaves no training hours out of {}",
            raw.hours
        )));
    }
    let fpath = data.join(FEATURES_FILE);
    let features = if fpath.exists() { Some(stcast_core::ingest::read_feature_table(&fpath)?) } else { None };
    let prep = prepare(&raw, raw.hours - test_hours, period)?;
    save_prepared(&prep, features.as_ref(), out)?;
    // Reading back guards the on-disk format against drift.
    let (back, _) = load_prepared(out)?;
    if back.scaled != prep.scaled || back.scale != prep.scale {
        return Err(CliError::Data("prepared signals did not survive a round trip".into()));
    }
    Ok(vec![
        ("stat.train_hours".into(), prep.train_hours.to_string()),
        ("stat.test_hours".into(), test_hours.to_string()),
        ("stat.scale_min".into(), prep.scale.0.to_string()),
        ("stat.scale_max".into(), prep.scale.1.to_string()),
    ])
}
