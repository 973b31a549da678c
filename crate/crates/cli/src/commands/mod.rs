//! Subcommand implementations and the artifact layout they share.
//!
//! Stage directories:
//! - `synth`: `events.csv`, `weather.csv`, `holidays.csv`
//! - `ingest`: `cube/` (hourly counts), `features.csv`
//! - `preprocess`: `raw/`, `cumulative/`, `scaled/`, `features.csv`, `prepared.txt`
//! - `train` / `ternarize`: `model.ckpt` / `model.strt`, `history.csv`
//! - `predict` / `baselines`: `forecasts/<method>/{cumulative,raw}/`
//! - `evaluate`: `report.csv`, `report.txt`
//! - `gradcheck`: `gradcheck.csv`

mod data;
mod model;
mod report;

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use stcast_core::grid::{default_la_gridspec, CrimeCube, GridSpec};
use stcast_core::ingest::{date_to_epoch_hour, read_feature_table, write_feature_table, FeatureTable};
use stcast_core::nnet::{Lags, TrainConfig, Variant};
use stcast_core::pipeline::Prepared;

pub use data::{ingest, preprocess, synth};
pub use model::{gradcheck, predict, ternarize, train};
pub use report::{baselines, evaluate};

use crate::config::Config;
use crate::error::CliError;

/// Statistics appended to a run manifest.
pub type Stats = Vec<(String, String)>;

pub const PREPARED_FILE: &str = "prepared.txt";
pub const FEATURES_FILE: &str = "features.csv";

fn grid_spec(cfg: &mut Config) -> Result<GridSpec, CliError> {
    let la = default_la_gridspec();
    let spec = GridSpec {
        lat_min: cfg.get("lat_min", la.lat_min)?,
        lat_max: cfg.get("lat_max", la.lat_max)?,
        lon_min: cfg.get("lon_min", la.lon_min)?,
        lon_max: cfg.get("lon_max", la.lon_max)?,
        rows: cfg.require("rows")?,
        cols: cfg.require("cols")?,
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

fn start_hour(cfg: &mut Config, key: &str, default: Option<&str>) -> Result<Option<i64>, CliError> {
    let s: Option<String> = match default {
        Some(d) => Some(cfg.get(key, d.to_string())?),
        None => cfg.opt(key)?,
    };
    s.map(|s| {
        NaiveDate::parse_from_str(&s, "%Y-%m-%d")
            .map(date_to_epoch_hour)
            .map_err(|_| CliError::Usage(format!("`{key}` must be YYYY-MM-DD, got `{s}`")))
    })
    .transpose()
}

fn lags(cfg: &mut Config) -> Result<Lags, CliError> {
    let full = Lags::full();
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    let lags = Lags {
        closeness: cfg.list("closeness", &join(&full.closeness))?,
        period: cfg.list("period_lags", &join(&full.period))?,
        trend: cfg.list("trend", &join(&full.trend))?,
    };
    lags.validate()?;
    Ok(lags)
}

fn variant(cfg: &mut Config) -> Result<Variant, CliError> {
    let v: String = cfg.get("variant", "conv3x3".to_string())?;
    Variant::parse(&v).ok_or_else(|| CliError::Usage(format!("unknown variant `{v}` (conv3x3 or pointwise)")))
}

fn train_config(cfg: &mut Config) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let tc = TrainConfig {
        learning_rate: cfg.get("learning_rate", d.learning_rate)?,
        epochs_main: cfg.get("epochs_main", d.epochs_main)?,
        epochs_finetune: cfg.get("epochs_finetune", d.epochs_finetune)?,
        validation_fraction: cfg.get("validation_fraction", d.validation_fraction)?,
        batch_size: cfg.get("batch_size", d.batch_size)?,
        l2: cfg.get("l2", d.l2)?,
        seed: cfg.get("seed", d.seed)?,
    };
    tc.validate()?;
    Ok(tc)
}

fn write_cube(cube: &CrimeCube, dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    cube.write_dir(dir)?;
    Ok(())
}

/// Writes the prepared signals of one run.
fn save_prepared(prep: &Prepared, features: Option<&FeatureTable>, dir: &Path) -> Result<(), CliError> {
    write_cube(&prep.raw, &dir.join("raw"))?;
    write_cube(&prep.cumulative, &dir.join("cumulative"))?;
    write_cube(&prep.scaled, &dir.join("scaled"))?;
    if let Some(ft) = features {
        write_feature_table(&dir.join(FEATURES_FILE), ft)?;
    }
    let text = format!(
        "train_hours = {}\nperiod = {}\nscale_min = {}\nscale_max = {}\n",
        prep.train_hours, prep.period, prep.scale.0, prep.scale.1
    );
    fs::write(dir.join(PREPARED_FILE), text)?;
    Ok(())
}

fn load_prepared(dir: &Path) -> Result<(Prepared, Option<FeatureTable>), CliError> {
    let path = dir.join(PREPARED_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("{}: {e} (run `preprocess` first)", path.display())))?;
    let kv = crate::config::parse_text(&text, &path.display().to_string())?;
    let field = |k: &str| -> Result<String, CliError> {
        kv.get(k).cloned().ok_or_else(|| CliError::Data(format!("{}: missing `{k}`", path.display())))
    };
    let bad = |k: &str| CliError::Data(format!("{}: bad `{k}`", path.display()));
    let train_hours: usize = field("train_hours")?.parse().map_err(|_| bad("train_hours"))?;
    let period: usize = field("period")?.parse().map_err(|_| bad("period"))?;
    let min: f64 = field("scale_min")?.parse().map_err(|_| bad("scale_min"))?;
    let max: f64 = field("scale_max")?.parse().map_err(|_| bad("scale_max"))?;
    let prep = Prepared {
        raw: CrimeCube::read_dir(&dir.join("raw"))?,
        cumulative: CrimeCube::read_dir(&dir.join("cumulative"))?,
        scaled: CrimeCube::read_dir(&dir.join("scaled"))?,
        scale: (min, max),
        period,
        train_hours,
    };
    let fpath = dir.join(FEATURES_FILE);
    let features = if fpath.exists() { Some(read_feature_table(&fpath)?) } else { None };
    Ok((prep, features))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}
