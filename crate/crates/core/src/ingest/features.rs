use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use super::{epoch_hour_to_date, format_timestamp, parse_timestamp, HourRange, IngestError, RowError};

const WEATHER_HEADER: [&str; 6] = ["ts", "temp", "wind", "fog", "rain", "thunder"];

/// Width of one external feature vector.
pub const FEATURE_WIDTH: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_WIDTH] = [
    "temp_z", "wind_z", "fog", "rain", "thunder", "holiday", "hour_sin", "hour_cos", "dow_sin",
    "dow_cos",
];

/// One raw weather observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherRow {
    pub ts: i64,
    pub temp: f64,
    pub wind: f64,
    pub fog: bool,
    pub rain: bool,
    pub thunder: bool,
}

/// Hourly external features, one row per consecutive hour.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub start_hour: i64,
    values: Vec<f64>,
    pub temp_mean: f64,
    pub temp_std: f64,
    pub wind_mean: f64,
    pub wind_std: f64,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.values.len() / FEATURE_WIDTH
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * FEATURE_WIDTH..(t + 1) * FEATURE_WIDTH]
    }

    /// Row for absolute epoch hour `hour`, if covered.
    pub fn row_at_hour(&self, hour: i64) -> Option<&[f64]> {
        let t = hour - self.start_hour;
        (t >= 0 && (t as usize) < self.len()).then(|| self.row(t as usize))
    }

    /// Time-only features for an hour (zero weather, no holiday); used where a
    /// table is not available.
    pub fn time_only_row(hour: i64) -> [f64; FEATURE_WIDTH] {
        let mut row = [0.0; FEATURE_WIDTH];
        fill_time_features(&mut row, hour);
        row
    }

    pub fn from_rows(start_hour: i64, rows: Vec<[f64; FEATURE_WIDTH]>) -> Self {
        Self {
            start_hour,
            values: rows.into_iter().flatten().collect(),
            temp_mean: 0.0,
            temp_std: 0.0,
            wind_mean: 0.0,
            wind_std: 0.0,
        }
    }
}

fn fill_time_features(row: &mut [f64], hour: i64) {
    let hod = hour.rem_euclid(24) as f64;
    // 1970-01-01 was a Thursday; Monday = 0.
    let dow = (hour.div_euclid(24) + 3).rem_euclid(7) as f64;
    row[6] = (TAU * hod / 24.0).sin();
    row[7] = (TAU * hod / 24.0).cos();
    row[8] = (TAU * dow / 7.0).sin();
    row[9] = (TAU * dow / 7.0).cos();
}

pub fn parse_weather(path: &Path) -> Result<Vec<WeatherRow>, IngestError> {
    let origin = path.display().to_string();
    let bytes = fs::read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != WEATHER_HEADER {
        return Err(IngestError::Format {
            path: origin,
            reason: format!("expected header `{}`", WEATHER_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|r| parse_weather_row(&r));
        match parsed {
            Ok(w) => rows.push(w),
            Err(reason) => bad.push(RowError { line, reason }),
        }
    }
    if let Some(first) = bad.first().cloned() {
        return Err(IngestError::BadRows { count: bad.len(), first, rows: bad });
    }
    Ok(rows)
}

fn parse_weather_row(r: &csv::StringRecord) -> Result<WeatherRow, String> {
    if r.len() != 6 {
        return Err(format!("expected 6 fields, got {}", r.len()));
    }
    let ts = parse_timestamp(&r[0]).ok_or_else(|| format!("bad timestamp `{}`", &r[0]))?;
    let num = |i: usize, name: &str| -> Result<f64, String> {
        let v: f64 = r[i].parse().map_err(|_| format!("bad {name} `{}`", &r[i]))?;
        if !v.is_finite() {
            return Err(format!("non-finite {name}"));
        }
        Ok(v)
    };
    let flag = |i: usize, name: &str| -> Result<bool, String> {
        match &r[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(format!("{name} flag must be 0 or 1, got `{other}`")),
        }
    };
    Ok(WeatherRow {
        ts,
        temp: num(1, "temp")?,
        wind: num(2, "wind")?,
        fog: flag(3, "fog")?,
        rain: flag(4, "rain")?,
        thunder: flag(5, "thunder")?,
    })
}

pub fn write_weather(path: &Path, rows: &[WeatherRow]) -> Result<(), IngestError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", WEATHER_HEADER.join(","))?;
    for w in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            format_timestamp(w.ts),
            w.temp,
            w.wind,
            w.fog as u8,
            w.rain as u8,
            w.thunder as u8
        )?;
    }
    out.flush()?;
    Ok(())
}

/// One ISO-8601 date per line; blank lines and `#` comments are skipped.
pub fn parse_holidays(path: &Path) -> Result<Vec<NaiveDate>, IngestError> {
    let text = fs::read_to_string(path)?;
    let mut dates = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match NaiveDate::parse_from_str(line, "%Y-%m-%d") {
            Ok(d) => dates.push(d),
            Err(_) => bad.push(RowError {
                line: i + 1,
                reason: format!("bad date `{line}`"),
            }),
        }
    }
    if let Some(first) = bad.first().cloned() {
        return Err(IngestError::BadRows { count: bad.len(), first, rows: bad });
    }
    Ok(dates)
}

pub fn write_holidays(path: &Path, dates: &[NaiveDate]) -> Result<(), IngestError> {
    let text: String = dates.iter().map(|d| format!("{}\n", d.format("%Y-%m-%d"))).collect();
    fs::write(path, text)?;
    Ok(())
}

#[derive(Clone, Copy)]
struct HourWeather {
    temp: f64,
    wind: f64,
    fog: bool,
    rain: bool,
    thunder: bool,
}

/// Builds the hourly external-feature table over `range`.
///
/// Several observations in one hour are averaged (flags averaged, then
/// thresholded at 0.5). Empty hours take the linear interpolation of the
/// nearest observed hours on either side, with flags copied from the nearer
/// side (earlier on ties); leading and trailing gaps copy the nearest hour.
pub fn build_feature_table(
    weather: &[WeatherRow],
    holidays: &[NaiveDate],
    range: HourRange,
) -> Result<FeatureTable, IngestError> {
    if range.is_empty() {
        return Err(IngestError::Range("empty feature range".into()));
    }
    let n = range.len();
    // (count, temp sum, wind sum, fog sum, rain sum, thunder sum)
    let mut acc = vec![(0usize, 0.0, 0.0, 0.0, 0.0, 0.0); n];
    for w in weather {
        if !w.temp.is_finite() || !w.wind.is_finite() {
            return Err(IngestError::Format {
                path: "weather".into(),
                reason: format!("non-finite value at {}", format_timestamp(w.ts)),
            });
        }
        let hour = w.ts.div_euclid(3600);
        if !range.contains(hour) {
            continue;
        }
        let a = &mut acc[(hour - range.start) as usize];
        a.0 += 1;
        a.1 += w.temp;
        a.2 += w.wind;
        a.3 += w.fog as u8 as f64;
        a.4 += w.rain as u8 as f64;
        a.5 += w.thunder as u8 as f64;
    }
    let observed: Vec<Option<HourWeather>> = acc
        .iter()
        .map(|&(c, t, w, f, r, th)| {
            (c > 0).then(|| {
                let c = c as f64;
                HourWeather {
                    temp: t / c,
                    wind: w / c,
                    fog: f / c >= 0.5,
                    rain: r / c >= 0.5,
                    thunder: th / c >= 0.5,
                }
            })
        })
        .collect();
    let known: Vec<usize> = (0..n).filter(|&i| observed[i].is_some()).collect();
    if known.is_empty() {
        return Err(IngestError::NoWeather);
    }

    let mut filled = Vec::with_capacity(n);
    let mut next_pos = 0usize;
    for i in 0..n {
        while next_pos < known.len() && known[next_pos] < i {
            next_pos += 1;
        }
        if let Some(w) = observed[i] {
            filled.push(w);
            continue;
        }
        let prev = next_pos.checked_sub(1).map(|p| known[p]);
        let next = known.get(next_pos).copied();
        let w = match (prev, next) {
            (Some(p), Some(q)) => {
                let a = observed[p].unwrap();
                let b = observed[q].unwrap();
                let frac = (i - p) as f64 / (q - p) as f64;
                let near = if i - p <= q - i { a } else { b };
                HourWeather {
                    temp: a.temp + (b.temp - a.temp) * frac,
                    wind: a.wind + (b.wind - a.wind) * frac,
                    ..near
                }
            }
            (Some(p), None) => observed[p].unwrap(),
            (None, Some(q)) => observed[q].unwrap(),
            (None, None) => unreachable!("known is non-empty"),
        };
        filled.push(w);
    }

    let (temp_mean, temp_std) = mean_std(filled.iter().map(|w| w.temp));
    let (wind_mean, wind_std) = mean_std(filled.iter().map(|w| w.wind));
    let holiday_set: BTreeSet<NaiveDate> = holidays.iter().copied().collect();

    let mut values = Vec::with_capacity(n * FEATURE_WIDTH);
    for (i, w) in filled.iter().enumerate() {
        let hour = range.start + i as i64;
        let mut row = [0.0; FEATURE_WIDTH];
        row[0] = zscore(w.temp, temp_mean, temp_std);
        row[1] = zscore(w.wind, wind_mean, wind_std);
        row[2] = w.fog as u8 as f64;
        row[3] = w.rain as u8 as f64;
        row[4] = w.thunder as u8 as f64;
        row[5] = holiday_set.contains(&epoch_hour_to_date(hour)) as u8 as f64;
        fill_time_features(&mut row, hour);
        values.extend_from_slice(&row);
    }
    Ok(FeatureTable {
        start_hour: range.start,
        values,
        temp_mean,
        temp_std,
        wind_mean,
        wind_std,
    })
}

fn mean_std(it: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = it.clone().count() as f64;
    let mean = it.clone().sum::<f64>() / n;
    let var = it.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn zscore(v: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (v - mean) / std
    } else {
        0.0
    }
}

/// Writes the table as CSV with a header; the z-scoring statistics go into
/// leading `#` comment lines.
pub fn write_feature_table(path: &Path, table: &FeatureTable) -> Result<(), IngestError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(
        out,
        "# temp_mean={} temp_std={} wind_mean={} wind_std={}",
        table.temp_mean, table.temp_std, table.wind_mean, table.wind_std
    )?;
    writeln!(out, "hour,{}", FEATURE_NAMES.join(","))?;
    for t in 0..table.len() {
        let row: Vec<String> = table.row(t).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{},{}", table.start_hour + t as i64, row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a table written by [`write_feature_table`]. Hours must be
/// consecutive.
pub fn read_feature_table(path: &Path) -> Result<FeatureTable, IngestError> {
    let origin = path.display().to_string();
    let err = |reason: String| IngestError::Format { path: origin.clone(), reason };
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, stats_line) = lines.next().ok_or_else(|| err("empty file".into()))?;
    let mut stats = [0.0f64; 4];
    let keys = ["temp_mean", "temp_std", "wind_mean", "wind_std"];
    let body = stats_line
        .strip_prefix('#')
        .ok_or_else(|| err("line 1: missing statistics comment".into()))?;
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| err(format!("line 1: bad token `{tok}`")))?;
        let i = keys.iter().position(|&x| x == k).ok_or_else(|| err(format!("line 1: unknown key `{k}`")))?;
        stats[i] = v.parse().map_err(|_| err(format!("line 1: bad value `{v}`")))?;
    }
    let header = format!("hour,{}", FEATURE_NAMES.join(","));
    match lines.next() {
        Some((_, h)) if h == header => {}
        _ => return Err(err("line 2: unexpected header".into())),
    }
    let mut start_hour = None;
    let mut values = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let hour: i64 = fields
            .next()
            .and_then(|h| h.parse().ok())
            .ok_or_else(|| err(format!("line {}: bad hour", i + 1)))?;
        let expected = start_hour.map(|s: i64| s + (values.len() / FEATURE_WIDTH) as i64);
        if expected.is_some_and(|e| e != hour) {
            return Err(err(format!("line {}: hour {hour} breaks the consecutive run", i + 1)));
        }
        start_hour.get_or_insert(hour);
        let before = values.len();
        for f in fields {
            let v: f64 = f.parse().map_err(|_| err(format!("line {}: bad value `{f}`", i + 1)))?;
            values.push(v);
        }
        if values.len() - before != FEATURE_WIDTH {
            return Err(err(format!("line {}: expected {FEATURE_WIDTH} features", i + 1)));
        }
    }
    let start_hour = start_hour.ok_or_else(|| err("no rows".into()))?;
    Ok(FeatureTable {
        start_hour,
        values,
        temp_mean: stats[0],
        temp_std: stats[1],
        wind_mean: stats[2],
        wind_std: stats[3],
    })
}
