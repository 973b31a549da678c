//! Spatial lattice and hourly count cubes.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EventRecord, HourRange};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cube format error in {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rectangular lat/lon window partitioned into `rows x cols` cells.
///
/// Rows index latitude south to north, columns index longitude west to east.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub rows: usize,
    pub cols: usize,
}

const EARTH_RADIUS_KM: f64 = 6371.0088;

impl GridSpec {
    pub fn new(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
        rows: usize,
        cols: usize,
    ) -> Result<Self, GridError> {
        let spec = Self {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            rows,
            cols,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(GridError::InvalidSpec("non-finite bounds".into()));
        }
        if self.lat_min >= self.lat_max {
            return Err(GridError::InvalidSpec(format!(
                "lat_min {} must be below lat_max {}",
                self.lat_min, self.lat_max
            )));
        }
        if self.lon_min >= self.lon_max {
            return Err(GridError::InvalidSpec(format!(
                "lon_min {} must be below lon_max {}",
                self.lon_min, self.lon_max
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(GridError::InvalidSpec("rows and cols must be >= 1".into()));
        }
        Ok(())
    }

    pub fn cell_height_deg(&self) -> f64 {
        (self.lat_max - self.lat_min) / self.rows as f64
    }

    pub fn cell_width_deg(&self) -> f64 {
        (self.lon_max - self.lon_min) / self.cols as f64
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Mean cell area in km² on a spherical earth.
    pub fn mean_cell_area_km2(&self) -> f64 {
        let dlon = (self.lon_max - self.lon_min).to_radians();
        let band = self.lat_max.to_radians().sin() - self.lat_min.to_radians().sin();
        EARTH_RADIUS_KM * EARTH_RADIUS_KM * dlon * band / self.n_cells() as f64
    }

    /// Cell containing `(lat, lon)`, or `None` outside the window.
    ///
    /// Cells are half-open on their lower edges; the window's max edges are
    /// closed so the partition is exhaustive.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        if !(lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max)
        {
            return None;
        }
        let row = axis_index(lat, self.lat_min, self.lat_max, self.rows);
        let col = axis_index(lon, self.lon_min, self.lon_max, self.cols);
        Some((row, col))
    }

    /// Latitude/longitude box `(lat_lo, lat_hi, lon_lo, lon_hi)` of a cell.
    pub fn cell_bounds(&self, row: usize, col: usize) -> (f64, f64, f64, f64) {
        let lat_lo = self.lat_min + self.cell_height_deg() * row as f64;
        let lat_hi = if row + 1 == self.rows {
            self.lat_max
        } else {
            self.lat_min + self.cell_height_deg() * (row + 1) as f64
        };
        let lon_lo = self.lon_min + self.cell_width_deg() * col as f64;
        let lon_hi = if col + 1 == self.cols {
            self.lon_max
        } else {
            self.lon_min + self.cell_width_deg() * (col + 1) as f64
        };
        (lat_lo, lat_hi, lon_lo, lon_hi)
    }
}

fn axis_index(v: f64, lo: f64, hi: f64, n: usize) -> usize {
    let idx = ((v - lo) / (hi - lo) * n as f64).floor();
    if idx < 0.0 {
        0
    } else {
        (idx as usize).min(n - 1)
    }
}

/// The 16x16 Los Angeles study window.
pub fn default_la_gridspec() -> GridSpec {
    GridSpec {
        lat_min: 33.6927,
        lat_max: 34.3837,
        lon_min: -118.7051,
        lon_max: -118.1157,
        rows: 16,
        cols: 16,
    }
}

/// Transform state of a [`CrimeCube`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CubeState {
    Raw,
    Cumulative,
    UpsampledRaw,
    UpsampledCumulative,
    Scaled,
}

impl CubeState {
    pub fn as_str(&self) -> &'static str {
        match self {
            CubeState::Raw => "raw",
            CubeState::Cumulative => "cumulative",
            CubeState::UpsampledRaw => "upsampled-raw",
            CubeState::UpsampledCumulative => "upsampled-cumulative",
            CubeState::Scaled => "scaled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "raw" => CubeState::Raw,
            "cumulative" => CubeState::Cumulative,
            "upsampled-raw" => CubeState::UpsampledRaw,
            "upsampled-cumulative" => CubeState::UpsampledCumulative,
            "scaled" => CubeState::Scaled,
            _ => return None,
        })
    }

    pub fn is_upsampled(&self) -> bool {
        matches!(self, CubeState::UpsampledRaw | CubeState::UpsampledCumulative)
    }
}

impl fmt::Display for CubeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Affine scaling recorded on a scaled cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMeta {
    pub min: f64,
    pub max: f64,
    /// State the cube had before scaling; restored by `unscale`.
    pub source: CubeState,
}

/// Hourly `T x H x W` tensor of per-cell values.
#[derive(Debug, Clone, PartialEq)]
pub struct CrimeCube {
    pub start_hour: i64,
    pub hours: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub state: CubeState,
    pub scale_meta: Option<ScaleMeta>,
}

impl CrimeCube {
    pub fn zeros(start_hour: i64, hours: usize, rows: usize, cols: usize, state: CubeState) -> Self {
        Self {
            start_hour,
            hours,
            rows,
            cols,
            values: vec![0.0; hours * rows * cols],
            state,
            scale_meta: None,
        }
    }

    pub fn from_values(
        start_hour: i64,
        hours: usize,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        state: CubeState,
    ) -> Result<Self, GridError> {
        if values.len() != hours * rows * cols {
            return Err(GridError::Shape(format!(
                "{} values for a {hours}x{rows}x{cols} cube",
                values.len()
            )));
        }
        Ok(Self {
            start_hour,
            hours,
            rows,
            cols,
            values,
            state,
            scale_meta: None,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.values[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, row: usize, col: usize) -> f64 {
        self.values[(t * self.rows + row) * self.cols + col]
    }

    pub fn set(&mut self, t: usize, row: usize, col: usize, v: f64) {
        self.values[(t * self.rows + row) * self.cols + col] = v;
    }

    /// Per-cell time series at `(row, col)`.
    pub fn cell_series(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.hours).map(|t| self.get(t, row, col)).collect()
    }

    /// Sub-cube covering frames `[from, to)`.
    pub fn slice_hours(&self, from: usize, to: usize) -> CrimeCube {
        let n = self.frame_len();
        CrimeCube {
            start_hour: self.start_hour + from as i64,
            hours: to - from,
            rows: self.rows,
            cols: self.cols,
            values: self.values[from * n..to * n].to_vec(),
            state: self.state,
            scale_meta: self.scale_meta,
        }
    }

    pub fn same_shape(&self, other: &CrimeCube) -> bool {
        self.hours == other.hours && self.rows == other.rows && self.cols == other.cols
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Writes the cube as one CSV per frame plus a `manifest.txt`.
    ///
    /// The manifest's first line is `start_hour,rows,cols,T,state`; scaled
    /// cubes carry a second `scale,min,max,source` line.
    pub fn write_dir(&self, dir: &Path) -> Result<(), GridError> {
        fs::create_dir_all(dir)?;
        let mut manifest = format!(
            "{},{},{},{},{}\n",
            self.start_hour, self.rows, self.cols, self.hours, self.state
        );
        if let Some(meta) = &self.scale_meta {
            manifest.push_str(&format!("scale,{},{},{}\n", meta.min, meta.max, meta.source));
        }
        fs::write(dir.join("manifest.txt"), manifest)?;
        for t in 0..self.hours {
            let file = fs::File::create(dir.join(frame_file_name(t)))?;
            let mut out = BufWriter::new(file);
            let frame = self.frame(t);
            for row in frame.chunks(self.cols) {
                let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{}", line.join(","))?;
            }
            out.flush()?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<CrimeCube, GridError> {
        let manifest_path = dir.join("manifest.txt");
        let fmt_err = |reason: String| GridError::Format {
            path: manifest_path.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(&manifest_path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| fmt_err("empty manifest".into()))?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 5 {
            return Err(fmt_err(format!("expected 5 manifest fields, got {}", fields.len())));
        }
        let start_hour: i64 = fields[0].parse().map_err(|_| fmt_err("bad start_hour".into()))?;
        let rows: usize = fields[1].parse().map_err(|_| fmt_err("bad rows".into()))?;
        let cols: usize = fields[2].parse().map_err(|_| fmt_err("bad cols".into()))?;
        let hours: usize = fields[3].parse().map_err(|_| fmt_err("bad T".into()))?;
        let state = CubeState::parse(fields[4]).ok_or_else(|| fmt_err("bad state".into()))?;
        let mut scale_meta = None;
        if let Some(line) = lines.next() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 || f[0] != "scale" {
                return Err(fmt_err(format!("unexpected manifest line `{line}`")));
            }
            scale_meta = Some(ScaleMeta {
                min: f[1].parse().map_err(|_| fmt_err("bad scale min".into()))?,
                max: f[2].parse().map_err(|_| fmt_err("bad scale max".into()))?,
                source: CubeState::parse(f[3]).ok_or_else(|| fmt_err("bad scale source".into()))?,
            });
        }
        let mut values = Vec::with_capacity(hours * rows * cols);
        for t in 0..hours {
            let path = dir.join(frame_file_name(t));
            let frame_err = |reason: String| GridError::Format {
                path: path.display().to_string(),
                reason,
            };
            let reader = BufReader::new(fs::File::open(&path)?);
            let mut n_rows = 0;
            for line in reader.lines() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let before = values.len();
                for tok in line.split(',') {
                    let v: f64 = tok
                        .trim()
                        .parse()
                        .map_err(|_| frame_err(format!("bad value `{tok}`")))?;
                    values.push(v);
                }
                if values.len() - before != cols {
                    return Err(frame_err(format!("row {n_rows} has wrong width")));
                }
                n_rows += 1;
            }
            if n_rows != rows {
                return Err(frame_err(format!("expected {rows} rows, got {n_rows}")));
            }
        }
        let mut cube = CrimeCube::from_values(start_hour, hours, rows, cols, values, state)?;
        cube.scale_meta = scale_meta;
        Ok(cube)
    }
}

fn frame_file_name(t: usize) -> String {
    format!("frame_{t:05}.csv")
}

/// Counts of events that could not be binned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinReport {
    pub binned: usize,
    pub outside_region: usize,
    pub outside_range: usize,
}

impl BinReport {
    pub fn out_of_range(&self) -> usize {
        self.outside_region + self.outside_range
    }
}

/// Bins events by start hour and cell into a raw count cube over `range`.
pub fn bin_events(events: &[EventRecord], spec: &GridSpec, range: HourRange) -> (CrimeCube, BinReport) {
    let hours = range.len();
    let mut cube = CrimeCube::zeros(range.start, hours, spec.rows, spec.cols, CubeState::Raw);
    let mut report = BinReport::default();
    for ev in events {
        let Some((row, col)) = spec.cell_of(ev.lat, ev.lon) else {
            report.outside_region += 1;
            continue;
        };
        let hour = ev.start.div_euclid(3600);
        if !range.contains(hour) {
            report.outside_range += 1;
            continue;
        }
        let t = (hour - range.start) as usize;
        let idx = (t * spec.rows + row) * spec.cols + col;
        cube.values[idx] += 1.0;
        report.binned += 1;
    }
    (cube, report)
}
