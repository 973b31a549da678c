//! Historical average per (cell, hour of day).

use super::BaselineError;
use crate::grid::CrimeCube;
use crate::signal::DAY_HOURS;

/// Training means indexed by cell (row-major) and UTC hour of day.
#[derive(Debug, Clone, PartialEq)]
pub struct HaTable {
    pub rows: usize,
    pub cols: usize,
    pub means: Vec<[f64; DAY_HOURS]>,
}

fn hour_of_day(epoch_hour: i64) -> usize {
    epoch_hour.rem_euclid(DAY_HOURS as i64) as usize
}

pub fn ha_fit(train: &CrimeCube) -> Result<HaTable, BaselineError> {
    if train.hours == 0 {
        return Err(BaselineError::Empty);
    }
    if train.hours < DAY_HOURS {
        return Err(BaselineError::TooShort { need: DAY_HOURS, got: train.hours });
    }
    let cells = train.rows * train.cols;
    let mut sums = vec![[0.0; DAY_HOURS]; cells];
    let mut counts = [0usize; DAY_HOURS];
    for t in 0..train.hours {
        let h = hour_of_day(train.start_hour + t as i64);
        counts[h] += 1;
        for (ci, &v) in train.frame(t).iter().enumerate() {
            sums[ci][h] += v;
        }
    }
    for s in &mut sums {
        for h in 0..DAY_HOURS {
            s[h] /= counts[h] as f64;
        }
    }
    Ok(HaTable { rows: train.rows, cols: train.cols, means: sums })
}

/// Forecast frame (row-major) for an epoch hour.
pub fn ha_forecast(table: &HaTable, epoch_hour: i64) -> Vec<f64> {
    let h = hour_of_day(epoch_hour);
    table.means.iter().map(|m| m[h]).collect()
}

/// Forecasts for `hours` consecutive hours from `start_hour`, in the state
/// of the training cube.
pub fn ha_forecast_cube(table: &HaTable, train: &CrimeCube, start_hour: i64, hours: usize) -> CrimeCube {
    let mut out = CrimeCube::zeros(start_hour, hours, table.rows, table.cols, train.state);
    out.scale_meta = train.scale_meta.clone();
    for t in 0..hours {
        out.frame_mut(t).copy_from_slice(&ha_forecast(table, start_hour + t as i64));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CubeState;

    #[test]
    fn mean_per_hour_of_day() {
        let mut c = CrimeCube::zeros(0, 48, 1, 2, CubeState::Raw);
        c.set(13, 0, 1, 2.0);
        c.set(37, 0, 1, 4.0);
        let t = ha_fit(&c).unwrap();
        assert_eq!(ha_forecast(&t, 24 * 10 + 13), vec![0.0, 3.0]);
        assert_eq!(ha_forecast(&t, 13), ha_forecast(&t, 24 * 3 + 13));
        assert_eq!(ha_forecast(&t, 14), vec![0.0, 0.0]);
    }

    #[test]
    fn offset_start_hour() {
        // Cube starting at hour 5 of the day.
        let mut c = CrimeCube::zeros(5, 24, 1, 1, CubeState::Raw);
        c.set(0, 0, 0, 7.0);
        let t = ha_fit(&c).unwrap();
        assert_eq!(t.means[0][5], 7.0);
        let f = ha_forecast_cube(&t, &c, 24, 24);
        assert_eq!(f.get(5, 0, 0), 7.0);
        assert_eq!(f.get(4, 0, 0), 0.0);
    }

    #[test]
    fn rejects_short_training() {
        let c = CrimeCube::zeros(0, 23, 1, 1, CubeState::Raw);
        assert!(matches!(ha_fit(&c), Err(BaselineError::TooShort { .. })));
        let c = CrimeCube::zeros(0, 0, 1, 1, CubeState::Raw);
        assert!(matches!(ha_fit(&c), Err(BaselineError::Empty)));
    }
}
