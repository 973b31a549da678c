//! Sample assembly and the two-phase ADAM training protocol.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Batch, Lags, Model, Mode, BRANCH_NAMES};
use super::NnetError;
use crate::grid::{CrimeCube, CubeState};
use crate::ingest::FeatureTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs_main: usize,
    pub epochs_finetune: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            epochs_main: 200,
            epochs_finetune: 50,
            validation_fraction: 0.2,
            batch_size: 32,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(NnetError::Config("validation_fraction must be in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(NnetError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnetError::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(NnetError::Config("l2 must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Frames in the network's input domain plus the aligned feature rows.
/// Sample `t` targets frame `t` from frames `t - lag` and features `t`.
#[derive(Debug, Clone)]
pub struct Dataset {
    frames: Vec<f64>,
    hours: usize,
    height: usize,
    width: usize,
    features: Vec<f64>,
    feature_rows: usize,
    ext_dim: usize,
    lags: Lags,
}

impl Dataset {
    /// `features` may extend past the frames (forecast hours).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        frames: Vec<f64>,
        hours: usize,
        height: usize,
        width: usize,
        features: Vec<f64>,
        ext_dim: usize,
        lags: Lags,
    ) -> Result<Self, NnetError> {
        lags.validate()?;
        if frames.len() != hours * height * width {
            return Err(NnetError::Shape(format!(
                "{} frame values for {hours} x {height} x {width}",
                frames.len()
            )));
        }
        let feature_rows = if ext_dim == 0 { usize::MAX } else { features.len() / ext_dim };
        if ext_dim > 0 && features.len() % ext_dim != 0 {
            return Err(NnetError::Shape("feature buffer not a whole number of rows".into()));
        }
        Ok(Self { frames, hours, height, width, features, feature_rows, ext_dim, lags })
    }

    /// Builds from a scaled cube and a feature table covering the same
    /// start hour. Pass `ext_dim = 0` to ignore features.
    pub fn from_cube(
        cube: &CrimeCube,
        features: Option<&FeatureTable>,
        lags: Lags,
    ) -> Result<Self, NnetError> {
        if cube.state != CubeState::Scaled {
            return Err(NnetError::Input(format!(
                "network input must be scaled, cube is {}",
                cube.state
            )));
        }
        let (feat, ext_dim) = match features {
            None => (Vec::new(), 0),
            Some(ft) => {
                if ft.start_hour != cube.start_hour {
                    return Err(NnetError::Input(format!(
                        "feature table starts at hour {}, cube at {}",
                        ft.start_hour, cube.start_hour
                    )));
                }
                let width = ft.row(0).len();
                (
                    (0..ft.len()).flat_map(|i| ft.row(i).to_vec()).collect(),
                    width,
                )
            }
        };
        Self::from_parts(cube.values.clone(), cube.hours, cube.rows, cube.cols, feat, ext_dim, lags)
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn ext_dim(&self) -> usize {
        self.ext_dim
    }

    pub fn lags(&self) -> &Lags {
        &self.lags
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let p = self.plane();
        &self.frames[t * p..(t + 1) * p]
    }

    /// Targets with a full lag history and a known frame.
    pub fn targets(&self) -> std::ops::Range<usize> {
        self.lags.max().min(self.hours)..self.hours.min(self.feature_rows)
    }

    /// Assembles samples for target hours `ts`; a target at or past the
    /// last frame gets no target values.
    pub fn batch(&self, ts: &[usize]) -> Result<Batch, NnetError> {
        let n = ts.len();
        let p = self.plane();
        let mut inputs: [Vec<f64>; 3] = Default::default();
        for (bi, lags) in self.lags.sets().iter().enumerate() {
            let buf = &mut inputs[bi];
            buf.reserve(lags.len() * n * p);
            for &lag in lags.iter() {
                for &t in ts {
                    if t < lag || t - lag >= self.hours {
                        return Err(NnetError::Input(format!(
                            "target hour {t} lacks {} lag {lag} (have {} frames)",
                            BRANCH_NAMES[bi], self.hours
                        )));
                    }
                    buf.extend_from_slice(self.frame(t - lag));
                }
            }
        }
        let mut ext = Vec::with_capacity(n * self.ext_dim);
        if self.ext_dim > 0 {
            for &t in ts {
                if t >= self.feature_rows {
                    return Err(NnetError::Input(format!("no feature row for hour {t}")));
                }
                ext.extend_from_slice(&self.features[t * self.ext_dim..(t + 1) * self.ext_dim]);
            }
        }
        let target = if ts.iter().all(|&t| t < self.hours) {
            let mut tv = Vec::with_capacity(n * p);
            for &t in ts {
                tv.extend_from_slice(self.frame(t));
            }
            Some(tv)
        } else {
            None
        };
        Ok(Batch { n, inputs, ext, target })
    }
}

/// Predicts the (scaled) frame for hour `t` from the preceding frames.
pub fn predict_next(model: &Model, data: &Dataset, t: usize) -> Result<Vec<f64>, NnetError> {
    model.predict(&data.batch(&[t])?)
}

/// Per-epoch losses of a [`train`] run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub finetune_loss: Vec<f64>,
}

/// Shuffled minibatches for one epoch; the order depends only on
/// `(seed, phase, epoch)`.
pub fn epoch_batches(samples: &[usize], batch_size: usize, seed: u64, phase: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order = samples.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((phase << 32) | epoch);
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// One ADAM pass over `samples`; returns the mean minibatch loss.
pub fn train_epoch(
    model: &mut Model,
    data: &Dataset,
    samples: &[usize],
    tc: &TrainConfig,
    phase: u64,
) -> Result<f64, NnetError> {
    let batches = epoch_batches(samples, tc.batch_size, tc.seed, phase, model.epoch);
    let mut total = 0.0;
    for ts in &batches {
        let batch = data.batch(ts)?;
        total += model.loss_and_grad_update_stats(&batch, tc.l2)?;
        model.adam.begin_step();
        for (i, p) in model.params.iter_mut().enumerate() {
            model.adam.update(i, &mut p.value, &p.grad, tc.learning_rate);
        }
    }
    model.epoch += 1;
    Ok(total / batches.len().max(1) as f64)
}

/// Eval-mode MSE over `samples`, evaluated in chunks of `chunk`.
pub fn evaluate_mse(model: &Model, data: &Dataset, samples: &[usize], chunk: usize) -> Result<f64, NnetError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ts in samples.chunks(chunk.max(1)) {
        let batch = data.batch(ts)?;
        let n = batch.target.as_ref().map_or(0, Vec::len);
        sum += model.mse(&batch, Mode::Eval)? * n as f64;
        count += n;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Splits chronologically ordered samples: the last `fraction` validates.
pub fn chronological_split(samples: &[usize], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n_val = ((samples.len() as f64) * fraction).round() as usize;
    let cut = samples.len() - n_val.min(samples.len());
    (samples[..cut].to_vec(), samples[cut..].to_vec())
}

/// Phase 1: `epochs_main` epochs on the training split, keeping the
/// parameters with the best validation MSE. Phase 2: `epochs_finetune`
/// epochs on training plus validation from those parameters.
pub fn train(model: &mut Model, data: &Dataset, samples: &[usize], tc: &TrainConfig) -> Result<TrainHistory, NnetError> {
    tc.validate()?;
    if samples.len() < tc.batch_size {
        return Err(NnetError::Data(format!(
            "{} samples is less than one minibatch of {}",
            samples.len(),
            tc.batch_size
        )));
    }
    let (train_s, val_s) = chronological_split(samples, tc.validation_fraction);
    if train_s.is_empty() {
        return Err(NnetError::Data("no training samples after the validation split".into()));
    }
    let mut hist = TrainHistory::default();
    let mut best: Option<(f64, _)> = None;
    for epoch in 0..tc.epochs_main {
        let loss = train_epoch(model, data, &train_s, tc, 1)?;
        hist.train_loss.push(loss);
        if !val_s.is_empty() {
            let v = evaluate_mse(model, data, &val_s, tc.batch_size.max(64))?;
            hist.val_mse.push(v);
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, model.snapshot()));
                hist.best_epoch = Some(epoch);
            }
        }
        log::debug!("epoch {epoch}: loss {loss:.6}");
    }
    if let Some((_, snap)) = &best {
        model.restore(snap);
    }
    for _ in 0..tc.epochs_finetune {
        let loss = train_epoch(model, data, samples, tc, 2)?;
        hist.finetune_loss.push(loss);
    }
    Ok(hist)
}
