//! Shadow-weight training of a fully ternary model: gradients are taken at
//! the ternary weights, applied to floating-point shadows, and the shadows
//! are re-projected after every minibatch.

use super::{TernaryError, TernaryTensor};
use crate::nnet::{
    chronological_split, epoch_batches, evaluate_mse, Dataset, Model, NnetError, TrainConfig,
};

/// Floating-point shadows `W~` of the ternarized parameters and their
/// projections `W = proj(W~)`. Every other parameter of the model (biases,
/// batch-norm, fusion) is trained directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowState {
    /// `(parameter index, shadow values)`.
    pub shadows: Vec<(usize, Vec<f64>)>,
    pub ternary: Vec<TernaryTensor>,
}

fn project_err(e: TernaryError) -> NnetError {
    NnetError::NonFinite(format!("ternary projection: {e}"))
}

impl ShadowState {
    /// Takes the model's convolution and dense weights as shadows and
    /// replaces them in the model by their projections.
    pub fn from_model(model: &mut Model) -> Result<Self, NnetError> {
        let shadows: Vec<(usize, Vec<f64>)> = model
            .params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind.is_weight())
            .map(|(i, p)| (i, p.value.clone()))
            .collect();
        let mut state = Self { shadows, ternary: Vec::new() };
        state.reproject(model)?;
        Ok(state)
    }

    /// `W_i = proj(W~_i)` for every layer, written into the model.
    pub fn reproject(&mut self, model: &mut Model) -> Result<(), NnetError> {
        self.ternary.clear();
        for (idx, shadow) in &self.shadows {
            let p = &mut model.params[*idx];
            let t = TernaryTensor::project(shadow, &p.shape).map_err(project_err)?;
            if t.k == 0 {
                log::warn!("{}: all-zero shadow, ternary weights set to zero", p.name);
            }
            p.value = t.values();
            self.ternary.push(t);
        }
        Ok(())
    }

    pub fn is_ternary(&self, param: usize) -> bool {
        self.shadows.iter().any(|(i, _)| *i == param)
    }

    /// True when every stored projection equals a fresh projection of its
    /// shadow.
    pub fn relation_holds(&self) -> bool {
        self.shadows.iter().zip(&self.ternary).all(|((_, s), t)| {
            TernaryTensor::project(s, &t.shape).map(|p| p == *t).unwrap_or(false)
        })
    }

    /// The model as stored in a ternary checkpoint: scales and float
    /// parameters at 32-bit precision.
    pub fn export_model(&self, model: &Model) -> Model {
        let mut out = model.clone();
        out.round_to_f32();
        for ((idx, _), t) in self.shadows.iter().zip(&self.ternary) {
            let alpha = f64::from(t.alpha as f32);
            out.params[*idx].value = t.trits.iter().map(|&v| alpha * f64::from(v)).collect();
        }
        out
    }
}

/// One epoch over `samples`. Per minibatch: gradient at the current
/// ternary weights, ADAM step on the shadows, re-projection, then a second
/// gradient at the new ternary weights for the ADAM step on the remaining
/// parameters. Batch-norm running statistics are taken from the second
/// pass. Returns the mean first-pass loss.
pub fn train_ternary_epoch(
    state: &mut ShadowState,
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
        model.adam.begin_step();
        total += model.loss_and_grad(&batch, tc.l2)?;
        for (idx, shadow) in &mut state.shadows {
            model.adam.update(*idx, shadow, &model.params[*idx].grad, tc.learning_rate);
        }
        state.reproject(model)?;
        model.loss_and_grad_update_stats(&batch, tc.l2)?;
        for i in 0..model.params.len() {
            if state.is_ternary(i) {
                continue;
            }
            let p = &mut model.params[i];
            model.adam.update(i, &mut p.value, &p.grad, tc.learning_rate);
        }
    }
    model.epoch += 1;
    Ok(total / batches.len().max(1) as f64)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TernaryHistory {
    pub train_loss: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub finetune_loss: Vec<f64>,
}

/// The float protocol with ternary epochs: `epochs_main` on the training
/// split keeping the best validation state, then `epochs_finetune` on all
/// samples. Starts from the model's current weights.
pub fn train_ternary(
    model: &mut Model,
    data: &Dataset,
    samples: &[usize],
    tc: &TrainConfig,
) -> Result<(ShadowState, TernaryHistory), NnetError> {
    tc.validate()?;
    if samples.len() < tc.batch_size {
        return Err(NnetError::Data(format!(
            "{} samples is less than one minibatch of {}",
            samples.len(),
            tc.batch_size
        )));
    }
    let (train_s, val_s) = chronological_split(samples, tc.validation_fraction);
    let mut state = ShadowState::from_model(model)?;
    let mut hist = TernaryHistory::default();
    let mut best: Option<(f64, ShadowState, Model)> = None;
    for epoch in 0..tc.epochs_main {
        let loss = train_ternary_epoch(&mut state, model, data, &train_s, tc, 3)?;
        hist.train_loss.push(loss);
        if !val_s.is_empty() {
            let v = evaluate_mse(model, data, &val_s, tc.batch_size.max(64))?;
            hist.val_mse.push(v);
            if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                best = Some((v, state.clone(), model.clone()));
                hist.best_epoch = Some(epoch);
            }
        }
        log::debug!("ternary epoch {epoch}: loss {loss:.6}");
    }
    if let Some((_, s, m)) = best {
        let (adam, epoch) = (model.adam.clone(), model.epoch);
        *model = m;
        model.adam = adam;
        model.epoch = epoch;
        state = s;
    }
    for _ in 0..tc.epochs_finetune {
        let loss = train_ternary_epoch(&mut state, model, data, samples, tc, 4)?;
        hist.finetune_loss.push(loss);
    }
    Ok((state, hist))
}
