//! Central finite-difference check of the composed model's gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Batch, Model, ModelConfig, Mode};
use super::NnetError;

/// Denominator floor for the relative error, so that coordinates whose
/// true gradient is ~0 are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates skipped because a ReLU changed state inside `[-eps, eps]`.
    pub kinks: usize,
    pub max_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel: f64,
    pub tensors: Vec<TensorCheck>,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(REL_FLOOR)
}

/// A batch of `n` samples with inputs, features and targets drawn
/// uniformly from `(-1, 1)`; targets are shrunk to `(-0.9, 0.9)` so they stay
/// inside the tanh range.
pub fn random_batch(config: &ModelConfig, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = config.plane();
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let inputs = [
        draw(config.lags.closeness.len() * n * plane),
        draw(config.lags.period.len() * n * plane),
        draw(config.lags.trend.len() * n * plane),
    ];
    let ext = draw(config.ext_dim * n);
    let target = draw(n * plane).into_iter().map(|v| 0.9 * v).collect();
    Batch { n, inputs, ext, target: Some(target) }
}

/// Compares analytic gradients of the training loss (MSE plus `l2`
/// penalty) with central differences. Tensors larger than `per_tensor`
/// are subsampled to `per_tensor` coordinates, chosen from `seed`.
pub fn grad_check(
    model: &mut Model,
    batch: &Batch,
    eps: f64,
    l2: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport, NnetError> {
    model.loss_and_grad(batch, l2)?;
    let analytic: Vec<Vec<f64>> = model.params.iter().map(|p| p.grad.clone()).collect();
    let target = batch.target.clone().ok_or_else(|| NnetError::Input("batch has no target".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let eval = |m: &Model| -> Result<(f64, Vec<bool>), NnetError> {
        let cache = m.forward(batch, Mode::Train)?;
        let mut loss = super::model::mse(&cache.output, &target);
        if l2 > 0.0 {
            loss += l2 * m.l2_norm2();
        }
        Ok((loss, cache.relu_pattern()))
    };

    let mut report = GradCheckReport { max_rel: 0.0, tensors: Vec::new() };
    for pi in 0..model.params.len() {
        let len = model.params[pi].value.len();
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        let mut tc = TensorCheck { name: model.params[pi].name.clone(), checked: 0, kinks: 0, max_rel: 0.0 };
        for &ci in &coords {
            let orig = model.params[pi].value[ci];
            model.params[pi].value[ci] = orig + eps;
            let (lp, pat_p) = eval(model)?;
            model.params[pi].value[ci] = orig - eps;
            let (lm, pat_m) = eval(model)?;
            model.params[pi].value[ci] = orig;
            if pat_p != pat_m {
                tc.kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            let rel = relative_error(analytic[pi][ci], numeric);
            tc.max_rel = tc.max_rel.max(rel);
            tc.checked += 1;
        }
        report.max_rel = report.max_rel.max(tc.max_rel);
        report.tensors.push(tc);
    }
    Ok(report)
}
