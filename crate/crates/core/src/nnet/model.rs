//! ST-ResNet assembly: three branch stacks, parametric-matrix fusion, an
//! external-feature head and a tanh output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::ops::{self, BnCache, Dims};
use super::NnetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "conv3x3")]
    Conv3x3,
    #[serde(rename = "pointwise")]
    Pointwise,
}

impl Variant {
    pub fn kernel(self) -> usize {
        match self {
            Variant::Conv3x3 => 3,
            Variant::Pointwise => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Conv3x3 => "conv3x3",
            Variant::Pointwise => "pointwise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conv3x3" => Some(Variant::Conv3x3),
            "pointwise" => Some(Variant::Pointwise),
            _ => None,
        }
    }
}

pub const BRANCH_NAMES: [&str; 3] = ["closeness", "period", "trend"];

/// Hour offsets fed to each branch; frame `t - lag` is a channel of the
/// sample for target hour `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lags {
    pub closeness: Vec<usize>,
    pub period: Vec<usize>,
    pub trend: Vec<usize>,
}

impl Lags {
    pub fn full() -> Self {
        Self { closeness: vec![1, 2, 3], period: vec![24, 48, 72], trend: vec![168, 336, 504] }
    }

    pub fn sets(&self) -> [&[usize]; 3] {
        [&self.closeness, &self.period, &self.trend]
    }

    pub fn max(&self) -> usize {
        self.sets().iter().flat_map(|s| s.iter().copied()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        for (name, set) in BRANCH_NAMES.iter().zip(self.sets()) {
            if set.is_empty() {
                return Err(NnetError::Config(format!("{name} lag set is empty")));
            }
            if set.contains(&0) {
                return Err(NnetError::Config(format!("{name} lags must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub filters: usize,
    pub residual_units: usize,
    pub height: usize,
    pub width: usize,
    pub lags: Lags,
    /// External feature width; 0 drops the external head.
    pub ext_dim: usize,
    pub ext_hidden: usize,
    pub batch_norm: bool,
}

impl ModelConfig {
    /// Six residual units of 64 filters over a `height x width` frame.
    pub fn full(height: usize, width: usize, ext_dim: usize) -> Self {
        Self {
            variant: Variant::Conv3x3,
            filters: 64,
            residual_units: 6,
            height,
            width,
            lags: Lags::full(),
            ext_dim,
            ext_hidden: 10,
            batch_norm: false,
        }
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        if self.filters == 0 || self.residual_units == 0 {
            return Err(NnetError::Config("filters and residual_units must be >= 1".into()));
        }
        if self.height == 0 || self.width == 0 {
            return Err(NnetError::Config("empty frame".into()));
        }
        if self.ext_dim > 0 && self.ext_hidden == 0 {
            return Err(NnetError::Config("ext_hidden must be >= 1".into()));
        }
        self.lags.validate()
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    DenseWeight,
    Bias,
    Fusion,
    BnScale,
    BnShift,
}

impl ParamKind {
    /// Convolution and dense weights: the tensors that are ternarized and
    /// L2-penalized.
    pub fn is_weight(self) -> bool {
        matches!(self, ParamKind::ConvWeight | ParamKind::DenseWeight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Non-trainable state (batch-norm running statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct BnIdx {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct ConvIdx {
    w: usize,
    b: usize,
    c_in: usize,
    c_out: usize,
    bn: Option<BnIdx>,
}

#[derive(Debug, Clone)]
struct BranchIdx {
    input: ConvIdx,
    units: Vec<(ConvIdx, ConvIdx)>,
    output: ConvIdx,
}

#[derive(Debug, Clone)]
struct Layout {
    branches: Vec<BranchIdx>,
    fusion: [usize; 3],
    ext: Option<[usize; 4]>,
}

/// One forward sample batch. `inputs[b]` is `[lags_b, N, H, W]`, `ext` is
/// `[N, E]` and `target` (if any) `[N, H W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub n: usize,
    pub inputs: [Vec<f64>; 3],
    pub ext: Vec<f64>,
    pub target: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch normalization.
    Train,
    /// Running statistics.
    Eval,
}

struct ConvCache {
    input: Vec<f64>,
    dims: Dims,
    bn: Option<BnCache>,
}

struct BranchCache {
    input: ConvCache,
    units: Vec<(ConvCache, ConvCache)>,
    output: ConvCache,
    value: Vec<f64>,
}

struct ExtCache {
    e: Vec<f64>,
    hidden: Vec<f64>,
}

/// Intermediate values of a forward pass, kept for the backward pass.
pub struct ForwardCache {
    branches: Vec<BranchCache>,
    ext: Option<ExtCache>,
    n: usize,
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// Sign pattern of every ReLU output, used to detect kinks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for b in &self.branches {
            for (c1, c2) in &b.units {
                out.extend(c1.input.iter().map(|&v| v > 0.0));
                out.extend(c2.input.iter().map(|&v| v > 0.0));
            }
            out.extend(b.output.input.iter().map(|&v| v > 0.0));
        }
        if let Some(e) = &self.ext {
            out.extend(e.hidden.iter().map(|&v| v > 0.0));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Vec<Param>,
    pub buffers: Vec<Buffer>,
    pub adam: Adam,
    /// Completed training epochs, carried through checkpoints.
    pub epoch: u64,
    layout: Layout,
}

struct Builder {
    params: Vec<Param>,
    buffers: Vec<Buffer>,
}

impl Builder {
    fn param(&mut self, name: String, kind: ParamKind, shape: Vec<usize>, fill: f64) -> usize {
        let len = shape.iter().product();
        self.params.push(Param { name, kind, shape, value: vec![fill; len], grad: vec![0.0; len] });
        self.params.len() - 1
    }

    fn buffer(&mut self, name: String, len: usize, fill: f64) -> usize {
        self.buffers.push(Buffer { name, shape: vec![len], value: vec![fill; len] });
        self.buffers.len() - 1
    }

    fn conv(&mut self, prefix: &str, c_in: usize, c_out: usize, k: usize, bn: bool) -> ConvIdx {
        let w = self.param(format!("{prefix}.w"), ParamKind::ConvWeight, vec![c_out, c_in, k, k], 0.0);
        let b = self.param(format!("{prefix}.b"), ParamKind::Bias, vec![c_out], 0.0);
        let bn = bn.then(|| BnIdx {
            gamma: self.param(format!("{prefix}.bn.gamma"), ParamKind::BnScale, vec![c_out], 1.0),
            beta: self.param(format!("{prefix}.bn.beta"), ParamKind::BnShift, vec![c_out], 0.0),
            mean: self.buffer(format!("{prefix}.bn.mean"), c_out, 0.0),
            var: self.buffer(format!("{prefix}.bn.var"), c_out, 1.0),
        });
        ConvIdx { w, b, c_in, c_out, bn }
    }
}

fn glorot_bound(kind: ParamKind, shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match kind {
        ParamKind::ConvWeight => {
            let rf = shape[2] * shape[3];
            (shape[1] * rf, shape[0] * rf)
        }
        _ => (shape[1], shape[0]),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Builds and initializes a model: Glorot-uniform weights drawn from a
/// per-tensor stream of `seed`, zero biases, fusion matrices at 1/3.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model, NnetError> {
    config.validate()?;
    let k = config.variant.kernel();
    let f = config.filters;
    let bn = config.batch_norm;
    let mut b = Builder { params: Vec::new(), buffers: Vec::new() };
    let mut branches = Vec::new();
    for (name, lags) in BRANCH_NAMES.iter().zip(config.lags.sets()) {
        let input = b.conv(&format!("{name}.in"), lags.len(), f, k, bn);
        let units = (0..config.residual_units)
            .map(|u| {
                (
                    b.conv(&format!("{name}.unit{u}.conv1"), f, f, k, bn),
                    b.conv(&format!("{name}.unit{u}.conv2"), f, f, k, bn),
                )
            })
            .collect();
        let output = b.conv(&format!("{name}.out"), f, 1, k, false);
        branches.push(BranchIdx { input, units, output });
    }
    let hw = vec![config.height, config.width];
    let fusion = BRANCH_NAMES
        .map(|name| b.param(format!("fusion.{name}"), ParamKind::Fusion, hw.clone(), 1.0 / 3.0));
    let ext = (config.ext_dim > 0).then(|| {
        let (e, hid) = (config.ext_dim, config.ext_hidden);
        [
            b.param("ext.fc1.w".into(), ParamKind::DenseWeight, vec![hid, e], 0.0),
            b.param("ext.fc1.b".into(), ParamKind::Bias, vec![hid], 0.0),
            b.param("ext.fc2.w".into(), ParamKind::DenseWeight, vec![config.plane(), hid], 0.0),
            b.param("ext.fc2.b".into(), ParamKind::Bias, vec![config.plane()], 0.0),
        ]
    });

    for (i, p) in b.params.iter_mut().enumerate() {
        if p.kind.is_weight() {
            let bound = glorot_bound(p.kind, &p.shape);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for v in &mut p.value {
                *v = rng.gen_range(-bound..=bound);
            }
        }
    }
    let adam = Adam::new(&b.params.iter().map(|p| p.value.len()).collect::<Vec<_>>());
    Ok(Model {
        config: config.clone(),
        params: b.params,
        buffers: b.buffers,
        adam,
        epoch: 0,
        layout: Layout { branches, fusion, ext },
    })
}

impl Model {
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn buffer_index(&self, name: &str) -> Option<usize> {
        self.buffers.iter().position(|b| b.name == name)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Sets every parameter to zero (fusion matrices included).
    pub fn zero_params(&mut self) {
        for p in &mut self.params {
            p.value.fill(0.0);
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), NnetError> {
        let plane = self.config.plane();
        for (b, lags) in self.config.lags.sets().iter().enumerate() {
            let want = lags.len() * batch.n * plane;
            if batch.inputs[b].len() != want {
                return Err(NnetError::Shape(format!(
                    "{} input has {} values, expected {want}",
                    BRANCH_NAMES[b],
                    batch.inputs[b].len()
                )));
            }
        }
        if self.config.ext_dim > 0 && batch.ext.len() != batch.n * self.config.ext_dim {
            return Err(NnetError::Shape(format!(
                "external input has {} values, expected {}",
                batch.ext.len(),
                batch.n * self.config.ext_dim
            )));
        }
        if let Some(t) = &batch.target {
            if t.len() != batch.n * plane {
                return Err(NnetError::Shape(format!(
                    "target has {} values, expected {}",
                    t.len(),
                    batch.n * plane
                )));
            }
        }
        Ok(())
    }

    fn conv(&self, c: &ConvIdx, x: Vec<f64>, d: Dims, mode: Mode) -> (Vec<f64>, ConvCache) {
        let k = self.config.variant.kernel();
        let z = ops::conv_forward(&x, d, &self.params[c.w].value, &self.params[c.b].value, k);
        let (y, bn) = match (c.bn, mode) {
            (None, _) => (z, None),
            (Some(bi), Mode::Train) => {
                let (y, cache) = ops::bn_forward_train(
                    &z,
                    c.c_out,
                    &self.params[bi.gamma].value,
                    &self.params[bi.beta].value,
                );
                (y, Some(cache))
            }
            (Some(bi), Mode::Eval) => {
                let y = ops::bn_forward_eval(
                    &z,
                    c.c_out,
                    &self.params[bi.gamma].value,
                    &self.params[bi.beta].value,
                    &self.buffers[bi.mean].value,
                    &self.buffers[bi.var].value,
                );
                (y, None)
            }
        };
        (y, ConvCache { input: x, dims: d, bn })
    }

    /// Runs the network; output is `[N, H W]` in (-1, 1).
    pub fn forward(&self, batch: &Batch, mode: Mode) -> Result<ForwardCache, NnetError> {
        self.check_batch(batch)?;
        let cfg = &self.config;
        let (n, h, w) = (batch.n, cfg.height, cfg.width);
        let plane = cfg.plane();
        let mut branches = Vec::with_capacity(3);
        for (bi, idx) in self.layout.branches.iter().enumerate() {
            let d_in = Dims::new(idx.input.c_in, n, h, w);
            let (mut hid, input) = self.conv(&idx.input, batch.inputs[bi].clone(), d_in, mode);
            let d = Dims::new(cfg.filters, n, h, w);
            let mut units = Vec::with_capacity(idx.units.len());
            for (c1, c2) in &idx.units {
                let (z1, cache1) = self.conv(c1, ops::relu(&hid), d, mode);
                let (z2, cache2) = self.conv(c2, ops::relu(&z1), d, mode);
                for (a, b) in hid.iter_mut().zip(&z2) {
                    *a += b;
                }
                units.push((cache1, cache2));
            }
            let (value, output) = self.conv(&idx.output, ops::relu(&hid), d, mode);
            branches.push(BranchCache { input, units, output, value });
        }

        let mut pre = vec![0.0; n * plane];
        for (bi, br) in branches.iter().enumerate() {
            let m = &self.params[self.layout.fusion[bi]].value;
            for (s, (p, &v)) in pre.iter_mut().zip(m.iter().cycle().zip(&br.value)) {
                *s += p * v;
            }
        }
        let ext = match self.layout.ext {
            None => None,
            Some([w1, b1, w2, b2]) => {
                let e = batch.ext.clone();
                let z1 = ops::dense_forward(&e, n, &self.params[w1].value, &self.params[b1].value);
                let hidden = ops::relu(&z1);
                let z2 = ops::dense_forward(&hidden, n, &self.params[w2].value, &self.params[b2].value);
                for (s, v) in pre.iter_mut().zip(&z2) {
                    *s += v;
                }
                Some(ExtCache { e, hidden })
            }
        };
        let output = pre.iter().map(|v| v.tanh()).collect();
        Ok(ForwardCache { branches, ext, n, output })
    }

    /// Eval-mode prediction, `[N, H W]`.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>, NnetError> {
        Ok(self.forward(batch, Mode::Eval)?.output)
    }

    /// Sum of squared weights (convolution and dense).
    pub fn l2_norm2(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.kind.is_weight())
            .flat_map(|p| p.value.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Mean squared error against `batch.target`.
    pub fn mse(&self, batch: &Batch, mode: Mode) -> Result<f64, NnetError> {
        let target = batch.target.as_ref().ok_or_else(|| NnetError::Input("batch has no target".into()))?;
        let out = self.forward(batch, mode)?.output;
        Ok(mse(&out, target))
    }

    /// Training-mode loss `mse + l2 * |W|^2` with gradients written to
    /// `Param::grad` (overwritten, not accumulated).
    pub fn loss_and_grad(&mut self, batch: &Batch, l2: f64) -> Result<f64, NnetError> {
        let cache = self.forward(batch, Mode::Train)?;
        let loss = self.backward(batch, &cache, l2)?;
        Ok(loss)
    }

    /// Same as [`Model::loss_and_grad`], also folding the batch statistics
    /// into the running batch-norm estimates.
    pub fn loss_and_grad_update_stats(&mut self, batch: &Batch, l2: f64) -> Result<f64, NnetError> {
        let cache = self.forward(batch, Mode::Train)?;
        let loss = self.backward(batch, &cache, l2)?;
        self.update_running_stats(&cache);
        Ok(loss)
    }

    fn update_running_stats(&mut self, cache: &ForwardCache) {
        let m = cache.n * self.config.plane();
        let mut pending = Vec::new();
        for (idx, bc) in self.layout.branches.iter().zip(&cache.branches) {
            pending.push((idx.input, &bc.input));
            for ((c1, c2), (k1, k2)) in idx.units.iter().zip(&bc.units) {
                pending.push((*c1, k1));
                pending.push((*c2, k2));
            }
        }
        for (conv, cc) in pending {
            if let (Some(bi), Some(bn)) = (conv.bn, &cc.bn) {
                let (lo, hi) = (bi.mean.min(bi.var), bi.mean.max(bi.var));
                let (a, b) = self.buffers.split_at_mut(hi);
                let (mean, var) = if bi.mean == lo {
                    (&mut a[lo].value, &mut b[0].value)
                } else {
                    (&mut b[0].value, &mut a[lo].value)
                };
                ops::bn_update_running(bn, m, mean, var);
            }
        }
    }

    /// Backward pass from a training-mode cache; returns the loss.
    pub fn backward(&mut self, batch: &Batch, cache: &ForwardCache, l2: f64) -> Result<f64, NnetError> {
        let target = batch.target.as_ref().ok_or_else(|| NnetError::Input("batch has no target".into()))?;
        let y = &cache.output;
        let count = y.len() as f64;
        let mut loss = mse(y, target);
        if l2 > 0.0 {
            loss += l2 * self.l2_norm2();
        }
        if !loss.is_finite() {
            return Err(NnetError::NonFinite(format!("loss = {loss}")));
        }
        self.zero_grads();
        let dpre: Vec<f64> = y
            .iter()
            .zip(target)
            .map(|(&yv, &t)| 2.0 * (yv - t) / count * (1.0 - yv * yv))
            .collect();

        if let (Some([w1, b1, w2, b2]), Some(ec)) = (self.layout.ext, &cache.ext) {
            let n = cache.n;
            let dh = self.dense_back(&ec.hidden, n, w2, b2, &dpre, true).expect("dx requested");
            let dz1 = ops::relu_backward(&ec.hidden, &dh);
            self.dense_back(&ec.e, n, w1, b1, &dz1, false);
        }

        let layout = self.layout.clone();
        for (bi, (idx, bc)) in layout.branches.iter().zip(&cache.branches).enumerate() {
            let fi = layout.fusion[bi];
            let mut dval = vec![0.0; dpre.len()];
            {
                let Param { value: m, grad, .. } = &mut self.params[fi];
                for (i, (&g, &v)) in dpre.iter().zip(&bc.value).enumerate() {
                    let p = i % m.len();
                    dval[i] = g * m[p];
                    grad[p] += g * v;
                }
            }
            let dr = self.conv_back(&idx.output, &bc.output, dval, true).expect("dx requested");
            let mut dh = ops::relu_backward(&bc.output.input, &dr);
            for ((c1, c2), (k1, k2)) in idx.units.iter().zip(&bc.units).rev() {
                let da2 = self.conv_back(c2, k2, dh.clone(), true).expect("dx requested");
                let dz1 = ops::relu_backward(&k2.input, &da2);
                let da = self.conv_back(c1, k1, dz1, true).expect("dx requested");
                for (g, (&a, &d)) in dh.iter_mut().zip(k1.input.iter().zip(&da)) {
                    if a > 0.0 {
                        *g += d;
                    }
                }
            }
            self.conv_back(&idx.input, &bc.input, dh, false);
        }

        if l2 > 0.0 {
            for p in &mut self.params {
                if p.kind.is_weight() {
                    for (g, v) in p.grad.iter_mut().zip(&p.value) {
                        *g += 2.0 * l2 * v;
                    }
                }
            }
        }
        Ok(loss)
    }

    fn conv_back(&mut self, c: &ConvIdx, cc: &ConvCache, mut dy: Vec<f64>, need_dx: bool) -> Option<Vec<f64>> {
        if let (Some(bi), Some(bn)) = (c.bn, &cc.bn) {
            let gamma = self.params[bi.gamma].value.clone();
            let mut dgamma = std::mem::take(&mut self.params[bi.gamma].grad);
            let mut dbeta = std::mem::take(&mut self.params[bi.beta].grad);
            dy = ops::bn_backward(bn, &gamma, &dy, &mut dgamma, &mut dbeta);
            self.params[bi.gamma].grad = dgamma;
            self.params[bi.beta].grad = dbeta;
        }
        let k = self.config.variant.kernel();
        let mut dw = std::mem::take(&mut self.params[c.w].grad);
        let mut db = std::mem::take(&mut self.params[c.b].grad);
        let dx = ops::conv_backward(&cc.input, cc.dims, &self.params[c.w].value, k, &dy, &mut dw, &mut db, need_dx);
        self.params[c.w].grad = dw;
        self.params[c.b].grad = db;
        dx
    }

    fn dense_back(&mut self, x: &[f64], n: usize, w: usize, b: usize, dy: &[f64], need_dx: bool) -> Option<Vec<f64>> {
        let mut dw = std::mem::take(&mut self.params[w].grad);
        let mut db = std::mem::take(&mut self.params[b].grad);
        let dx = ops::dense_backward(x, n, &self.params[w].value, dy, &mut dw, &mut db, need_dx);
        self.params[w].grad = dw;
        self.params[b].grad = db;
        dx
    }

    /// Copies parameter values and buffers (not optimizer state).
    pub fn snapshot(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            self.params.iter().map(|p| p.value.clone()).collect(),
            self.buffers.iter().map(|b| b.value.clone()).collect(),
        )
    }

    pub fn restore(&mut self, snap: &(Vec<Vec<f64>>, Vec<Vec<f64>>)) {
        for (p, v) in self.params.iter_mut().zip(&snap.0) {
            p.value.clone_from(v);
        }
        for (b, v) in self.buffers.iter_mut().zip(&snap.1) {
            b.value.clone_from(v);
        }
    }

    /// Rounds every stored value to 32-bit precision, the checkpoint
    /// resolution.
    pub fn round_to_f32(&mut self) {
        let round = |v: &mut f64| *v = f64::from(*v as f32);
        for p in &mut self.params {
            p.value.iter_mut().for_each(round);
        }
        for b in &mut self.buffers {
            b.value.iter_mut().for_each(round);
        }
    }
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            variant: Variant::Conv3x3,
            filters: 4,
            residual_units: 1,
            height: 4,
            width: 3,
            lags: Lags { closeness: vec![1, 2], period: vec![24], trend: vec![168] },
            ext_dim: 3,
            ext_hidden: 5,
            batch_norm: false,
        }
    }

    fn batch(cfg: &ModelConfig, n: usize) -> Batch {
        let plane = cfg.plane();
        let gen = |len: usize, s: f64| (0..len).map(|i| ((i as f64 + s) * 0.37).sin()).collect::<Vec<_>>();
        Batch {
            n,
            inputs: [
                gen(cfg.lags.closeness.len() * n * plane, 0.0),
                gen(cfg.lags.period.len() * n * plane, 1.0),
                gen(cfg.lags.trend.len() * n * plane, 2.0),
            ],
            ext: gen(n * cfg.ext_dim, 3.0),
            target: Some(gen(n * plane, 4.0).iter().map(|v| v * 0.5).collect()),
        }
    }

    #[test]
    fn full_size_parameter_counts() {
        // Upsampled 16x16 grid, ten external features. Per branch:
        // 3->64 in, 12 x (64->64), 64->1 out; then fusion and the head.
        let conv = build_model(&ModelConfig::full(31, 31, 10), 0).unwrap();
        let branch = (3 * 64 * 9 + 64) + 12 * (64 * 64 * 9 + 64) + (64 * 9 + 1);
        let rest = 3 * 961 + (10 * 10 + 10) + (961 * 10 + 961);
        assert_eq!(conv.param_count(), 3 * branch + rest);
        assert_eq!(conv.param_count(), 1_350_079);
        let mut pw_cfg = ModelConfig::full(31, 31, 10);
        pw_cfg.variant = Variant::Pointwise;
        let pw = build_model(&pw_cfg, 0).unwrap();
        assert_eq!(pw.param_count(), 164_287);
        assert!(pw.param_count() < conv.param_count());
    }

    #[test]
    fn deterministic_init() {
        let cfg = tiny_config();
        let a = build_model(&cfg, 11).unwrap();
        let b = build_model(&cfg, 11).unwrap();
        assert_eq!(a.params, b.params);
        let c = build_model(&cfg, 12).unwrap();
        assert_ne!(a.params, c.params);
        let names: std::collections::HashSet<_> = a.params.iter().map(|p| &p.name).collect();
        assert_eq!(names.len(), a.params.len());
        let fusion = &a.params[a.param_index("fusion.trend").unwrap()];
        assert!(fusion.value.iter().all(|&v| v == 1.0 / 3.0));
    }

    #[test]
    fn zero_network_predicts_zero() {
        let cfg = tiny_config();
        let mut m = build_model(&cfg, 1).unwrap();
        m.zero_params();
        let out = m.predict(&batch(&cfg, 2)).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn outputs_bounded_and_deterministic() {
        let cfg = tiny_config();
        let m = build_model(&cfg, 2).unwrap();
        let b = batch(&cfg, 3);
        let y1 = m.predict(&b).unwrap();
        assert_eq!(y1, m.predict(&b).unwrap());
        assert_eq!(y1.len(), 3 * cfg.plane());
        assert!(y1.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn doubling_fusion_doubles_branch_contribution() {
        let mut cfg = tiny_config();
        cfg.ext_dim = 0;
        let mut m = build_model(&cfg, 5).unwrap();
        for name in ["fusion.period", "fusion.trend"] {
            let i = m.param_index(name).unwrap();
            m.params[i].value.fill(0.0);
        }
        let b = batch(&cfg, 1);
        let y1: Vec<f64> = m.predict(&b).unwrap().iter().map(|v| v.atanh()).collect();
        let i = m.param_index("fusion.closeness").unwrap();
        m.params[i].value.iter_mut().for_each(|v| *v *= 2.0);
        let y2: Vec<f64> = m.predict(&b).unwrap().iter().map(|v| v.atanh()).collect();
        for (a, b) in y1.iter().zip(&y2) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_errors() {
        let cfg = tiny_config();
        let m = build_model(&cfg, 0).unwrap();
        let mut b = batch(&cfg, 1);
        b.inputs[1].pop();
        assert!(matches!(m.predict(&b), Err(NnetError::Shape(_))));
    }

    #[test]
    fn batch_norm_stats_move_toward_batch() {
        let mut cfg = tiny_config();
        cfg.batch_norm = true;
        let mut m = build_model(&cfg, 3).unwrap();
        let before = m.buffers.clone();
        m.loss_and_grad(&batch(&cfg, 2), 0.0).unwrap();
        assert_eq!(before, m.buffers);
        m.loss_and_grad_update_stats(&batch(&cfg, 2), 0.0).unwrap();
        assert_ne!(before, m.buffers);
    }
}
