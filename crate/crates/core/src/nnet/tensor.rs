//! Owned n-dimensional tensor and single-sample layer entry points.

use super::ops::{self, Dims};
use super::NnetError;

/// Row-major array of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnetError> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(NnetError::Shape(format!(
                "shape {shape:?} needs {want} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnetError::NonFinite("tensor value".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn conv_dims(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<(Dims, usize, usize), NnetError> {
    let (is, ks) = (input.shape(), kernel.shape());
    if is.len() != 3 || ks.len() != 4 || bias.shape().len() != 1 {
        return Err(NnetError::Shape(format!(
            "conv2d expects [C,H,W], [O,C,k,k], [O]; got {is:?}, {ks:?}, {:?}",
            bias.shape()
        )));
    }
    let k = ks[2];
    if ks[3] != k || k % 2 == 0 {
        return Err(NnetError::Shape(format!("kernel must be square with odd size, got {ks:?}")));
    }
    if ks[1] != is[0] || ks[0] != bias.len() {
        return Err(NnetError::Shape(format!(
            "channel mismatch: input {is:?}, kernel {ks:?}, bias {:?}",
            bias.shape()
        )));
    }
    Ok((Dims::new(is[0], 1, is[1], is[2]), ks[0], k))
}

/// Same-padded cross-correlation of one `[C_in, H, W]` sample.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor, NnetError> {
    let (d, c_out, k) = conv_dims(input, kernel, bias)?;
    let y = ops::conv_forward(input.data(), d, kernel.data(), bias.data(), k);
    Ok(Tensor { shape: vec![c_out, d.h, d.w], data: y })
}

/// Gradients of `<dy, conv2d(input, kernel, bias)>` with respect to input,
/// kernel and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnetError> {
    let (d, c_out, k) = conv_dims(input, kernel, bias)?;
    if dy.shape() != [c_out, d.h, d.w] {
        return Err(NnetError::Shape(format!("output gradient shape {:?}", dy.shape())));
    }
    let mut dk = vec![0.0; kernel.len()];
    let mut db = vec![0.0; c_out];
    let dx = ops::conv_backward(input.data(), d, kernel.data(), k, dy.data(), &mut dk, &mut db, true)
        .expect("dx requested");
    Ok((
        Tensor { shape: input.shape.clone(), data: dx },
        Tensor { shape: kernel.shape.clone(), data: dk },
        Tensor { shape: bias.shape.clone(), data: db },
    ))
}

/// Weights of one residual unit: two `F -> F` convolutions.
#[derive(Debug, Clone)]
pub struct ResidualWeights {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// `x + conv2(relu(conv1(relu(x))))`.
pub fn residual_unit(x: &Tensor, rw: &ResidualWeights) -> Result<Tensor, NnetError> {
    let a = Tensor { shape: x.shape.clone(), data: ops::relu(x.data()) };
    let z1 = conv2d(&a, &rw.w1, &rw.b1)?;
    let a2 = Tensor { shape: z1.shape.clone(), data: ops::relu(z1.data()) };
    let z2 = conv2d(&a2, &rw.w2, &rw.b2)?;
    if z2.shape() != x.shape() {
        return Err(NnetError::Shape(format!(
            "residual branch yields {:?} for input {:?}",
            z2.shape(),
            x.shape()
        )));
    }
    let data = x.data().iter().zip(z2.data()).map(|(a, b)| a + b).collect();
    Ok(Tensor { shape: x.shape.clone(), data })
}

/// Gradients of `<dy, residual_unit(x)>`: returns `dx` and the weight
/// gradients in the same layout as [`ResidualWeights`].
pub fn residual_unit_backward(
    x: &Tensor,
    rw: &ResidualWeights,
    dy: &Tensor,
) -> Result<(Tensor, ResidualWeights), NnetError> {
    let a = Tensor { shape: x.shape.clone(), data: ops::relu(x.data()) };
    let z1 = conv2d(&a, &rw.w1, &rw.b1)?;
    let a2 = Tensor { shape: z1.shape.clone(), data: ops::relu(z1.data()) };
    let (da2, dw2, db2) = conv2d_backward(&a2, &rw.w2, &rw.b2, dy)?;
    let dz1 = Tensor { shape: da2.shape.clone(), data: ops::relu_backward(a2.data(), da2.data()) };
    let (da, dw1, db1) = conv2d_backward(&a, &rw.w1, &rw.b1, &dz1)?;
    let mut dx = dy.clone();
    for (g, (&av, &d)) in dx.data.iter_mut().zip(a.data().iter().zip(da.data())) {
        if av > 0.0 {
            *g += d;
        }
    }
    Ok((dx, ResidualWeights { w1: dw1, b1: db1, w2: dw2, b2: db2 }))
}
