//! Ternary weights: exact projection, 2-bit packing, shadow-weight training
//! and compact checkpoints.

mod checkpoint;
mod pack;
mod project;
mod train;

use thiserror::Error;

pub use checkpoint::{
    load_ternary_checkpoint, save_ternary_checkpoint, ternary_checkpoint_bytes,
    ternary_model_from_bytes, TERNARY_MAGIC,
};
pub use pack::{pack_trits, packed_len, unpack_trits};
pub use project::{
    objective, optimal_value, ternary_project, ternary_project_oracle, ORACLE_MAX_LEN,
};
pub use train::{train_ternary, train_ternary_epoch, ShadowState, TernaryHistory};

#[derive(Debug, Error, PartialEq)]
pub enum TernaryError {
    #[error("cannot project an empty vector")]
    Empty,
    #[error("non-finite weight")]
    NonFinite,
    #[error("oracle limited to {max} entries, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid trit {0}")]
    InvalidTrit(i8),
    #[error("reserved trit code at byte {byte}, slot {slot}")]
    ReservedCode { byte: usize, slot: usize },
    #[error("packed length {got} bytes, expected {expected}")]
    PackedLength { got: usize, expected: usize },
    #[error("nonzero padding bits in final byte")]
    Padding,
}

/// `alpha * trits`, with `k` nonzero trits.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryTensor {
    pub alpha: f64,
    pub trits: Vec<i8>,
    pub shape: Vec<usize>,
    pub k: usize,
}

impl TernaryTensor {
    pub fn new(alpha: f64, trits: Vec<i8>, shape: Vec<usize>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), trits.len());
        let k = trits.iter().filter(|&&t| t != 0).count();
        Self { alpha, trits, shape, k }
    }

    /// Projects a tensor flattened row-major, keeping its shape.
    pub fn project(values: &[f64], shape: &[usize]) -> Result<Self, TernaryError> {
        let mut t = ternary_project(values)?;
        t.shape = shape.to_vec();
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.trits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trits.is_empty()
    }

    /// Dense values `alpha * t`.
    pub fn values(&self) -> Vec<f64> {
        self.trits.iter().map(|&t| self.alpha * f64::from(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_counts_nonzero_trits() {
        let t = TernaryTensor::new(0.5, vec![1, 0, -1, 0, 1, 1], vec![2, 3]);
        assert_eq!(t.k, 4);
        assert_eq!(t.values(), vec![0.5, 0.0, -0.5, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn project_keeps_shape() {
        let t = TernaryTensor::project(&[1.0, -1.0, 0.0, 0.1], &[2, 2]).unwrap();
        assert_eq!(t.shape, vec![2, 2]);
        assert_eq!(t.trits, vec![1, -1, 0, 0]);
    }
}
