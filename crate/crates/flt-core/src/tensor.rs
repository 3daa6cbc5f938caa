//! Row-major dense tensor of 64-bit reals.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A dense row-major tensor. The first axis is the batch axis wherever a
/// batch is implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "Tensor::new".into(),
                expected: format!("{expected} values for shape {shape:?}"),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows along the leading (batch) axis.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Per-sample shape, i.e. everything after the batch axis.
    pub fn sample_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    /// Per-sample element count.
    pub fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// Borrow row `b` of the leading axis as a flat slice.
    pub fn row(&self, b: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks equally shaped sample tensors into one batch tensor.
    pub fn stack(samples: &[&Tensor]) -> Result<Tensor> {
        let first = samples.first().ok_or_else(|| {
            Error::InvalidArgument("cannot stack an empty sample list".into())
        })?;
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(samples.len() * first.len());
        for s in samples {
            if s.shape != first.shape {
                return Err(Error::ShapeMismatch {
                    context: "Tensor::stack".into(),
                    expected: format!("{:?}", first.shape),
                    got: format!("{:?}", s.shape),
                });
            }
            data.extend_from_slice(&s.data);
        }
        Tensor::new(shape, data)
    }
}
