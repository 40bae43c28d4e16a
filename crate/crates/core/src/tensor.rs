//! Dense row-major `f64` tensors and the batched signal view built on them.

use crate::error::{Error, Result};

/// A dense row-major tensor of 64-bit floats.
///
/// `requires_grad` marks trainable leaves; `grad`, when present, has the same
/// length as `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Usage(format!("tensor dimensions must be positive, got {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Validation(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Marks this tensor as a trainable leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
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

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, &shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A batch of 1-D or 2-D real signals: shape `[batch, n]` or `[batch, h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalGrid(Tensor);

impl SignalGrid {
    pub fn new(tensor: Tensor) -> Result<Self> {
        match tensor.shape().len() {
            2 | 3 => Ok(SignalGrid(tensor)),
            _ => Err(Error::Usage(format!(
                "signal grids are [batch, n] or [batch, h, w], got {:?}",
                tensor.shape()
            ))),
        }
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        SignalGrid::new(Tensor::new(shape, data)?)
    }

    /// Stacks equally shaped single signals (each `[n]` or `[h, w]`) into a batch.
    pub fn stack(spatial: &[usize], samples: &[&[f64]]) -> Result<Self> {
        let per: usize = spatial.iter().product();
        let mut data = Vec::with_capacity(per * samples.len());
        for s in samples {
            if s.len() != per {
                return Err(Error::shape("stack", spatial, &[s.len()]));
            }
            data.extend_from_slice(s);
        }
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(spatial);
        SignalGrid::from_vec(shape, data)
    }

    pub fn batch(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn spatial(&self) -> &[usize] {
        &self.0.shape()[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.spatial().iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.0.data()[i * n..(i + 1) * n]
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub(crate) fn require_same_shape(&self, other: &SignalGrid, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(context, self.shape(), other.shape()));
        }
        Ok(())
    }
}

impl From<SignalGrid> for Tensor {
    fn from(s: SignalGrid) -> Tensor {
        s.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().len(), 6);
    }

    #[test]
    fn signal_grid_rank() {
        assert!(SignalGrid::new(Tensor::zeros(vec![4])).is_err());
        let s = SignalGrid::new(Tensor::zeros(vec![2, 4, 4])).unwrap();
        assert_eq!(s.batch(), 2);
        assert_eq!(s.spatial(), &[4, 4]);
        assert_eq!(s.sample(1).len(), 16);
    }
}
