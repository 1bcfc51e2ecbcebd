//! Dense f64 tensor substrate with reverse-mode gradients.
//!
//! [`Tensor`] is a plain row-major value. Differentiable computation goes
//! through a [`Graph`]: operations append nodes, `backward` replays them in
//! reverse. Trainable state lives in a [`ParamSet`] and is bound into each
//! graph as leaf nodes, so one set of parameters can drive many graphs.

mod blob;
mod graph;
mod params;

pub use blob::{read_blob, write_blob, Checkpoint};
pub use graph::{Graph, Var};
pub use params::{ParamId, ParamSet, Parameter};

use crate::error::{Error, Result};

/// A dense row-major tensor of 64-bit floats.
///
/// `data.len()` always equals the product of `shape`; constructors enforce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::dimension(
                "Tensor::new",
                format!("{} elements for shape {:?}", numel, shape),
                data.len(),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![value; numel] }
    }

    /// A 1×n row vector.
    pub fn row(values: Vec<f64>) -> Self {
        Tensor { shape: vec![1, values.len()], data: values }
    }

    /// An r×c matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// A 1×1 scalar.
    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows of a 2-D tensor (a vector counts as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            1 => 1,
            _ => panic!("rows() on rank-{} tensor", self.shape.len()),
        }
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => panic!("cols() on rank-{} tensor", self.shape.len()),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    /// The single element of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor with {} elements", self.numel());
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Errors with the given context if any element is non-finite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite value in {context}")))
        }
    }

    /// Reinterpret a vector or 1×n/n×1 tensor as a 1×n row.
    pub fn as_row(&self) -> Result<Tensor> {
        if self.rows() == 1 || self.cols() == 1 {
            Ok(Tensor { shape: vec![1, self.numel()], data: self.data.clone() })
        } else {
            Err(Error::dimension("as_row", "a vector", format!("{:?}", self.shape)))
        }
    }
}
