//! Minimal reverse-mode autodiff engine: exactly the operations the
//! restoration network and its training loop need, nothing more.

mod adam;
mod checkpoint;
mod graph;
pub mod gradcheck;
mod init;
mod kernels;
mod scalar;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{read_named_tensors, write_named_tensors, CheckpointHeader, CHECKPOINT_MAGIC};
pub use graph::{Graph, Var};
pub use init::gaussian_init;
pub use kernels::{conv2d_output_extent, pixel_shuffle_raw, pixel_unshuffle_raw};
pub use scalar::Scalar;

use crate::error::{Error, Result};

/// Dense row-major tensor of rank 1..=4. Image data uses (N, C, H, W).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<E> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Scalar> Tensor<E> {
    pub fn new(shape: &[usize], data: Vec<E>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::shape("tensor", format!("rank {} not in 1..=4", shape.len())));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} wants {} elements, got {}", shape, len, data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![E::ZERO; len],
        }
    }

    pub fn full(shape: &[usize], v: E) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; len],
        }
    }

    pub fn scalar(v: E) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_f64_slice(shape: &[usize], vals: &[f64]) -> Result<Self> {
        Tensor::new(shape, vals.iter().map(|&v| E::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// (N, C, H, W) view; lower-rank tensors are padded with leading 1s.
    pub fn dims4(&self) -> [usize; 4] {
        let mut d = [1usize; 4];
        let off = 4 - self.shape.len();
        for (i, &s) in self.shape.iter().enumerate() {
            d[off + i] = s;
        }
        d
    }

    /// (rows, cols) view of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape("dims2", format!("expected rank 2, got {:?}", s))),
        }
    }

    /// Same data, new logical shape. Element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite_val())
    }

    /// Exact per-element equality; used by determinism checks.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_f64().to_bits() == b.to_f64().to_bits())
    }

    pub fn map_to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.to_f64()).collect(),
        }
    }

    pub fn map_to_f32(&self) -> Tensor<f32> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.to_f64() as f32).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(&[1, 1, 1, 1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn dims4_pads_leading() {
        let t = Tensor::<f32>::zeros(&[5]);
        assert_eq!(t.dims4(), [1, 1, 1, 5]);
        let t = Tensor::<f32>::zeros(&[2, 3, 4, 5]);
        assert_eq!(t.dims4(), [2, 3, 4, 5]);
    }
}
