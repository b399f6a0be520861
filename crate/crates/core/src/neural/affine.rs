use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use rand::Rng;

use super::{init_uniform, Parameters, Tensor2};
use crate::error::{dim, Result};
use crate::Scalar;

/// Fully connected layer `y = x W + b` with `W: in × out`, `b: 1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams<T> {
    pub weight: Tensor2<T>,
    pub bias: Tensor2<T>,
}

impl<T: Scalar> AffineParams<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array2::zeros((1, output)),
        }
    }

    /// Uniform initialization in `±1/sqrt(input)`.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, output);
        let bound = 1.0 / (input as f64).sqrt();
        init_uniform(&mut p.weight, bound, rng);
        init_uniform(&mut p.bias, bound, rng);
        p
    }

    pub fn input_size(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_size(&self) -> usize {
        self.weight.ncols()
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.bias.dim() != (1, self.output_size()) {
            return Err(dim("affine bias", format!("1x{}", self.output_size()), format!("{:?}", self.bias.dim())));
        }
        Ok(())
    }

    /// Batch forward without shape checks.
    pub fn forward(&self, x: &Tensor2<T>) -> Tensor2<T> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Accumulates gradients and returns `d x`.
    pub fn backward(&self, x: &Tensor2<T>, dy: &Tensor2<T>, grads: &mut Self) -> Tensor2<T> {
        general_mat_mul(T::one(), &x.t(), dy, T::one(), &mut grads.weight);
        grads.bias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

impl<T: Scalar> Parameters<T> for AffineParams<T> {
    fn tensors(&self) -> Vec<&Tensor2<T>> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Single-vector affine map.
pub fn affine_forward<T: Scalar>(x: &[T], p: &AffineParams<T>) -> Result<Vec<T>> {
    p.check_shapes()?;
    if x.len() != p.input_size() {
        return Err(dim("affine input", p.input_size(), x.len()));
    }
    let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
    Ok(p.forward(&row).into_raw_vec_and_offset().0)
}
