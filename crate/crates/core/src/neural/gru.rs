use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis, Zip};
use rand::Rng;

use super::{init_uniform, sigmoid, Parameters, Tensor2};
use crate::error::{dim, Result};
use crate::Scalar;

/// Weights of one GRU layer. Input matrices are `input × hidden`, recurrent
/// matrices `hidden × hidden`, biases `1 × hidden`.
///
/// The cell blends as `h = (1 - z) * h_prev + z * h_cand`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub w_z: Tensor2<T>,
    pub w_r: Tensor2<T>,
    pub w_h: Tensor2<T>,
    pub u_z: Tensor2<T>,
    pub u_r: Tensor2<T>,
    pub u_h: Tensor2<T>,
    pub b_z: Tensor2<T>,
    pub b_r: Tensor2<T>,
    pub b_h: Tensor2<T>,
}

/// Activations saved by a forward step for the matching backward step.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    x: Tensor2<T>,
    h_prev: Tensor2<T>,
    z: Tensor2<T>,
    r: Tensor2<T>,
    rh: Tensor2<T>,
    cand: Tensor2<T>,
}

impl<T> GruCache<T> {
    pub fn h_prev(&self) -> &Tensor2<T> {
        &self.h_prev
    }
}

fn gate<T: Scalar>(
    x: &Tensor2<T>,
    w: &Tensor2<T>,
    h: &Tensor2<T>,
    u: &Tensor2<T>,
    b: &Tensor2<T>,
) -> Tensor2<T> {
    let mut a = x.dot(w);
    general_mat_mul(T::one(), h, u, T::one(), &mut a);
    a += b;
    a
}

impl<T: Scalar> GruParams<T> {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let w = || Array2::zeros((input_size, hidden_size));
        let u = || Array2::zeros((hidden_size, hidden_size));
        let b = || Array2::zeros((1, hidden_size));
        Self {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    /// Uniform initialization in `±1/sqrt(hidden_size)`.
    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        let bound = 1.0 / (hidden_size as f64).sqrt();
        for t in p.tensors_mut() {
            init_uniform(t, bound, rng);
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn hidden_size(&self) -> usize {
        self.u_z.nrows()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (i, h) = (self.input_size(), self.hidden_size());
        for w in [&self.w_z, &self.w_r, &self.w_h] {
            if w.dim() != (i, h) {
                return Err(dim("gru input weight", format!("{i}x{h}"), format!("{:?}", w.dim())));
            }
        }
        for u in [&self.u_z, &self.u_r, &self.u_h] {
            if u.dim() != (h, h) {
                return Err(dim("gru recurrent weight", format!("{h}x{h}"), format!("{:?}", u.dim())));
            }
        }
        for b in [&self.b_z, &self.b_r, &self.b_h] {
            if b.dim() != (1, h) {
                return Err(dim("gru bias", format!("1x{h}"), format!("{:?}", b.dim())));
            }
        }
        Ok(())
    }

    fn check_batch(&self, x: &Tensor2<T>, h: &Tensor2<T>) -> Result<()> {
        self.check_shapes()?;
        if x.ncols() != self.input_size() {
            return Err(dim("gru input", self.input_size(), x.ncols()));
        }
        if h.ncols() != self.hidden_size() || h.nrows() != x.nrows() {
            return Err(dim(
                "gru hidden",
                format!("{}x{}", x.nrows(), self.hidden_size()),
                format!("{:?}", h.dim()),
            ));
        }
        Ok(())
    }

    /// One step over a batch of rows, with shape checks.
    pub fn step(&self, x: &Tensor2<T>, h_prev: &Tensor2<T>) -> Result<Tensor2<T>> {
        self.check_batch(x, h_prev)?;
        Ok(self.step_cached(x.clone(), h_prev.clone()).0)
    }

    /// Unchecked batch step that keeps the activations for `backward`.
    pub fn step_cached(&self, x: Tensor2<T>, h_prev: Tensor2<T>) -> (Tensor2<T>, GruCache<T>) {
        let mut z = gate(&x, &self.w_z, &h_prev, &self.u_z, &self.b_z);
        z.mapv_inplace(sigmoid);
        let mut r = gate(&x, &self.w_r, &h_prev, &self.u_r, &self.b_r);
        r.mapv_inplace(sigmoid);
        let rh = &r * &h_prev;
        let mut cand = gate(&x, &self.w_h, &rh, &self.u_h, &self.b_h);
        cand.mapv_inplace(T::tanh);
        let mut h = Array2::zeros(h_prev.raw_dim());
        Zip::from(&mut h)
            .and(&z)
            .and(&h_prev)
            .and(&cand)
            .for_each(|o, &z, &p, &c| *o = (T::one() - z) * p + z * c);
        (
            h,
            GruCache {
                x,
                h_prev,
                z,
                r,
                rh,
                cand,
            },
        )
    }

    /// Accumulates parameter gradients into `grads` and returns
    /// `(d input, d h_prev)`.
    pub fn backward(
        &self,
        cache: &GruCache<T>,
        dh: &Tensor2<T>,
        grads: &mut Self,
    ) -> (Tensor2<T>, Tensor2<T>) {
        let one = T::one();
        let GruCache {
            x,
            h_prev,
            z,
            r,
            rh,
            cand,
        } = cache;

        let mut dh_prev = Array2::zeros(h_prev.raw_dim());
        Zip::from(&mut dh_prev)
            .and(dh)
            .and(z)
            .for_each(|dp, &g, &z| *dp = g * (one - z));
        let mut daz = Array2::zeros(z.raw_dim());
        let mut dah = Array2::zeros(z.raw_dim());
        Zip::from(&mut daz)
            .and(&mut dah)
            .and(dh)
            .and(z)
            .and(h_prev)
            .and(cand)
            .for_each(|daz, dah, &g, &z, &p, &c| {
                *daz = g * (c - p) * z * (one - z);
                *dah = g * z * (one - c * c);
            });

        general_mat_mul(one, &x.t(), &dah, one, &mut grads.w_h);
        general_mat_mul(one, &rh.t(), &dah, one, &mut grads.u_h);
        grads.b_h += &dah.sum_axis(Axis(0)).insert_axis(Axis(0));

        let drh = dah.dot(&self.u_h.t());
        let mut dar = Array2::zeros(r.raw_dim());
        Zip::from(&mut dar)
            .and(&mut dh_prev)
            .and(&drh)
            .and(r)
            .and(h_prev)
            .for_each(|dar, dp, &g, &r, &p| {
                *dar = g * p * r * (one - r);
                *dp += g * r;
            });

        general_mat_mul(one, &x.t(), &dar, one, &mut grads.w_r);
        general_mat_mul(one, &h_prev.t(), &dar, one, &mut grads.u_r);
        grads.b_r += &dar.sum_axis(Axis(0)).insert_axis(Axis(0));
        general_mat_mul(one, &x.t(), &daz, one, &mut grads.w_z);
        general_mat_mul(one, &h_prev.t(), &daz, one, &mut grads.u_z);
        grads.b_z += &daz.sum_axis(Axis(0)).insert_axis(Axis(0));

        let mut dx = daz.dot(&self.w_z.t());
        general_mat_mul(one, &dar, &self.w_r.t(), one, &mut dx);
        general_mat_mul(one, &dah, &self.w_h.t(), one, &mut dx);
        general_mat_mul(one, &daz, &self.u_z.t(), one, &mut dh_prev);
        general_mat_mul(one, &dar, &self.u_r.t(), one, &mut dh_prev);
        (dx, dh_prev)
    }
}

impl<T: Scalar> Parameters<T> for GruParams<T> {
    fn tensors(&self) -> Vec<&Tensor2<T>> {
        vec![
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z,
            &self.b_r, &self.b_h,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

/// Single-vector GRU step.
pub fn gru_cell_forward<T: Scalar>(x: &[T], h_prev: &[T], p: &GruParams<T>) -> Result<Vec<T>> {
    let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
    let h = Array2::from_shape_vec((1, h_prev.len()), h_prev.to_vec()).expect("row shape");
    Ok(p.step(&x, &h)?.into_raw_vec_and_offset().0)
}
