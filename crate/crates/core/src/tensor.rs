//! Dense row-major tensors and the handful of matrix products the model needs.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use rayon::prelude::*;

/// Scalar type for model math: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float + FromPrimitive + AddAssign + SubAssign + MulAssign + DivAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length does not match shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64_lossy(x.to_f64_lossy())).collect(),
        }
    }
}

/// Work (multiply-adds) above which products are split across threads.
const PAR_THRESHOLD: usize = 1 << 16;

/// `a [m×k] · b [k×n]`.
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![T::zero(); m * n];
    let row = |(i, out_row): (usize, &mut [T])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && n > 0 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else if n > 0 {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// `a [m×k] · bᵀ` where `b` is `[n×k]`.
pub fn matmul_bt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut out = vec![T::zero(); m * n];
    let row = |(i, out_row): (usize, &mut [T])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = dot(a_row, &b[j * k..(j + 1) * k]);
        }
    };
    if m * k * n >= PAR_THRESHOLD && n > 0 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else if n > 0 {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// `out [k×n] += aᵀ · b` where `a` is `[m×k]` and `b` is `[m×n]`.
pub fn matmul_at_acc<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let row = |(p, out_row): (usize, &mut [T])| {
        for i in 0..m {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in out_row.iter_mut().zip(&b[i * n..(i + 1) * n]) {
                *o += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && n > 0 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else if n > 0 {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
