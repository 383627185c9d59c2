//! Dense row-major tensors over f32 (training) or f64 (gradient checking).

use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// Element type abstraction: training runs in f32, gradient checking in f64.
pub trait Scalar:
    Copy
    + PartialOrd
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            fn tanh(self) -> Self {
                self.tanh()
            }
            fn abs(self) -> Self {
                self.abs()
            }
            fn maximum(self, other: Self) -> Self {
                self.max(other)
            }
            fn is_finite(self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Row-major n-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F: Scalar> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::ZERO; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match {} elements",
            shape,
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar_shape_like(&self) -> Tensor<F> {
        Tensor::zeros(&self.shape)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch row.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// Stacks per-sample tensors (all the same shape) into a batched tensor.
    pub fn stack(samples: &[&Tensor<F>]) -> Tensor<F> {
        assert!(!samples.is_empty());
        let sample_shape = &samples[0].shape;
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(sample_shape);
        let mut data = Vec::with_capacity(samples.len() * samples[0].numel());
        for s in samples {
            assert_eq!(&s.shape, sample_shape, "stack of mismatched shapes");
            data.extend_from_slice(&s.data);
        }
        Tensor { shape, data }
    }

    /// Returns a reshaped copy sharing the same element order.
    pub fn reshaped(&self, shape: &[usize]) -> Tensor<F> {
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }
}

/// Parallelism threshold: matrix products with fewer output elements than
/// this run single-threaded.
const PAR_THRESHOLD: usize = 16 * 1024;

/// out(m,n) = a(m,k) * b(k,n); all row-major. `out` is overwritten.
pub fn matmul_nn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    let row = |out_row: &mut [F], i: usize| {
        out_row.iter_mut().for_each(|v| *v = F::ZERO);
        for kk in 0..k {
            let aik = a[i * k + kk];
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    };
    if m * n >= PAR_THRESHOLD && m > 1 {
        use rayon::prelude::*;
        out.par_chunks_mut(n).enumerate().for_each(|(i, r)| row(r, i));
    } else {
        for (i, r) in out.chunks_mut(n).enumerate() {
            row(r, i);
        }
    }
}

/// out(m,n) = a(m,k) * b(n,k)^T.
pub fn matmul_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(out.len(), m * n);
    let row = |out_row: &mut [F], i: usize| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::ZERO;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o = acc;
        }
    };
    if m * n >= PAR_THRESHOLD && m > 1 {
        use rayon::prelude::*;
        out.par_chunks_mut(n).enumerate().for_each(|(i, r)| row(r, i));
    } else {
        for (i, r) in out.chunks_mut(n).enumerate() {
            row(r, i);
        }
    }
}

/// out(k,n) = a(m,k)^T * b(m,n).
pub fn matmul_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), m * n);
    assert_eq!(out.len(), k * n);
    let row = |out_row: &mut [F], i: usize| {
        out_row.iter_mut().for_each(|v| *v = F::ZERO);
        for mm in 0..m {
            let ami = a[mm * k + i];
            let b_row = &b[mm * n..(mm + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += ami * bv;
            }
        }
    };
    if k * n >= PAR_THRESHOLD && k > 1 {
        use rayon::prelude::*;
        out.par_chunks_mut(n).enumerate().for_each(|(i, r)| row(r, i));
    } else {
        for (i, r) in out.chunks_mut(n).enumerate() {
            row(r, i);
        }
    }
}
