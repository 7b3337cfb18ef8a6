//! A small dense-tensor engine: `NCHW` tensors, the layer kernels used by the
//! upscaling networks with hand-written backward passes, losses and Adam.
//!
//! Everything is generic over [`Real`] so that training runs in `f32` while
//! gradient checks can run the identical code in `f64`.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod deconv;
mod loss;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::OneHotLevel;

pub use activation::{activation_backward, activation_forward, Activation};
pub use adam::{adam_step, AdamConfig};
pub use batchnorm::{batchnorm_forward, BatchNorm2d, BatchNormTrace, BatchOutput, BnMode};
pub use conv::{conv2d_forward, Conv2d, ConvTrace};
pub use deconv::{deconv2d_forward, Deconv2d, DeconvTrace};
pub use loss::{loss, LossKind, LOG_CLAMP};

/// Floating point element type of the engine.
pub trait Real:
    Float
    + FromPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// `c = a * b + beta * c` on raw strided matrices.
    ///
    /// # Safety
    /// Pointers and strides must describe in-bounds `m x k`, `k x n` and
    /// `m x n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major dense matrix operand, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, F> {
    pub data: &'a [F],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, F> Mat<'a, F> {
    pub fn new(data: &'a [F], rows: usize, cols: usize) -> Self {
        Mat {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    /// The transpose of a stored `rows x cols` matrix.
    pub fn t(data: &'a [F], rows: usize, cols: usize) -> Self {
        Mat {
            data,
            rows,
            cols,
            transposed: true,
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = a * b + beta * out` with `out` stored row-major.
pub(crate) fn gemm<F: Real>(a: Mat<F>, b: Mat<F>, beta: F, out: &mut [F]) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "inner dimensions differ");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert_eq!(out.len(), m * n);
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: lengths checked above; strides describe the stored layouts.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Dense row-major tensor. Image tensors use `[batch, channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F = f32> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, F::zero())
    }

    pub fn filled(shape: &[usize], value: F) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "{} values cannot fill shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn random_uniform(shape: &[usize], limit: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| F::lit(rng.random_range(-limit..=limit)))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Stacks one-hot levels into a `[n, 7, h, w]` batch.
    pub fn from_one_hot(levels: &[&OneHotLevel]) -> Result<Self> {
        let first = levels
            .first()
            .ok_or_else(|| Error::Empty("cannot batch zero levels".into()))?;
        let (c, h, w) = (first.channels(), first.height(), first.width());
        let mut data = Vec::with_capacity(levels.len() * c * h * w);
        for level in levels {
            if (level.height(), level.width()) != (h, w) {
                return Err(Error::shape("levels in a batch must share extents"));
            }
            data.extend(level.data().iter().map(|&v| F::lit(v as f64)));
        }
        Tensor::from_vec(&[levels.len(), c, h, w], data)
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(batch, channels, height, width)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(format!(
                "expected rank 4, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn fill(&mut self, value: F) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| G::lit(v.to_f64().expect("finite")))
                .collect(),
        }
    }

    /// Concatenates two rank-4 tensors along the channel axis.
    pub fn concat_channels(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, ca, h, w) = a.dims4()?;
        let (nb, cb, hb, wb) = b.dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::shape(format!(
                "cannot concatenate {:?} with {:?}",
                a.shape, b.shape
            )));
        }
        let (sa, sb) = (ca * h * w, cb * h * w);
        let mut data = Vec::with_capacity(n * (sa + sb));
        for i in 0..n {
            data.extend_from_slice(&a.data[i * sa..(i + 1) * sa]);
            data.extend_from_slice(&b.data[i * sb..(i + 1) * sb]);
        }
        Tensor::from_vec(&[n, ca + cb, h, w], data)
    }

    /// Splits off channels `[at..]` of a rank-4 tensor.
    pub fn channels_from(&self, at: usize) -> Result<Tensor<F>> {
        let (n, c, h, w) = self.dims4()?;
        if at > c {
            return Err(Error::shape(format!("channel {at} beyond {c}")));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (c - at) * plane);
        for i in 0..n {
            let base = i * c * plane;
            data.extend_from_slice(&self.data[base + at * plane..base + c * plane]);
        }
        Tensor::from_vec(&[n, c - at, h, w], data)
    }

    /// Slice of sample `i` in a rank-4 batch.
    pub fn sample(&self, i: usize) -> &[F] {
        let per = self.data.len() / self.shape[0];
        &self.data[i * per..(i + 1) * per]
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<F = f32> {
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub adam_m: Tensor<F>,
    pub adam_v: Tensor<F>,
    pub step_count: u64,
    /// Frozen parameters accumulate no gradient and are skipped by Adam.
    pub frozen: bool,
}

impl<F: Real> Parameter<F> {
    pub fn new(value: Tensor<F>) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            step_count: 0,
            frozen: false,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn reset_optimizer(&mut self) {
        self.adam_m.fill(F::zero());
        self.adam_v.fill(F::zero());
        self.step_count = 0;
    }

    /// Drops gradients and optimizer moments.
    pub fn clear_training_state(&mut self) {
        self.zero_grad();
        self.reset_optimizer();
    }

    pub fn cast<G: Real>(&self) -> Parameter<G> {
        Parameter {
            value: self.value.cast(),
            grad: self.grad.cast(),
            adam_m: self.adam_m.cast(),
            adam_v: self.adam_v.cast(),
            step_count: self.step_count,
            frozen: self.frozen,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Deconv,
    Batchnorm,
    Relu,
    Sigmoid,
    Softmax,
}

/// Static description of one layer, recorded in model files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }

    pub fn deconv(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Deconv,
            in_channels,
            out_channels,
            kernel: 2,
            stride: 2,
            padding: 0,
        }
    }

    pub fn pointwise(kind: LayerKind, channels: usize) -> Self {
        LayerSpec {
            kind,
            in_channels: channels,
            out_channels: channels,
            kernel: 1,
            stride: 1,
            padding: 0,
        }
    }

    /// Output spatial extent for an input extent.
    pub fn output_extent(&self, input: usize) -> usize {
        match self.kind {
            LayerKind::Conv => (input + 2 * self.padding - self.kernel) / self.stride + 1,
            LayerKind::Deconv => (input - 1) * self.stride + self.kernel - 2 * self.padding,
            _ => input,
        }
    }
}

/// He-uniform bound for a given fan-in.
pub(crate) fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| v as f64 * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        gemm(Mat::new(&a, 2, 3), Mat::new(&b, 3, 4), 0.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let naive: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], naive);
            }
        }
        // a^T (3x2) * a (2x3)
        let mut d = vec![0.0; 9];
        gemm(Mat::t(&a, 2, 3), Mat::new(&a, 2, 3), 0.0, &mut d);
        assert_eq!(d[0], 0.0 * 0.0 + 3.0 * 3.0);
        assert_eq!(d[5], 1.0 * 2.0 + 4.0 * 5.0);
    }

    #[test]
    fn concat_and_split_channels() {
        let a = Tensor::<f32>::filled(&[2, 1, 2, 2], 1.0);
        let b = Tensor::<f32>::filled(&[2, 3, 2, 2], 2.0);
        let ab = Tensor::concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), &[2, 4, 2, 2]);
        assert_eq!(&ab.sample(1)[..4], &[1.0; 4]);
        assert_eq!(ab.channels_from(1).unwrap(), b);
        assert!(Tensor::concat_channels(&a, &Tensor::zeros(&[1, 1, 2, 2])).is_err());
    }

    #[test]
    fn shape_algebra() {
        assert_eq!(LayerSpec::conv(7, 16).output_extent(8), 8);
        assert_eq!(LayerSpec::deconv(16, 1).output_extent(8), 16);
        assert_eq!(LayerSpec::deconv(16, 1).output_extent(4), 8);
    }
}
