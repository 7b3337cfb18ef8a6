//! 3x3, stride 1, zero-padding 1 convolution via im2col + GEMM.

use rand::Rng;

use super::{gemm, he_limit, LayerSpec, Mat, Parameter, Real, Tensor};
use crate::error::{Error, Result};

const K: usize = 3;
const TAPS: usize = K * K;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<F: Real = f32> {
    /// `[out, in, 3, 3]`
    pub weight: Parameter<F>,
    /// `[out]`
    pub bias: Parameter<F>,
}

/// Saved im2col columns of a forward pass.
#[derive(Debug, Clone)]
pub struct ConvTrace<F> {
    cols: Vec<F>,
    shape: [usize; 4],
}

impl<F: Real> Conv2d<F> {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let limit = he_limit(in_channels * TAPS);
        Conv2d {
            weight: Parameter::new(Tensor::random_uniform(
                &[out_channels, in_channels, K, K],
                limit,
                rng,
            )),
            bias: Parameter::new(Tensor::zeros(&[out_channels])),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::conv(self.in_channels(), self.out_channels())
    }

    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        conv2d_forward(input, &self.weight, &self.bias)
    }

    pub fn forward_trace(&self, input: &Tensor<F>) -> Result<(Tensor<F>, ConvTrace<F>)> {
        let (n, c, h, w) = check_input(input, &self.weight)?;
        let o = self.out_channels();
        let (hw, k) = (h * w, c * TAPS);
        let mut cols = vec![F::zero(); n * k * hw];
        let mut out = Tensor::zeros(&[n, o, h, w]);
        for i in 0..n {
            let col = &mut cols[i * k * hw..(i + 1) * k * hw];
            im2col(input.sample(i), c, h, w, col);
            forward_sample(
                self,
                col,
                &mut out.data_mut()[i * o * hw..(i + 1) * o * hw],
                k,
                hw,
            );
        }
        Ok((
            out,
            ConvTrace {
                cols,
                shape: [n, c, h, w],
            },
        ))
    }

    /// Accumulates parameter gradients (unless frozen) and optionally returns
    /// the gradient with respect to the input.
    pub fn backward(
        &mut self,
        trace: &ConvTrace<F>,
        grad_out: &Tensor<F>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<F>>> {
        let [n, c, h, w] = trace.shape;
        let o = self.out_channels();
        if grad_out.shape() != [n, o, h, w] {
            return Err(Error::shape(format!(
                "conv gradient {:?} does not match output [{n}, {o}, {h}, {w}]",
                grad_out.shape()
            )));
        }
        let (hw, k) = (h * w, c * TAPS);
        let mut grad_in = want_input_grad.then(|| Tensor::zeros(&[n, c, h, w]));
        let mut dcols = vec![F::zero(); k * hw];
        for i in 0..n {
            let dout = grad_out.sample(i);
            let col = &trace.cols[i * k * hw..(i + 1) * k * hw];
            if !self.weight.frozen {
                // dW (o x k) += dout (o x hw) * col^T (hw x k)
                gemm(
                    Mat::new(dout, o, hw),
                    Mat::t(col, k, hw),
                    F::one(),
                    self.weight.grad.data_mut(),
                );
                for (oc, g) in self.bias.grad.data_mut().iter_mut().enumerate() {
                    *g += dout[oc * hw..(oc + 1) * hw].iter().copied().sum();
                }
            }
            if let Some(gi) = grad_in.as_mut() {
                // dcols (k x hw) = W^T (k x o) * dout (o x hw)
                gemm(
                    Mat::t(self.weight.value.data(), o, k),
                    Mat::new(dout, o, hw),
                    F::zero(),
                    &mut dcols,
                );
                let per = c * hw;
                col2im(&dcols, c, h, w, &mut gi.data_mut()[i * per..(i + 1) * per]);
            }
        }
        Ok(grad_in)
    }
}

fn check_input<F: Real>(
    input: &Tensor<F>,
    weight: &Parameter<F>,
) -> Result<(usize, usize, usize, usize)> {
    let (n, c, h, w) = input.dims4()?;
    let expected = weight.value.shape()[1];
    if c != expected {
        return Err(Error::shape(format!(
            "conv expects {expected} input channels, got {c}"
        )));
    }
    Ok((n, c, h, w))
}

fn forward_sample<F: Real>(conv: &Conv2d<F>, col: &[F], out: &mut [F], k: usize, hw: usize) {
    let o = conv.out_channels();
    for (oc, &b) in conv.bias.value.data().iter().enumerate() {
        out[oc * hw..(oc + 1) * hw].iter_mut().for_each(|v| *v = b);
    }
    gemm(
        Mat::new(conv.weight.value.data(), o, k),
        Mat::new(col, k, hw),
        F::one(),
        out,
    );
}

/// Output has the input's spatial extents; `out[o] = bias[o] + sum(in * kernel)`.
pub fn conv2d_forward<F: Real>(
    input: &Tensor<F>,
    weight: &Parameter<F>,
    bias: &Parameter<F>,
) -> Result<Tensor<F>> {
    let (n, c, h, w) = check_input(input, weight)?;
    let o = weight.value.shape()[0];
    if bias.value.len() != o {
        return Err(Error::shape(
            "conv bias length differs from output channels",
        ));
    }
    let (hw, k) = (h * w, c * TAPS);
    let mut col = vec![F::zero(); k * hw];
    let mut out = Tensor::zeros(&[n, o, h, w]);
    for i in 0..n {
        im2col(input.sample(i), c, h, w, &mut col);
        let dst = &mut out.data_mut()[i * o * hw..(i + 1) * o * hw];
        for (oc, &b) in bias.value.data().iter().enumerate() {
            dst[oc * hw..(oc + 1) * hw].iter_mut().for_each(|v| *v = b);
        }
        gemm(
            Mat::new(weight.value.data(), o, k),
            Mat::new(&col, k, hw),
            F::one(),
            dst,
        );
    }
    Ok(out)
}

/// `col[(c*9 + ky*3 + kx), y*w + x] = input[c, y+ky-1, x+kx-1]` (0 outside).
fn im2col<F: Real>(input: &[F], c: usize, h: usize, w: usize, col: &mut [F]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut col[(ch * TAPS + ky * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = F::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + kx as isize - 1;
                        *d = if sx < 0 || sx >= w as isize {
                            F::zero()
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<F: Real>(col: &[F], c: usize, h: usize, w: usize, out: &mut [F]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &col[(ch * TAPS + ky * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize] += row[y * w + x];
                        }
                    }
                }
            }
        }
    }
}
