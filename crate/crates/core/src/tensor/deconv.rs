//! 2x2, stride 2 transposed convolution: every input cell expands into a
//! disjoint 2x2 output block, so spatial extents exactly double.

use rand::Rng;

use super::{gemm, he_limit, LayerSpec, Mat, Parameter, Real, Tensor};
use crate::error::{Error, Result};

const TAPS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Deconv2d<F: Real = f32> {
    /// `[in, out, 2, 2]`
    pub weight: Parameter<F>,
    /// `[out]`
    pub bias: Parameter<F>,
}

#[derive(Debug, Clone)]
pub struct DeconvTrace<F> {
    input: Tensor<F>,
}

impl<F: Real> Deconv2d<F> {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        // Each output cell receives exactly one tap per input channel.
        let limit = he_limit(in_channels);
        Deconv2d {
            weight: Parameter::new(Tensor::random_uniform(
                &[in_channels, out_channels, 2, 2],
                limit,
                rng,
            )),
            bias: Parameter::new(Tensor::zeros(&[out_channels])),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::deconv(self.in_channels(), self.out_channels())
    }

    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        deconv2d_forward(input, &self.weight, &self.bias)
    }

    pub fn forward_trace(&self, input: &Tensor<F>) -> Result<(Tensor<F>, DeconvTrace<F>)> {
        let out = self.forward(input)?;
        Ok((
            out,
            DeconvTrace {
                input: input.clone(),
            },
        ))
    }

    pub fn backward(
        &mut self,
        trace: &DeconvTrace<F>,
        grad_out: &Tensor<F>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<F>>> {
        let (n, c, h, w) = trace.input.dims4()?;
        let o = self.out_channels();
        if grad_out.shape() != [n, o, 2 * h, 2 * w] {
            return Err(Error::shape(format!(
                "deconv gradient {:?} does not match output [{n}, {o}, {}, {}]",
                grad_out.shape(),
                2 * h,
                2 * w
            )));
        }
        let hw = h * w;
        let rows = o * TAPS;
        let mut dcols = vec![F::zero(); rows * hw];
        let mut grad_in = want_input_grad.then(|| Tensor::zeros(&[n, c, h, w]));
        for i in 0..n {
            let dout = grad_out.sample(i);
            gather(dout, o, h, w, &mut dcols);
            if !self.weight.frozen {
                gemm(
                    Mat::new(trace.input.sample(i), c, hw),
                    Mat::t(&dcols, rows, hw),
                    F::one(),
                    self.weight.grad.data_mut(),
                );
                let plane = 4 * hw;
                for (oc, g) in self.bias.grad.data_mut().iter_mut().enumerate() {
                    *g += dout[oc * plane..(oc + 1) * plane].iter().copied().sum();
                }
            }
            if let Some(gi) = grad_in.as_mut() {
                gemm(
                    Mat::new(self.weight.value.data(), c, rows),
                    Mat::new(&dcols, rows, hw),
                    F::zero(),
                    &mut gi.data_mut()[i * c * hw..(i + 1) * c * hw],
                );
            }
        }
        Ok(grad_in)
    }
}

/// `out[o, 2y+dy, 2x+dx] = bias[o] + sum_c in[c, y, x] * w[c, o, dy, dx]`.
pub fn deconv2d_forward<F: Real>(
    input: &Tensor<F>,
    weight: &Parameter<F>,
    bias: &Parameter<F>,
) -> Result<Tensor<F>> {
    let (n, c, h, w) = input.dims4()?;
    let wshape = weight.value.shape();
    if wshape.len() != 4 || wshape[0] != c || wshape[2] != 2 || wshape[3] != 2 {
        return Err(Error::shape(format!(
            "deconv weight {wshape:?} does not accept {c} input channels"
        )));
    }
    let o = wshape[1];
    if bias.value.len() != o {
        return Err(Error::shape(
            "deconv bias length differs from output channels",
        ));
    }
    let hw = h * w;
    let rows = o * TAPS;
    let mut cols = vec![F::zero(); rows * hw];
    let mut out = Tensor::zeros(&[n, o, 2 * h, 2 * w]);
    for i in 0..n {
        gemm(
            Mat::t(weight.value.data(), c, rows),
            Mat::new(input.sample(i), c, hw),
            F::zero(),
            &mut cols,
        );
        let dst = &mut out.data_mut()[i * o * 4 * hw..(i + 1) * o * 4 * hw];
        scatter(&cols, bias.value.data(), o, h, w, dst);
    }
    Ok(out)
}

fn scatter<F: Real>(cols: &[F], bias: &[F], o: usize, h: usize, w: usize, out: &mut [F]) {
    let (hw, ow) = (h * w, 2 * w);
    for oc in 0..o {
        let plane = &mut out[oc * 4 * hw..(oc + 1) * 4 * hw];
        for dy in 0..2 {
            for dx in 0..2 {
                let row = &cols[(oc * TAPS + dy * 2 + dx) * hw..][..hw];
                for y in 0..h {
                    for x in 0..w {
                        plane[(2 * y + dy) * ow + 2 * x + dx] = row[y * w + x] + bias[oc];
                    }
                }
            }
        }
    }
}

fn gather<F: Real>(dout: &[F], o: usize, h: usize, w: usize, cols: &mut [F]) {
    let (hw, ow) = (h * w, 2 * w);
    for oc in 0..o {
        let plane = &dout[oc * 4 * hw..(oc + 1) * 4 * hw];
        for dy in 0..2 {
            for dx in 0..2 {
                let row = &mut cols[(oc * TAPS + dy * 2 + dx) * hw..][..hw];
                for y in 0..h {
                    for x in 0..w {
                        row[y * w + x] = plane[(2 * y + dy) * ow + 2 * x + dx];
                    }
                }
            }
        }
    }
}
