use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::PROCESSED_CHANNELS;
use super::network::{cast_conv, cast_deconv};
use super::SoftmaxModel;
use crate::error::{Error, Result};
use crate::tensor::{
    activation_backward, activation_forward, Activation, Conv2d, ConvTrace, Deconv2d, DeconvTrace,
    LayerKind, LayerSpec, Parameter, Real, Tensor,
};
use crate::tile::TILE_COUNT;

/// Plain convolutional upscaler: two 3x3 convs with ReLU and a 2x2 deconv
/// to a 7-channel softmax, read out by per-cell argmax.
#[derive(Debug, Clone)]
pub struct ConvBaseline<F: Real = f32> {
    pub conv1: Conv2d<F>,
    pub conv2: Conv2d<F>,
    pub deconv: Deconv2d<F>,
    input_size: usize,
    trace: Option<BaselineTrace<F>>,
}

#[derive(Debug, Clone)]
struct BaselineTrace<F> {
    conv1: ConvTrace<F>,
    hidden1: Tensor<F>,
    conv2: ConvTrace<F>,
    hidden2: Tensor<F>,
    deconv: DeconvTrace<F>,
    probs: Tensor<F>,
}

impl<F: Real> PartialEq for ConvBaseline<F> {
    fn eq(&self, other: &Self) -> bool {
        self.conv1 == other.conv1
            && self.conv2 == other.conv2
            && self.deconv == other.deconv
            && self.input_size == other.input_size
    }
}

impl<F: Real> ConvBaseline<F> {
    pub fn new(input_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ConvBaseline {
            conv1: Conv2d::new(TILE_COUNT, PROCESSED_CHANNELS, &mut rng),
            conv2: Conv2d::new(PROCESSED_CHANNELS, PROCESSED_CHANNELS, &mut rng),
            deconv: Deconv2d::new(PROCESSED_CHANNELS, TILE_COUNT, &mut rng),
            input_size,
            trace: None,
        }
    }

    pub fn from_parts(
        conv1: Conv2d<F>,
        conv2: Conv2d<F>,
        deconv: Deconv2d<F>,
        input_size: usize,
    ) -> Result<Self> {
        if conv1.in_channels() != TILE_COUNT
            || conv2.in_channels() != conv1.out_channels()
            || deconv.in_channels() != conv2.out_channels()
            || deconv.out_channels() != TILE_COUNT
        {
            return Err(Error::shape("baseline layers do not chain"));
        }
        Ok(ConvBaseline {
            conv1,
            conv2,
            deconv,
            input_size,
            trace: None,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        2 * self.input_size
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        vec![
            self.conv1.spec(),
            LayerSpec::pointwise(LayerKind::Relu, self.conv1.out_channels()),
            self.conv2.spec(),
            LayerSpec::pointwise(LayerKind::Relu, self.conv2.out_channels()),
            self.deconv.spec(),
            LayerSpec::pointwise(LayerKind::Softmax, TILE_COUNT),
        ]
    }

    fn check_input(&self, user: &Tensor<F>) -> Result<()> {
        let (_, c, h, w) = user.dims4()?;
        if c != TILE_COUNT || h != self.input_size || w != self.input_size {
            return Err(Error::shape(format!(
                "baseline expects [_, {TILE_COUNT}, {s}, {s}] input, got {:?}",
                user.shape(),
                s = self.input_size
            )));
        }
        Ok(())
    }

    pub fn forward_batch(&self, user: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(user)?;
        let h1 = activation_forward(&self.conv1.forward(user)?, Activation::Relu)?;
        let h2 = activation_forward(&self.conv2.forward(&h1)?, Activation::Relu)?;
        activation_forward(&self.deconv.forward(&h2)?, Activation::Softmax)
    }

    pub fn cast<G: Real>(&self) -> ConvBaseline<G> {
        ConvBaseline {
            conv1: cast_conv(&self.conv1),
            conv2: cast_conv(&self.conv2),
            deconv: cast_deconv(&self.deconv),
            input_size: self.input_size,
            trace: None,
        }
    }
}

impl<F: Real> SoftmaxModel<F> for ConvBaseline<F> {
    fn input_size(&self) -> usize {
        self.input_size
    }

    fn predict(&self, user: &Tensor<F>) -> Result<Tensor<F>> {
        self.forward_batch(user)
    }

    fn forward_train(&mut self, user: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(user)?;
        let (z1, conv1) = self.conv1.forward_trace(user)?;
        let hidden1 = activation_forward(&z1, Activation::Relu)?;
        let (z2, conv2) = self.conv2.forward_trace(&hidden1)?;
        let hidden2 = activation_forward(&z2, Activation::Relu)?;
        let (logits, deconv) = self.deconv.forward_trace(&hidden2)?;
        let probs = activation_forward(&logits, Activation::Softmax)?;
        self.trace = Some(BaselineTrace {
            conv1,
            hidden1,
            conv2,
            hidden2,
            deconv,
            probs: probs.clone(),
        });
        Ok(probs)
    }

    fn backward(&mut self, loss_grad: &Tensor<F>) -> Result<()> {
        let t = self
            .trace
            .take()
            .ok_or_else(|| Error::State("backward called before a training forward pass".into()))?;
        let g = activation_backward(&t.probs, loss_grad, Activation::Softmax)?;
        let g = self
            .deconv
            .backward(&t.deconv, &g, true)?
            .expect("requested");
        let g = activation_backward(&t.hidden2, &g, Activation::Relu)?;
        let g = self.conv2.backward(&t.conv2, &g, true)?.expect("requested");
        let g = activation_backward(&t.hidden1, &g, Activation::Relu)?;
        self.conv1.backward(&t.conv1, &g, false)?;
        Ok(())
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.deconv.weight,
            &mut self.deconv.bias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LevelGrid;
    use crate::scalenet::argmax_interpret;

    #[test]
    fn output_is_twice_the_input() {
        let model = ConvBaseline::<f32>::new(4, 0);
        let g = LevelGrid::from_rows(&["b.#-", "BBGE", "....", "bbbb"]).unwrap();
        let probs = model
            .forward_batch(&Tensor::from_one_hot(&[&g.one_hot()]).unwrap())
            .unwrap();
        assert_eq!(probs.shape(), [1, 7, 8, 8]);
        let grid = argmax_interpret(probs.data(), 8, 8, None).unwrap();
        assert_eq!((grid.width(), grid.height()), (8, 8));
    }

    #[test]
    fn wrong_parts_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = ConvBaseline::<f32>::from_parts(
            Conv2d::new(7, 16, &mut rng),
            Conv2d::new(8, 16, &mut rng),
            Deconv2d::new(16, 7, &mut rng),
            4,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn backward_before_forward_fails() {
        let mut model = ConvBaseline::<f32>::new(4, 0);
        assert!(matches!(
            SoftmaxModel::backward(&mut model, &Tensor::zeros(&[1, 7, 8, 8])),
            Err(Error::State(_))
        ));
    }
}
