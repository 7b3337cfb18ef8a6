use rand::Rng;

use crate::error::Result;
use crate::tensor::{
    activation_backward, activation_forward, Activation, BatchNorm2d, BatchNormTrace, Conv2d,
    ConvTrace, Deconv2d, DeconvTrace, LayerKind, LayerSpec, Parameter, Real, Tensor,
};
use crate::tile::{Tile, TILE_COUNT};

/// Channels of the processed tensor passed from layer to layer.
pub const PROCESSED_CHANNELS: usize = 16;

/// Channels a scale layer consumes: the one-hot user input followed by the
/// processed input.
pub const LAYER_INPUT_CHANNELS: usize = TILE_COUNT + PROCESSED_CHANNELS;

/// One block of the layer scaling network.
///
/// ```text
/// [user | processed] -> conv1 -> relu -> conv2 -> relu -+-> batchnorm -> processed out
///                                                       +-> deconv -> sigmoid -> scaled out
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleLayer<F: Real = f32> {
    pub tile: Tile,
    pub conv1: Conv2d<F>,
    pub conv2: Conv2d<F>,
    pub bn: BatchNorm2d<F>,
    pub deconv: Deconv2d<F>,
}

#[derive(Debug, Clone)]
pub struct ScaleTrace<F> {
    conv1: ConvTrace<F>,
    hidden1: Tensor<F>,
    conv2: ConvTrace<F>,
    hidden2: Tensor<F>,
    bn: BatchNormTrace<F>,
    deconv: DeconvTrace<F>,
    scaled: Tensor<F>,
}

impl<F: Real> ScaleLayer<F> {
    pub fn new(tile: Tile, rng: &mut impl Rng) -> Self {
        ScaleLayer {
            tile,
            conv1: Conv2d::new(LAYER_INPUT_CHANNELS, PROCESSED_CHANNELS, rng),
            conv2: Conv2d::new(PROCESSED_CHANNELS, PROCESSED_CHANNELS, rng),
            bn: BatchNorm2d::new(PROCESSED_CHANNELS),
            deconv: Deconv2d::new(PROCESSED_CHANNELS, 1, rng),
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        vec![
            self.conv1.spec(),
            LayerSpec::pointwise(LayerKind::Relu, PROCESSED_CHANNELS),
            self.conv2.spec(),
            LayerSpec::pointwise(LayerKind::Relu, PROCESSED_CHANNELS),
            self.bn.spec(),
            self.deconv.spec(),
            LayerSpec::pointwise(LayerKind::Sigmoid, 1),
        ]
    }

    /// Inference pass. Returns `(scaled, processed)`.
    pub fn forward(
        &self,
        user: &Tensor<F>,
        processed: &Tensor<F>,
    ) -> Result<(Tensor<F>, Tensor<F>)> {
        let x = Tensor::concat_channels(user, processed)?;
        let h1 = activation_forward(&self.conv1.forward(&x)?, Activation::Relu)?;
        let h2 = activation_forward(&self.conv2.forward(&h1)?, Activation::Relu)?;
        let processed_out = self.bn.forward(&h2)?;
        let scaled = activation_forward(&self.deconv.forward(&h2)?, Activation::Sigmoid)?;
        Ok((scaled, processed_out))
    }

    /// Training pass: batch statistics, running statistics updated.
    pub fn forward_train(
        &mut self,
        user: &Tensor<F>,
        processed: &Tensor<F>,
    ) -> Result<(Tensor<F>, Tensor<F>, ScaleTrace<F>)> {
        let x = Tensor::concat_channels(user, processed)?;
        let (z1, conv1) = self.conv1.forward_trace(&x)?;
        let hidden1 = activation_forward(&z1, Activation::Relu)?;
        let (z2, conv2) = self.conv2.forward_trace(&hidden1)?;
        let hidden2 = activation_forward(&z2, Activation::Relu)?;
        let (processed_out, bn) = self.bn.forward_train(&hidden2)?;
        let (logits, deconv) = self.deconv.forward_trace(&hidden2)?;
        let scaled = activation_forward(&logits, Activation::Sigmoid)?;
        let trace = ScaleTrace {
            conv1,
            hidden1,
            conv2,
            hidden2,
            bn,
            deconv,
            scaled: scaled.clone(),
        };
        Ok((scaled, processed_out, trace))
    }

    /// Backpropagates gradients arriving at either output. Returns the
    /// gradient with respect to the processed input when requested.
    pub fn backward(
        &mut self,
        trace: &ScaleTrace<F>,
        grad_scaled: Option<&Tensor<F>>,
        grad_processed: Option<&Tensor<F>>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<F>>> {
        let mut grad_hidden2 = Tensor::zeros(trace.hidden2.shape());
        if let Some(g) = grad_processed {
            grad_hidden2.add_assign(&self.bn.backward(&trace.bn, g)?);
        }
        if let Some(g) = grad_scaled {
            let g_logits = activation_backward(&trace.scaled, g, Activation::Sigmoid)?;
            let g = self
                .deconv
                .backward(&trace.deconv, &g_logits, true)?
                .expect("requested");
            grad_hidden2.add_assign(&g);
        }
        let g_z2 = activation_backward(&trace.hidden2, &grad_hidden2, Activation::Relu)?;
        let g_h1 = self
            .conv2
            .backward(&trace.conv2, &g_z2, true)?
            .expect("requested");
        let g_z1 = activation_backward(&trace.hidden1, &g_h1, Activation::Relu)?;
        let g_x = self.conv1.backward(&trace.conv1, &g_z1, want_input_grad)?;
        g_x.map(|g| g.channels_from(TILE_COUNT)).transpose()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn.gamma,
            &mut self.bn.beta,
            &mut self.deconv.weight,
            &mut self.deconv.bias,
        ]
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for p in self.params_mut() {
            p.frozen = frozen;
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.conv1.weight.frozen
    }
}

/// Temporary 7-channel softmax output used during base training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHead<F: Real = f32> {
    pub deconv: Deconv2d<F>,
}

impl<F: Real> TrainingHead<F> {
    pub fn new(rng: &mut impl Rng) -> Self {
        TrainingHead {
            deconv: Deconv2d::new(PROCESSED_CHANNELS, TILE_COUNT, rng),
        }
    }

    pub fn forward(&self, processed: &Tensor<F>) -> Result<Tensor<F>> {
        activation_forward(&self.deconv.forward(processed)?, Activation::Softmax)
    }
}
