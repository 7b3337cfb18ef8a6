use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::interpret::ProbabilityMap;
use super::layer::{ScaleLayer, ScaleTrace, TrainingHead, PROCESSED_CHANNELS};
use super::SoftmaxModel;
use crate::error::{Error, Result};
use crate::grid::OneHotLevel;
use crate::tensor::{
    activation_backward, activation_forward, Activation, DeconvTrace, Parameter, Real, Tensor,
};
use crate::tile::{Tile, TILE_COUNT};

/// Ordered stack of scale layers, one per non-empty tile, most frequent
/// tile first.
#[derive(Debug, Clone)]
pub struct LayerScalingNetwork<F: Real = f32> {
    layers: Vec<ScaleLayer<F>>,
    input_size: usize,
    head: Option<TrainingHead<F>>,
    trace: Option<NetTrace<F>>,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum NetTrace<F> {
    Head {
        layers: Vec<ScaleTrace<F>>,
        head: DeconvTrace<F>,
        probs: Tensor<F>,
    },
    Layer {
        index: usize,
        trace: ScaleTrace<F>,
    },
}

/// Outputs of one inference pass over a batch.
#[derive(Debug, Clone)]
pub struct ScaleOutputs<F = f32> {
    /// One `[n, 1, 2h, 2w]` sigmoid map per layer, in layer order.
    pub scaled: Vec<Tensor<F>>,
    /// Processed output of the last layer, `[n, 16, h, w]`.
    pub processed: Tensor<F>,
}

impl<F: Real> PartialEq for LayerScalingNetwork<F> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.input_size == other.input_size
            && self.head == other.head
    }
}

impl<F: Real> LayerScalingNetwork<F> {
    /// Builds a freshly initialized network for `tile_order`, which must list
    /// every non-empty tile exactly once.
    pub fn new(tile_order: &[Tile], input_size: usize, seed: u64) -> Result<Self> {
        validate_tile_order(tile_order)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = tile_order
            .iter()
            .map(|&t| ScaleLayer::new(t, &mut rng))
            .collect();
        Self::from_layers(layers, input_size)
    }

    pub fn from_layers(layers: Vec<ScaleLayer<F>>, input_size: usize) -> Result<Self> {
        let order: Vec<Tile> = layers.iter().map(|l| l.tile).collect();
        validate_tile_order(&order)?;
        if input_size == 0 {
            return Err(Error::invalid("input size must be positive"));
        }
        Ok(LayerScalingNetwork {
            layers,
            input_size,
            head: None,
            trace: None,
        })
    }

    pub fn layers(&self) -> &[ScaleLayer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ScaleLayer<F>] {
        &mut self.layers
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [ScaleLayer<F>], Option<&mut TrainingHead<F>>) {
        (&mut self.layers, self.head.as_mut())
    }

    pub fn tile_order(&self) -> Vec<Tile> {
        self.layers.iter().map(|l| l.tile).collect()
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        2 * self.input_size
    }

    pub fn head(&self) -> Option<&TrainingHead<F>> {
        self.head.as_ref()
    }

    pub fn attach_head(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.head = Some(TrainingHead::new(&mut rng));
    }

    pub fn set_head(&mut self, head: Option<TrainingHead<F>>) {
        self.head = head;
    }

    pub fn remove_head(&mut self) -> Option<TrainingHead<F>> {
        self.trace = None;
        self.head.take()
    }

    fn check_input(&self, user: &Tensor<F>) -> Result<usize> {
        let (n, c, h, w) = user.dims4()?;
        if c != TILE_COUNT || h != self.input_size || w != self.input_size {
            return Err(Error::shape(format!(
                "network expects [_, {TILE_COUNT}, {s}, {s}] input, got {:?}",
                user.shape(),
                s = self.input_size
            )));
        }
        Ok(n)
    }

    fn zero_processed(&self, n: usize) -> Tensor<F> {
        Tensor::zeros(&[n, PROCESSED_CHANNELS, self.input_size, self.input_size])
    }

    /// Inference over a `[n, 7, s, s]` batch.
    pub fn forward_batch(&self, user: &Tensor<F>) -> Result<ScaleOutputs<F>> {
        let n = self.check_input(user)?;
        self.run_layers(user, self.zero_processed(n), self.layers.len())
    }

    /// Inference with an explicit placeholder for the first layer's
    /// processed input. The first layer consumes only the user input, so the
    /// placeholder is replaced by zeros and never reaches the computation.
    pub fn forward_with_placeholder(
        &self,
        user: &Tensor<F>,
        placeholder: &Tensor<F>,
    ) -> Result<ScaleOutputs<F>> {
        let n = self.check_input(user)?;
        if placeholder.shape() != [n, PROCESSED_CHANNELS, self.input_size, self.input_size] {
            return Err(Error::shape(
                "placeholder does not match the processed input shape",
            ));
        }
        self.run_layers(user, self.zero_processed(n), self.layers.len())
    }

    fn run_layers(
        &self,
        user: &Tensor<F>,
        mut processed: Tensor<F>,
        count: usize,
    ) -> Result<ScaleOutputs<F>> {
        let mut scaled = Vec::with_capacity(count);
        for layer in &self.layers[..count] {
            let (s, p) = layer.forward(user, &processed)?;
            scaled.push(s);
            processed = p;
        }
        Ok(ScaleOutputs { scaled, processed })
    }

    /// Processed input seen by layer `index` (zeros for the first layer).
    pub fn processed_input(&self, user: &Tensor<F>, index: usize) -> Result<Tensor<F>> {
        let n = self.check_input(user)?;
        Ok(self
            .run_layers(user, self.zero_processed(n), index)?
            .processed)
    }

    /// Head softmax probabilities, `[n, 7, 2s, 2s]`.
    pub fn head_probs(&self, user: &Tensor<F>) -> Result<Tensor<F>> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::State("network has no training head".into()))?;
        head.forward(&self.forward_batch(user)?.processed)
    }

    /// Training pass through every layer and the head; records a trace.
    pub fn forward_train_head(&mut self, user: &Tensor<F>) -> Result<Tensor<F>> {
        let n = self.check_input(user)?;
        if self.head.is_none() {
            return Err(Error::State("base training needs a training head".into()));
        }
        let mut processed = self.zero_processed(n);
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (_, p, trace) = layer.forward_train(user, &processed)?;
            traces.push(trace);
            processed = p;
        }
        let head = self.head.as_ref().expect("checked");
        let (logits, head_trace) = head.deconv.forward_trace(&processed)?;
        let probs = activation_forward(&logits, Activation::Softmax)?;
        self.trace = Some(NetTrace::Head {
            layers: traces,
            head: head_trace,
            probs: probs.clone(),
        });
        Ok(probs)
    }

    /// Training pass of a single layer given its processed input; records a
    /// trace. Returns the layer's scaled output.
    pub fn forward_train_layer(
        &mut self,
        index: usize,
        user: &Tensor<F>,
        processed: &Tensor<F>,
    ) -> Result<Tensor<F>> {
        self.check_input(user)?;
        let layer = self
            .layers
            .get_mut(index)
            .ok_or_else(|| Error::invalid(format!("no layer {index}")))?;
        let (scaled, _, trace) = layer.forward_train(user, processed)?;
        self.trace = Some(NetTrace::Layer { index, trace });
        Ok(scaled)
    }

    /// Backpropagates the loss gradient of the most recent training pass
    /// into the parameter gradients. Frozen parameters are left untouched.
    pub fn backward(&mut self, loss_grad: &Tensor<F>) -> Result<()> {
        let trace = self
            .trace
            .take()
            .ok_or_else(|| Error::State("backward called before a training forward pass".into()))?;
        match trace {
            NetTrace::Head {
                layers,
                head,
                probs,
            } => {
                let g_logits = activation_backward(&probs, loss_grad, Activation::Softmax)?;
                let head_layer = self
                    .head
                    .as_mut()
                    .ok_or_else(|| Error::State("training head was removed".into()))?;
                let mut grad = head_layer
                    .deconv
                    .backward(&head, &g_logits, true)?
                    .expect("requested");
                for (i, (layer, trace)) in self.layers.iter_mut().zip(&layers).enumerate().rev() {
                    match layer.backward(trace, None, Some(&grad), i > 0)? {
                        Some(g) => grad = g,
                        None => break,
                    }
                }
            }
            NetTrace::Layer { index, trace } => {
                self.layers[index].backward(&trace, Some(loss_grad), None, false)?;
            }
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut params: Vec<&mut Parameter<F>> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect();
        if let Some(head) = self.head.as_mut() {
            params.push(&mut head.deconv.weight);
            params.push(&mut head.deconv.bias);
        }
        params
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Sigmoid maps of one level, one per layer.
    pub fn probability_maps(&self, input: &OneHotLevel) -> Result<Vec<ProbabilityMap>> {
        self.forward(input).map(|(maps, _)| maps)
    }

    /// Maps plus final processed tensor for one level.
    pub fn forward(&self, input: &OneHotLevel) -> Result<(Vec<ProbabilityMap>, Tensor<F>)> {
        let user = Tensor::from_one_hot(&[input])?;
        let out = self.forward_batch(&user)?;
        let size = self.output_size();
        let maps = out
            .scaled
            .iter()
            .map(|t| {
                ProbabilityMap::new(
                    size,
                    size,
                    t.data().iter().map(|v| v.to_f32().unwrap_or(0.0)).collect(),
                )
            })
            .collect();
        Ok((maps, out.processed))
    }

    pub fn cast<G: Real>(&self) -> LayerScalingNetwork<G> {
        LayerScalingNetwork {
            layers: self.layers.iter().map(cast_layer).collect(),
            input_size: self.input_size,
            head: self.head.as_ref().map(|h| TrainingHead {
                deconv: cast_deconv(&h.deconv),
            }),
            trace: None,
        }
    }
}

impl<F: Real> SoftmaxModel<F> for LayerScalingNetwork<F> {
    fn input_size(&self) -> usize {
        self.input_size
    }

    fn predict(&self, user: &Tensor<F>) -> Result<Tensor<F>> {
        self.head_probs(user)
    }

    fn forward_train(&mut self, user: &Tensor<F>) -> Result<Tensor<F>> {
        self.forward_train_head(user)
    }

    fn backward(&mut self, loss_grad: &Tensor<F>) -> Result<()> {
        LayerScalingNetwork::backward(self, loss_grad)
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        LayerScalingNetwork::params_mut(self)
    }
}

fn validate_tile_order(order: &[Tile]) -> Result<()> {
    if order.len() != TILE_COUNT - 1 {
        return Err(Error::invalid(format!(
            "a layer scaling network needs {} scale layers, got {}",
            TILE_COUNT - 1,
            order.len()
        )));
    }
    let mut seen = [false; TILE_COUNT];
    for t in order {
        if *t == Tile::Empty || seen[t.index()] {
            return Err(Error::invalid(format!(
                "tile order {order:?} must list each non-empty tile once"
            )));
        }
        seen[t.index()] = true;
    }
    Ok(())
}

pub(crate) fn cast_param<F: Real, G: Real>(p: &Parameter<F>) -> Parameter<G> {
    p.cast()
}

pub(crate) fn cast_deconv<F: Real, G: Real>(
    d: &crate::tensor::Deconv2d<F>,
) -> crate::tensor::Deconv2d<G> {
    crate::tensor::Deconv2d {
        weight: cast_param(&d.weight),
        bias: cast_param(&d.bias),
    }
}

pub(crate) fn cast_conv<F: Real, G: Real>(
    c: &crate::tensor::Conv2d<F>,
) -> crate::tensor::Conv2d<G> {
    crate::tensor::Conv2d {
        weight: cast_param(&c.weight),
        bias: cast_param(&c.bias),
    }
}

fn cast_layer<F: Real, G: Real>(l: &ScaleLayer<F>) -> ScaleLayer<G> {
    let cast = |v: &Vec<F>| {
        v.iter()
            .map(|x| G::lit(x.to_f64().unwrap_or(0.0)))
            .collect()
    };
    ScaleLayer {
        tile: l.tile,
        conv1: cast_conv(&l.conv1),
        conv2: cast_conv(&l.conv2),
        bn: crate::tensor::BatchNorm2d {
            gamma: cast_param(&l.bn.gamma),
            beta: cast_param(&l.bn.beta),
            running_mean: cast(&l.bn.running_mean),
            running_var: cast(&l.bn.running_var),
        },
        deconv: cast_deconv(&l.deconv),
    }
}
