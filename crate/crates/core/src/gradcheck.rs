//! Central finite-difference checks of every hand-written backward pass.
//!
//! Each check builds a small random instance in `f64`, reduces the output to
//! a scalar with fixed random weights, and compares the analytic gradient of
//! every input and parameter tensor against `(f(x + h) - f(x - h)) / 2h`.
//! The elementary layers and losses use `h = 1e-3`. The composite networks
//! use a smaller step and shrink it further at entries where the objective
//! bends sharply. The error of one tensor is
//! `|a - n|_2 / max(|a|_2, |n|_2, 1e-7)` over the checked entries; a check
//! reports the worst tensor.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::scalenet::{
    ConvBaseline, LayerScalingNetwork, ScaleLayer, SoftmaxModel, PROCESSED_CHANNELS,
};
use crate::tensor::{
    activation_backward, activation_forward, loss, Activation, BatchNorm2d, Conv2d, Deconv2d,
    LayerKind, LossKind, Parameter, Tensor,
};
use crate::tile::{Tile, TILE_COUNT};

pub const FINITE_DIFFERENCE_STEP: f64 = 1e-3;
/// Step for the composite networks: a step of 1e-3 on a first-layer weight
/// moves many hidden pre-activations at once, and any that cross a ReLU kink
/// corrupt the difference quotient.
pub const COMPOSITE_STEP: f64 = 1e-6;
pub const GRADIENT_TOLERANCE: f64 = 1e-3;
/// Relative disagreement of the one-sided difference quotients that marks
/// a kink between `x - h` and `x + h`.
pub const KINK_SLOPE_JUMP: f64 = 1e-4;
/// Times the step is divided by ten at an entry whose one-sided quotients
/// disagree.
pub const KINK_REFINEMENTS: usize = 3;
/// A check fails if more than this fraction of its entries never settle.
pub const MAX_SKIPPED_FRACTION: f64 = 0.05;
/// Entries sampled per tensor; smaller tensors are checked exhaustively.
const MAX_ENTRIES: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckTarget {
    Layer(LayerKind),
    Loss(LossKind),
    ScaleLayer,
    NetworkHead,
    NetworkLayer,
    ConvBaseline,
}

impl CheckTarget {
    pub const ALL: [CheckTarget; 12] = [
        CheckTarget::Layer(LayerKind::Conv),
        CheckTarget::Layer(LayerKind::Deconv),
        CheckTarget::Layer(LayerKind::Batchnorm),
        CheckTarget::Layer(LayerKind::Relu),
        CheckTarget::Layer(LayerKind::Sigmoid),
        CheckTarget::Layer(LayerKind::Softmax),
        CheckTarget::Loss(LossKind::CategoricalCrossEntropy),
        CheckTarget::Loss(LossKind::BinaryCrossEntropy),
        CheckTarget::ScaleLayer,
        CheckTarget::NetworkHead,
        CheckTarget::NetworkLayer,
        CheckTarget::ConvBaseline,
    ];

    /// Finite-difference step used for this target.
    /// Composite targets chain ReLUs after batch statistics, so the
    /// objective can be non-differentiable within one step of a sample point.
    pub fn has_kinks(self) -> bool {
        !matches!(self, CheckTarget::Layer(_) | CheckTarget::Loss(_))
    }

    pub fn step(self) -> f64 {
        match self {
            CheckTarget::Layer(_) | CheckTarget::Loss(_) => FINITE_DIFFERENCE_STEP,
            _ => COMPOSITE_STEP,
        }
    }

    pub fn name(self) -> String {
        match self {
            CheckTarget::Layer(k) => format!("{k:?}").to_lowercase(),
            CheckTarget::Loss(LossKind::CategoricalCrossEntropy) => "categorical-ce".into(),
            CheckTarget::Loss(LossKind::BinaryCrossEntropy) => "binary-ce".into(),
            CheckTarget::ScaleLayer => "scale-layer".into(),
            CheckTarget::NetworkHead => "network-head".into(),
            CheckTarget::NetworkLayer => "network-layer".into(),
            CheckTarget::ConvBaseline => "conv-baseline".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub target: CheckTarget,
    pub seed: u64,
    pub step: f64,
    pub max_relative_error: f64,
    pub entries_checked: usize,
    /// Entries left out because the objective has a kink within the
    /// smallest step.
    pub entries_skipped: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= GRADIENT_TOLERANCE
            && self.entries_skipped as f64
                <= MAX_SKIPPED_FRACTION * (self.entries_checked + self.entries_skipped) as f64
    }
}

/// A differentiable scalar function of a list of tensors.
trait Probe: Clone {
    fn tensors(&mut self) -> Vec<&mut Tensor<f64>>;
    fn objective(&self) -> Result<f64>;
    /// Gradients in the order of `tensors`.
    fn analytic(&self) -> Result<Vec<Tensor<f64>>>;
}

fn run<P: Probe>(
    target: CheckTarget,
    seed: u64,
    probe: P,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheck> {
    let step = target.step();
    let analytic = probe.analytic()?;
    let mut worst = 0.0f64;
    let mut entries_checked = 0;
    let mut entries_skipped = 0;
    let mut work = probe.clone();
    let count = work.tensors().len();
    debug_assert_eq!(count, analytic.len());
    for (t, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let entries: Vec<usize> = if len <= MAX_ENTRIES {
            (0..len).collect()
        } else {
            sample(rng, len, MAX_ENTRIES).into_vec()
        };
        let (mut diff, mut a_norm, mut n_norm) = (0.0, 0.0, 0.0);
        for &j in &entries {
            let Some(numeric) = difference_quotient(&mut work, t, j, step, target.has_kinks())?
            else {
                entries_skipped += 1;
                continue;
            };
            let a = grad.data()[j];
            diff += (a - numeric).powi(2);
            a_norm += a * a;
            n_norm += numeric * numeric;
            entries_checked += 1;
        }
        let rel = diff.sqrt() / a_norm.sqrt().max(n_norm.sqrt()).max(1e-7);
        worst = worst.max(rel);
    }
    Ok(GradCheck {
        target,
        seed,
        step,
        max_relative_error: worst,
        entries_checked,
        entries_skipped,
    })
}

/// Central difference of entry `j` of tensor `t`. With `kinks`, the step
/// shrinks by a decade while the one-sided quotients disagree; `None` if
/// they never agree.
fn difference_quotient<P: Probe>(
    work: &mut P,
    t: usize,
    j: usize,
    step: f64,
    kinks: bool,
) -> Result<Option<f64>> {
    let original = work.tensors()[t].data()[j];
    let at = if kinks { work.objective()? } else { 0.0 };
    let mut h = step;
    for _ in 0..=if kinks { KINK_REFINEMENTS } else { 0 } {
        work.tensors()[t].data_mut()[j] = original + h;
        let plus = work.objective()?;
        work.tensors()[t].data_mut()[j] = original - h;
        let minus = work.objective()?;
        work.tensors()[t].data_mut()[j] = original;
        let (forward, backward) = ((plus - at) / h, (at - minus) / h);
        if !kinks
            || (forward - backward).abs()
                <= KINK_SLOPE_JUMP * forward.abs().max(backward.abs()).max(1.0)
        {
            return Ok(Some((plus - minus) / (2.0 * h)));
        }
        h /= 10.0;
    }
    Ok(None)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::random_uniform(shape, 1.0, rng)
}

/// Sum of `weights * output`.
fn weighted(output: &Tensor<f64>, weights: &Tensor<f64>) -> f64 {
    output
        .data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| a * b)
        .sum()
}

fn param_grads(params: Vec<&mut Parameter<f64>>) -> Vec<Tensor<f64>> {
    params.into_iter().map(|p| p.grad.clone()).collect()
}

#[derive(Clone)]
struct ConvProbe {
    x: Tensor<f64>,
    conv: Conv2d<f64>,
    r: Tensor<f64>,
}

impl Probe for ConvProbe {
    fn tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        vec![
            &mut self.x,
            &mut self.conv.weight.value,
            &mut self.conv.bias.value,
        ]
    }
    fn objective(&self) -> Result<f64> {
        Ok(weighted(&self.conv.forward(&self.x)?, &self.r))
    }
    fn analytic(&self) -> Result<Vec<Tensor<f64>>> {
        let mut conv = self.conv.clone();
        let (_, trace) = conv.forward_trace(&self.x)?;
        let gx = conv.backward(&trace, &self.r, true)?.expect("requested");
        Ok(vec![gx, conv.weight.grad, conv.bias.grad])
    }
}

#[derive(Clone)]
struct DeconvProbe {
    x: Tensor<f64>,
    deconv: Deconv2d<f64>,
    r: Tensor<f64>,
}

impl Probe for DeconvProbe {
    fn tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        vec![
            &mut self.x,
            &mut self.deconv.weight.value,
            &mut self.deconv.bias.value,
        ]
    }
    fn objective(&self) -> Result<f64> {
        Ok(weighted(&self.deconv.forward(&self.x)?, &self.r))
    }
    fn analytic(&self) -> Result<Vec<Tensor<f64>>> {
        let mut d = self.deconv.clone();
        let (_, trace) = d.forward_trace(&self.x)?;
        let gx = d.backward(&trace, &self.r, true)?.expect("requested");
        Ok(vec![gx, d.weight.grad, d.bias.grad])
    }
}

#[derive(Clone)]
struct BatchNormProbe {
    x: Tensor<f64>,
    bn: BatchNorm2d<f64>,
    r: Tensor<f64>,
}

impl Probe for BatchNormProbe {
    fn tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        vec![
            &mut self.x,
            &mut self.bn.gamma.value,
            &mut self.bn.beta.value,
        ]
    }
    fn objective(&self) -> Result<f64> {
        Ok(weighted(&self.bn.forward_batch(&self.x)?.0, &self.r))
    }
    fn analytic(&self) -> Result<Vec<Tensor<f64>>> {
        let mut bn = self.bn.clone();
        let (_, trace) = bn.forward_train(&self.x)?;
        let gx = bn.backward(&trace, &self.r)?;
        Ok(vec![gx, bn.gamma.grad, bn.beta.grad])
    }
}

#[derive(Clone)]
struct ActivationProbe {
    x: Tensor<f64>,
    kind: Activation,
    r: Tensor<f64>,
}

impl Probe for ActivationProbe {
    fn tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        vec![&mut self.x]
    }
    fn objective(&self) -> Result<f64> {
        Ok(weighted(&activation_forward(&self.x, self.kind)?, &self.r))
    }
    fn analytic(&self) -> Result<Vec<Tensor<f64>>> {
        let out = activation_forward(&self.x, self.kind)?;
        Ok(vec![activation_backward(&out, &self.r, self.kind)?])
    }
}

#[derive(Clone)]
struct LossProbe {
    prediction: Tensor<f64>,
    target: Tensor<f64>,
    kind: LossKind,
}

impl Probe for LossProbe {
    fn tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        vec![&mut self.prediction]
    }
    fn objective(&self) -> Result<f64> {
        Ok(loss(&self.prediction, &self.target, self.kind)?.0)
    }
    fn analytic(&self) -> Result<Vec<Tensor<f64>>> {
        Ok(vec![loss(&self.prediction, &self.target, self.kind)?.1])
    }
}

#[derive(Clone)]
struct ScaleLayerProbe {
    user: Tensor<f64>,
    processed: Tensor<f64>,
    layer: ScaleLayer<f64>,
    r_scaled: Tensor<f64>,
    r_processed: Tensor<f64>,
}

impl Probe for ScaleLayerProbe {
    fn tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        let mut out = vec![&mut self.processed];
        out.extend(self.layer.params_mut().into_iter().map(|p| &mut p.value));
        out
    }
    fn objective(&self) -> Result<f64> {
        let (scaled, processed, _) = self
            .layer
            .clone()
            .forward_train(&self.user, &self.processed)?;
        Ok(weighted(&scaled, &self.r_scaled) + weighted(&processed, &self.r_processed))
    }
    fn analytic(&self) -> Result<Vec<Tensor<f64>>> {
        let mut layer = self.layer.clone();
        let (_, _, trace) = layer.forward_train(&self.user, &self.processed)?;
        let g = layer
            .backward(&trace, Some(&self.r_scaled), Some(&self.r_processed), true)?
            .expect("requested");
        let mut out = vec![g];
        out.extend(param_grads(layer.params_mut()));
        Ok(out)
    }
}

/// Softmax model checked through categorical cross-entropy.
#[derive(Clone)]
struct SoftmaxProbe<M> {
    model: M,
    user: Tensor<f64>,
    target: Tensor<f64>,
}

impl<M: SoftmaxModel<f64> + Clone> Probe for SoftmaxProbe<M> {
    fn tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        self.model
            .params_mut()
            .into_iter()
            .map(|p| &mut p.value)
            .collect()
    }
    fn objective(&self) -> Result<f64> {
        let probs = self.model.clone().forward_train(&self.user)?;
        Ok(loss(&probs, &self.target, LossKind::CategoricalCrossEntropy)?.0)
    }
    fn analytic(&self) -> Result<Vec<Tensor<f64>>> {
        let mut m = self.model.clone();
        let probs = m.forward_train(&self.user)?;
        let (_, g) = loss(&probs, &self.target, LossKind::CategoricalCrossEntropy)?;
        m.backward(&g)?;
        Ok(param_grads(m.params_mut()))
    }
}

/// One scale layer of a network, trained on binary cross-entropy against a
/// mask while the others stay frozen.
#[derive(Clone)]
struct NetworkLayerProbe {
    net: LayerScalingNetwork<f64>,
    index: usize,
    user: Tensor<f64>,
    processed: Tensor<f64>,
    mask: Tensor<f64>,
}

impl Probe for NetworkLayerProbe {
    fn tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        self.net.layers_mut()[self.index]
            .params_mut()
            .into_iter()
            .map(|p| &mut p.value)
            .collect()
    }
    fn objective(&self) -> Result<f64> {
        let scaled =
            self.net
                .clone()
                .forward_train_layer(self.index, &self.user, &self.processed)?;
        Ok(loss(&scaled, &self.mask, LossKind::BinaryCrossEntropy)?.0)
    }
    fn analytic(&self) -> Result<Vec<Tensor<f64>>> {
        let mut net = self.net.clone();
        let scaled = net.forward_train_layer(self.index, &self.user, &self.processed)?;
        let (_, g) = loss(&scaled, &self.mask, LossKind::BinaryCrossEntropy)?;
        net.backward(&g)?;
        Ok(param_grads(net.layers_mut()[self.index].params_mut()))
    }
}

fn one_hot_target(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let plane = size * size;
    let mut t = Tensor::zeros(&[n, TILE_COUNT, size, size]);
    for i in 0..n {
        for cell in 0..plane {
            let c = rng.random_range(0..TILE_COUNT);
            t.data_mut()[(i * TILE_COUNT + c) * plane + cell] = 1.0;
        }
    }
    t
}

/// Keeps ReLU inputs away from the kink so central differences are valid.
fn away_from_zero(t: Tensor<f64>) -> Tensor<f64> {
    t.map(|v| {
        if v.abs() < 0.05 {
            v.signum() * 0.05 + v
        } else {
            v
        }
    })
}

fn shuffled_order(rng: &mut ChaCha8Rng) -> Vec<Tile> {
    use rand::seq::SliceRandom;
    let mut order = Tile::ALL[1..].to_vec();
    order.shuffle(rng);
    order
}

/// Runs one check on a random instance (extents at most 4) drawn from
/// `seed`.
pub fn gradient_check(target: CheckTarget, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=2);
    let h = rng.random_range(2..=4);
    let w = rng.random_range(2..=4);
    let cin = rng.random_range(1..=4);
    let cout = rng.random_range(1..=4);
    match target {
        CheckTarget::Layer(LayerKind::Conv) => {
            let mut conv = Conv2d::new(cin, cout, &mut rng);
            conv.bias.value = random(&[cout], &mut rng);
            let probe = ConvProbe {
                x: random(&[n, cin, h, w], &mut rng),
                conv,
                r: random(&[n, cout, h, w], &mut rng),
            };
            run(target, seed, probe, &mut rng)
        }
        CheckTarget::Layer(LayerKind::Deconv) => {
            let mut deconv = Deconv2d::new(cin, cout, &mut rng);
            deconv.bias.value = random(&[cout], &mut rng);
            let probe = DeconvProbe {
                x: random(&[n, cin, h, w], &mut rng),
                deconv,
                r: random(&[n, cout, 2 * h, 2 * w], &mut rng),
            };
            run(target, seed, probe, &mut rng)
        }
        CheckTarget::Layer(LayerKind::Batchnorm) => {
            let mut bn = BatchNorm2d::new(cin);
            bn.gamma.value = random(&[cin], &mut rng).map(|v| v + 1.5);
            bn.beta.value = random(&[cin], &mut rng);
            let probe = BatchNormProbe {
                x: random(&[2, cin, h, w], &mut rng),
                bn,
                r: random(&[2, cin, h, w], &mut rng),
            };
            run(target, seed, probe, &mut rng)
        }
        CheckTarget::Layer(kind @ (LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Softmax)) => {
            let activation = match kind {
                LayerKind::Relu => Activation::Relu,
                LayerKind::Sigmoid => Activation::Sigmoid,
                _ => Activation::Softmax,
            };
            let x = random(&[n, cin, h, w], &mut rng).map(|v| 3.0 * v);
            let probe = ActivationProbe {
                x: away_from_zero(x),
                kind: activation,
                r: random(&[n, cin, h, w], &mut rng),
            };
            run(target, seed, probe, &mut rng)
        }
        CheckTarget::Loss(kind) => {
            let s = h.min(w);
            let (prediction, target_t) = match kind {
                LossKind::CategoricalCrossEntropy => (
                    activation_forward(
                        &random(&[n, TILE_COUNT, s, s], &mut rng),
                        Activation::Softmax,
                    )?,
                    one_hot_target(n, s, &mut rng),
                ),
                LossKind::BinaryCrossEntropy => (
                    random(&[n, 1, s, s], &mut rng).map(|v| 0.5 + 0.4 * v),
                    random(&[n, 1, s, s], &mut rng).map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                ),
            };
            let probe = LossProbe {
                prediction,
                target: target_t,
                kind,
            };
            run(target, seed, probe, &mut rng)
        }
        CheckTarget::ScaleLayer => {
            let s = h;
            let layer = ScaleLayer::new(Tile::ALL[rng.random_range(1..TILE_COUNT)], &mut rng);
            let probe = ScaleLayerProbe {
                user: one_hot_target(2, s, &mut rng),
                processed: random(&[2, PROCESSED_CHANNELS, s, s], &mut rng),
                layer,
                r_scaled: random(&[2, 1, 2 * s, 2 * s], &mut rng),
                r_processed: random(&[2, PROCESSED_CHANNELS, s, s], &mut rng),
            };
            run(target, seed, probe, &mut rng)
        }
        CheckTarget::NetworkHead => {
            let s = h;
            let mut net = LayerScalingNetwork::new(&shuffled_order(&mut rng), s, seed)?;
            net.attach_head(seed ^ 1);
            let probe = SoftmaxProbe {
                model: net,
                user: one_hot_target(2, s, &mut rng),
                target: one_hot_target(2, 2 * s, &mut rng),
            };
            run(target, seed, probe, &mut rng)
        }
        CheckTarget::NetworkLayer => {
            let s = h;
            let net = LayerScalingNetwork::new(&shuffled_order(&mut rng), s, seed)?;
            let index = rng.random_range(0..TILE_COUNT - 1);
            let user = one_hot_target(2, s, &mut rng);
            let processed = net.processed_input(&user, index)?;
            let probe = NetworkLayerProbe {
                net,
                index,
                user,
                processed,
                mask: random(&[2, 1, 2 * s, 2 * s], &mut rng)
                    .map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            };
            run(target, seed, probe, &mut rng)
        }
        CheckTarget::ConvBaseline => {
            let s = h;
            let mut model = ConvBaseline::new(s, seed);
            model.conv1.bias.value = random(&[PROCESSED_CHANNELS], &mut rng).map(|v| 0.1 * v);
            let probe = SoftmaxProbe {
                model,
                user: one_hot_target(2, s, &mut rng),
                target: one_hot_target(2, 2 * s, &mut rng),
            };
            run(target, seed, probe, &mut rng)
        }
    }
}
