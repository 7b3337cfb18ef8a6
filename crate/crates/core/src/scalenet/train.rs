//! Base training (softmax head, categorical cross-entropy), greedy per-layer
//! fine-tuning (binary cross-entropy, early stopping, freezing) and the
//! convolutional baseline.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baseline::ConvBaseline;
use super::interpret::tile_rarity_order;
use super::layer::ScaleLayer;
use super::model::{Architecture, Model};
use super::network::LayerScalingNetwork;
use super::SoftmaxModel;
use crate::dataset::SegmentPair;
use crate::error::{Error, Result};
use crate::tensor::{loss, AdamConfig, LossKind, Parameter, Tensor};
use crate::tile::{Tile, TILE_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub base_epochs: usize,
    pub greedy_epochs: usize,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub base_learning_rate: f64,
    pub finetune_learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            base_epochs: 3000,
            greedy_epochs: 1000,
            early_stop_patience: 10,
            validation_fraction: 0.1,
            batch_size: 32,
            base_learning_rate: 1e-3,
            finetune_learning_rate: 1e-4,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::invalid("batch size and patience must be positive"));
        }
        if !(self.base_learning_rate > 0.0 && self.finetune_learning_rate > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::invalid("validation fraction must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Per-epoch mean losses of a softmax training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    /// Training-split loss before the first update (inference mode).
    pub initial_train: f64,
    pub initial_validation: f64,
    /// Training-split loss after the last update (inference mode).
    pub final_train: f64,
    /// Mean minibatch loss of each epoch.
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFineTune {
    pub tile: Tile,
    pub validation_before: f64,
    pub validation_after: f64,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GreedyReport {
    pub layers: Vec<LayerFineTune>,
}

/// Pre-encoded pairs: one-hot low grids and tile ids of high grids.
struct Encoded {
    low_size: usize,
    high_size: usize,
    low: Vec<f32>,
    high: Vec<u8>,
}

impl Encoded {
    fn new(pairs: &[SegmentPair], input_size: usize) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::Empty("training needs at least one pair".into()))?;
        let (low_size, high_size) = (first.low.width(), first.high.width());
        if low_size != input_size || high_size != 2 * input_size {
            return Err(Error::shape(format!(
                "pairs are {low_size}->{high_size}, model scales {input_size}->{}",
                2 * input_size
            )));
        }
        let mut low = Vec::with_capacity(pairs.len() * TILE_COUNT * low_size * low_size);
        let mut high = Vec::with_capacity(pairs.len() * high_size * high_size);
        for p in pairs {
            if p.low.width() != low_size
                || p.low.height() != low_size
                || p.high.width() != high_size
                || p.high.height() != high_size
            {
                return Err(Error::shape("pairs differ in size"));
            }
            low.extend_from_slice(p.low.one_hot().data());
            high.extend(p.high.cells().iter().map(|t| t.id()));
        }
        Ok(Encoded {
            low_size,
            high_size,
            low,
            high,
        })
    }

    fn user(&self, idx: &[usize]) -> Tensor<f32> {
        let per = TILE_COUNT * self.low_size * self.low_size;
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&self.low[i * per..(i + 1) * per]);
        }
        Tensor::from_vec(&[idx.len(), TILE_COUNT, self.low_size, self.low_size], data)
            .expect("sized above")
    }

    fn one_hot_target(&self, idx: &[usize]) -> Tensor<f32> {
        let plane = self.high_size * self.high_size;
        let mut t = Tensor::zeros(&[idx.len(), TILE_COUNT, self.high_size, self.high_size]);
        let data = t.data_mut();
        for (b, &i) in idx.iter().enumerate() {
            for (cell, &id) in self.high[i * plane..(i + 1) * plane].iter().enumerate() {
                data[(b * TILE_COUNT + id as usize) * plane + cell] = 1.0;
            }
        }
        t
    }

    fn mask_target(&self, idx: &[usize], tile: Tile) -> Tensor<f32> {
        let plane = self.high_size * self.high_size;
        let mut data = Vec::with_capacity(idx.len() * plane);
        for &i in idx {
            data.extend(self.high[i * plane..(i + 1) * plane].iter().map(|&id| {
                if id == tile.id() {
                    1.0
                } else {
                    0.0
                }
            }));
        }
        Tensor::from_vec(&[idx.len(), 1, self.high_size, self.high_size], data)
            .expect("sized above")
    }
}

/// Deterministic train/validation split. With a single pair, that pair
/// serves as both.
pub fn split_indices(count: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    if count < 2 {
        return (idx.clone(), idx);
    }
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
    let val_count = ((count as f64 * fraction).round() as usize).clamp(1, count - 1);
    let mut train = idx.split_off(val_count);
    let mut val = idx;
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

const SPLIT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const SHUFFLE_SALT: u64 = 0xd1b5_4a32_d192_ed03;
const GREEDY_SALT: u64 = 0x94d0_49bb_1331_11eb;
const HEAD_SALT: u64 = 0xbf58_476d_1ce4_e5b9;

fn batches(idx: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    idx.chunks(size.max(1))
}

/// Mean categorical cross-entropy of `model` over `idx` in inference mode.
fn softmax_loss<M: SoftmaxModel<f32>>(
    model: &M,
    data: &Encoded,
    idx: &[usize],
    batch: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in batches(idx, batch) {
        let probs = model.predict(&data.user(chunk))?;
        let (l, _) = loss(
            &probs,
            &data.one_hot_target(chunk),
            LossKind::CategoricalCrossEntropy,
        )?;
        total += l * chunk.len() as f64;
    }
    Ok(total / idx.len().max(1) as f64)
}

/// Minibatch Adam on categorical cross-entropy. `on_epoch` receives the
/// epoch number with its training and validation losses.
pub fn train_softmax<M: SoftmaxModel<f32>>(
    model: &mut M,
    pairs: &[SegmentPair],
    epochs: usize,
    config: &TrainingConfig,
    on_epoch: &mut dyn FnMut(usize, f64, f64),
) -> Result<LossHistory> {
    config.validate()?;
    let data = Encoded::new(pairs, model.input_size())?;
    let (mut train, val) = split_indices(pairs.len(), config.validation_fraction, config.seed);
    let adam = AdamConfig::new(config.base_learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut history = LossHistory {
        initial_train: softmax_loss(model, &data, &train, config.batch_size)?,
        initial_validation: softmax_loss(model, &data, &val, config.batch_size)?,
        ..LossHistory::default()
    };
    for epoch in 0..epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in batches(&train, config.batch_size) {
            for p in model.params_mut() {
                p.zero_grad();
            }
            let probs = model.forward_train(&data.user(chunk))?;
            let (l, grad) = loss(
                &probs,
                &data.one_hot_target(chunk),
                LossKind::CategoricalCrossEntropy,
            )?;
            if !l.is_finite() {
                return Err(Error::State(format!(
                    "training loss diverged at epoch {epoch}"
                )));
            }
            model.backward(&grad)?;
            for p in model.params_mut() {
                adam.step(p);
            }
            total += l * chunk.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = softmax_loss(model, &data, &val, config.batch_size)?;
        history.train.push(train_loss);
        history.validation.push(val_loss);
        on_epoch(epoch, train_loss, val_loss);
    }
    train.sort_unstable();
    history.final_train = softmax_loss(model, &data, &train, config.batch_size)?;
    Ok(history)
}

/// Trains every layer jointly through the softmax head. A head is attached
/// when the network has none.
pub fn base_train(
    net: &mut LayerScalingNetwork<f32>,
    pairs: &[SegmentPair],
    config: &TrainingConfig,
    on_epoch: &mut dyn FnMut(usize, f64, f64),
) -> Result<LossHistory> {
    if net.head().is_none() {
        net.attach_head(config.seed ^ HEAD_SALT);
    }
    train_softmax(net, pairs, config.base_epochs, config, on_epoch)
}

/// Trains a fresh convolutional baseline with the base-training settings.
pub fn train_conv_baseline(
    pairs: &[SegmentPair],
    input_size: usize,
    config: &TrainingConfig,
    on_epoch: &mut dyn FnMut(usize, f64, f64),
) -> Result<(ConvBaseline<f32>, LossHistory)> {
    let mut model = ConvBaseline::new(input_size, config.seed);
    let history = train_softmax(&mut model, pairs, config.base_epochs, config, on_epoch)?;
    Ok((model, history))
}

/// Processed inputs of layer `index` for all pairs, computed once since the
/// earlier layers are frozen.
fn precompute_processed(
    net: &LayerScalingNetwork<f32>,
    data: &Encoded,
    count: usize,
    index: usize,
    batch: usize,
) -> Result<Vec<f32>> {
    let all: Vec<usize> = (0..count).collect();
    let mut out = Vec::new();
    for chunk in batches(&all, batch.max(64)) {
        out.extend(net.processed_input(&data.user(chunk), index)?.into_data());
    }
    Ok(out)
}

fn gather_processed(processed: &[f32], idx: &[usize], size: usize) -> Tensor<f32> {
    let per = super::layer::PROCESSED_CHANNELS * size * size;
    let mut data = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        data.extend_from_slice(&processed[i * per..(i + 1) * per]);
    }
    Tensor::from_vec(
        &[idx.len(), super::layer::PROCESSED_CHANNELS, size, size],
        data,
    )
    .expect("sized above")
}

fn layer_loss(
    layer: &ScaleLayer<f32>,
    data: &Encoded,
    processed: &[f32],
    idx: &[usize],
    batch: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in batches(idx, batch) {
        let (scaled, _) = layer.forward(
            &data.user(chunk),
            &gather_processed(processed, chunk, data.low_size),
        )?;
        let (l, _) = loss(
            &scaled,
            &data.mask_target(chunk, layer.tile),
            LossKind::BinaryCrossEntropy,
        )?;
        total += l * chunk.len() as f64;
    }
    Ok(total / idx.len().max(1) as f64)
}

/// Removes the head, then fine-tunes each layer in order on binary
/// cross-entropy against its tile mask. Each layer keeps its best
/// validation checkpoint (the starting weights included) and is frozen
/// before the next one starts.
pub fn greedy_layer_train(
    net: &mut LayerScalingNetwork<f32>,
    pairs: &[SegmentPair],
    config: &TrainingConfig,
    on_epoch: &mut dyn FnMut(Tile, usize, f64, f64),
) -> Result<GreedyReport> {
    config.validate()?;
    net.remove_head();
    let data = Encoded::new(pairs, net.input_size())?;
    let (mut train, val) = split_indices(pairs.len(), config.validation_fraction, config.seed);
    let adam = AdamConfig::new(config.finetune_learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ GREEDY_SALT);
    let mut report = GreedyReport::default();
    for index in 0..net.layers().len() {
        let processed = precompute_processed(net, &data, pairs.len(), index, config.batch_size)?;
        let tile = net.layers()[index].tile;
        for p in net.layers_mut()[index].params_mut() {
            p.reset_optimizer();
        }
        net.layers_mut()[index].set_frozen(false);
        let before = layer_loss(
            &net.layers()[index],
            &data,
            &processed,
            &val,
            config.batch_size,
        )?;
        let mut best = (before, net.layers()[index].clone(), None);
        let mut stale = 0;
        let mut fine = LayerFineTune {
            tile,
            validation_before: before,
            validation_after: before,
            epochs_run: 0,
            best_epoch: None,
            train: Vec::new(),
            validation: Vec::new(),
        };
        for epoch in 0..config.greedy_epochs {
            train.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in batches(&train, config.batch_size) {
                let layer = &mut net.layers_mut()[index];
                for p in layer.params_mut() {
                    p.zero_grad();
                }
                let user = data.user(chunk);
                let proc_in = gather_processed(&processed, chunk, data.low_size);
                let scaled = net.forward_train_layer(index, &user, &proc_in)?;
                let (l, grad) = loss(
                    &scaled,
                    &data.mask_target(chunk, tile),
                    LossKind::BinaryCrossEntropy,
                )?;
                if !l.is_finite() {
                    return Err(Error::State(format!(
                        "fine-tuning loss diverged on layer {index}"
                    )));
                }
                net.backward(&grad)?;
                for p in net.layers_mut()[index].params_mut() {
                    adam.step(p);
                }
                total += l * chunk.len() as f64;
            }
            let train_loss = total / train.len() as f64;
            let val_loss = layer_loss(
                &net.layers()[index],
                &data,
                &processed,
                &val,
                config.batch_size,
            )?;
            fine.train.push(train_loss);
            fine.validation.push(val_loss);
            fine.epochs_run = epoch + 1;
            on_epoch(tile, epoch, train_loss, val_loss);
            if val_loss < best.0 {
                best = (val_loss, net.layers()[index].clone(), Some(epoch));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.early_stop_patience {
                    break;
                }
            }
        }
        let (best_loss, mut layer, best_epoch) = best;
        layer.set_frozen(true);
        net.layers_mut()[index] = layer;
        fine.validation_after = best_loss;
        fine.best_epoch = best_epoch;
        report.layers.push(fine);
    }
    Ok(report)
}

/// Epoch-level progress of [`train_architecture`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainProgress {
    Base {
        epoch: usize,
        train: f64,
        validation: f64,
    },
    Greedy {
        tile: Tile,
        epoch: usize,
        train: f64,
        validation: f64,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub base: LossHistory,
    pub greedy: Option<GreedyReport>,
}

/// Full training of one architecture on `pairs`: base training, plus
/// greedy fine-tuning for the layer scaling network.
pub fn train_architecture(
    architecture: Architecture,
    pairs: &[SegmentPair],
    config: &TrainingConfig,
    on_progress: &mut dyn FnMut(TrainProgress),
) -> Result<TrainOutcome> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::Empty("training needs at least one pair".into()))?;
    let input_size = first.low.width();
    let mut base_cb = |epoch, train, validation| {
        on_progress(TrainProgress::Base {
            epoch,
            train,
            validation,
        })
    };
    if architecture == Architecture::Conv {
        let (mut model, base) = train_conv_baseline(pairs, input_size, config, &mut base_cb)?;
        clear_training_state(SoftmaxModel::params_mut(&mut model));
        return Ok(TrainOutcome {
            model: Model::Conv(model),
            base,
            greedy: None,
        });
    }
    let highs: Vec<_> = pairs.iter().map(|p| p.high.clone()).collect();
    let order = tile_rarity_order(&highs)?;
    let mut net = LayerScalingNetwork::new(&order, input_size, config.seed)?;
    let base = base_train(&mut net, pairs, config, &mut base_cb)?;
    if architecture == Architecture::HeadOnly {
        clear_training_state(net.params_mut());
        for layer in net.layers_mut() {
            layer.set_frozen(true);
        }
        return Ok(TrainOutcome {
            model: Model::HeadOnly(net),
            base,
            greedy: None,
        });
    }
    let greedy = greedy_layer_train(
        &mut net,
        pairs,
        config,
        &mut |tile, epoch, train, validation| {
            on_progress(TrainProgress::Greedy {
                tile,
                epoch,
                train,
                validation,
            })
        },
    )?;
    clear_training_state(net.params_mut());
    Ok(TrainOutcome {
        model: Model::LayerScaling(net),
        base,
        greedy: Some(greedy),
    })
}

/// Leaves a trained model equal to its reloaded model file.
fn clear_training_state(params: Vec<&mut Parameter<f32>>) {
    for p in params {
        p.clear_training_state();
    }
}


#[cfg(test)]
mod architecture_tests {
    use super::*;

    #[test]
    fn every_architecture_trains_and_upscales() {
        let corpus = crate::vglc::synthetic_corpus(1, 4);
        let pairs = crate::dataset::build_dataset(&corpus, 8)
            .unwrap()
            .subset(24, 0)
            .pairs;
        let cfg = TrainingConfig {
            base_epochs: 2,
            greedy_epochs: 2,
            batch_size: 8,
            ..TrainingConfig::default()
        };
        for arch in Architecture::ALL {
            let mut events = 0;
            let out = train_architecture(arch, &pairs, &cfg, &mut |_| events += 1).unwrap();
            assert_eq!(out.model.architecture(), arch);
            assert_eq!(out.base.train.len(), 2);
            assert_eq!(out.greedy.is_some(), arch == Architecture::LayerScaling);
            assert!(events >= 2);
            let up = out.model.upscale(&pairs[0].low).unwrap();
            assert_eq!(up.width(), 8);
        }
        assert!(train_architecture(Architecture::Conv, &[], &cfg, &mut |_| {}).is_err());
    }

    #[test]
    fn fixed_seed_training_is_reproducible() {
        let corpus = crate::vglc::synthetic_corpus(1, 4);
        let pairs = crate::dataset::build_dataset(&corpus, 8)
            .unwrap()
            .subset(16, 0)
            .pairs;
        let cfg = TrainingConfig {
            base_epochs: 2,
            greedy_epochs: 2,
            batch_size: 4,
            ..TrainingConfig::default()
        };
        let a = train_architecture(Architecture::LayerScaling, &pairs, &cfg, &mut |_| {}).unwrap();
        let b = train_architecture(Architecture::LayerScaling, &pairs, &cfg, &mut |_| {}).unwrap();
        assert_eq!(a.model.to_bytes().unwrap(), b.model.to_bytes().unwrap());
    }
}
