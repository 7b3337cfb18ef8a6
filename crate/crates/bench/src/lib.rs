//! Shared fixtures for the benchmarks.

use lode_core::dataset::build_dataset;
use lode_core::scalenet::{tile_rarity_order, LayerScalingNetwork, Model};
use lode_core::{vglc, LevelGrid};

/// Seeded 16x16 windows of the synthetic corpus.
pub fn windows(count: usize) -> Vec<LevelGrid> {
    let corpus = vglc::synthetic_corpus(8, 1);
    build_dataset(&corpus, 16)
        .expect("corpus builds")
        .subset(count, 2)
        .highs()
}

/// An untrained layer scaling model; inference cost does not depend on
/// the weights.
pub fn model(input_size: usize) -> Model {
    let order = tile_rarity_order(&windows(64)).expect("windows are non-empty");
    Model::LayerScaling(LayerScalingNetwork::new(&order, input_size, 0).expect("six tiles"))
}
