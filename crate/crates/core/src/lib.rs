//! Core of the Lode Enhancer level upscaler.
//!
//! * [`tile`], [`grid`], [`vglc`], [`dataset`]: level representation and the
//!   training-data pipeline.
//! * [`tensor`]: dense tensors, the layer kernels with their backward passes
//!   and Adam.
//! * [`scalenet`]: the layer scaling network, its baselines, training and
//!   model files.
//! * [`session`]: three synchronized canvases with age-based persistence.
//! * [`eval`]: tile-pattern KL divergence, reachability and experiments.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod grid;
pub mod scalenet;
pub mod session;
pub mod tensor;
pub mod tile;
pub mod vglc;

pub use dataset::{
    build_dataset, downscale_nearest, reflect_x, sample_noise, slide_windows, tile_frequency,
    Dataset, SegmentPair, TileDistribution,
};
pub use error::{Error, Result};
pub use eval::{min_tpkldiv, reachable_tiles, tpkl_div, ReachabilityRules};
pub use grid::{LevelGrid, OneHotLevel};
pub use scalenet::{
    Architecture, ConvBaseline, LayerScalingNetwork, Model, ProbabilityMap, TrainingConfig,
};
pub use session::{
    confidence, slider_to_params, CanvasStack, CellProvenance, EditCommand, PersistenceParams,
    Scaler,
};
pub use tile::{Tile, TileAlphabet, TILE_COUNT};
