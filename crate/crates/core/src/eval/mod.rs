//! Tile-pattern KL divergence, expressive-range metrics and scaling
//! experiments.

mod experiment;
mod features;
mod reach;
mod tpkl;

pub use experiment::{
    generate_levels, noise_inputs, run_scaling_experiment, score_levels, summarize,
    write_metrics_csv, ExperimentConfig, ExperimentResult, ExperimentSummary, LevelMetrics,
    RunManifest, ScalingMode, ScalingModels,
};
pub use features::{export_features, FeatureMatrix};
pub use reach::{
    empty_tiles, expressive_metrics, is_supported, moves, reachable_from, reachable_tiles,
    ExpressiveMetrics, ReachabilityRules,
};
pub use tpkl::{
    closest_match, kl_divergence, mean_ci95, min_tpkldiv, pattern_code, tpkl_div, ClosestMatch,
    MinTpklSummary, PatternDistribution, DEFAULT_EPSILON, DEFAULT_PATTERN_SIZE, MAX_PATTERN_SIZE,
};
