//! Noise-driven scaling experiments and their CSV/JSON outputs.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reach::{expressive_metrics, ReachabilityRules};
use super::tpkl::{
    closest_match, mean_ci95, PatternDistribution, DEFAULT_EPSILON, DEFAULT_PATTERN_SIZE,
};
use crate::dataset::{sample_noise, tile_frequency};
use crate::error::{Error, Result};
use crate::grid::LevelGrid;
use crate::scalenet::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// 8x8 noise through one 8->16 model.
    Once,
    /// 4x4 noise through a 4->8 model, then the 8->16 model of the same
    /// index.
    Twice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: ScalingMode,
    pub noise_count: usize,
    pub seed: u64,
    pub pattern_size: usize,
    pub epsilon: f64,
    pub rules: ReachabilityRules,
}

impl ExperimentConfig {
    pub fn new(mode: ScalingMode, noise_count: usize, seed: u64) -> Self {
        ExperimentConfig {
            mode,
            noise_count,
            seed,
            pattern_size: DEFAULT_PATTERN_SIZE,
            epsilon: DEFAULT_EPSILON,
            rules: ReachabilityRules::default(),
        }
    }
}

/// Models per stage; entry `i` of each stage forms pipeline `i`.
#[derive(Debug, Clone, Default)]
pub struct ScalingModels {
    pub small_to_medium: Vec<Model>,
    pub medium_to_large: Vec<Model>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level_id: usize,
    pub model_index: usize,
    pub noise_index: usize,
    pub reachable: usize,
    pub empty: usize,
    pub min_tpkldiv: f64,
    pub matched_training_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub levels: usize,
    pub min_tpkldiv_mean: f64,
    pub min_tpkldiv_ci95: f64,
    pub reachable_mean: f64,
    pub empty_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Generated levels ordered by model, then noise input.
    pub levels: Vec<LevelGrid>,
    pub metrics: Vec<LevelMetrics>,
    pub summary: ExperimentSummary,
}

/// Noise inputs shared by every pipeline, drawn from the tile frequencies
/// of the training levels.
pub fn noise_inputs(
    training: &[LevelGrid],
    size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<LevelGrid>> {
    let dist = tile_frequency(training)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| sample_noise(size, size, &dist, rng.next_u64()))
        .collect())
}

/// Upscales noise through every pipeline without scoring.
pub fn generate_levels(
    models: &ScalingModels,
    config: &ExperimentConfig,
    training: &[LevelGrid],
) -> Result<Vec<LevelGrid>> {
    let pipelines = models.medium_to_large.len();
    if pipelines == 0 {
        return Err(Error::Model("no 8->16 model given".into()));
    }
    if config.mode == ScalingMode::Twice && models.small_to_medium.len() != pipelines {
        return Err(Error::Model(format!(
            "double scaling pairs models by index: {} 4->8 models for {pipelines} 8->16 models",
            models.small_to_medium.len()
        )));
    }
    let start = match config.mode {
        ScalingMode::Once => models.medium_to_large[0].input_size(),
        ScalingMode::Twice => models.small_to_medium[0].input_size(),
    };
    let noise = noise_inputs(training, start, config.noise_count, config.seed)?;
    let mut levels = Vec::with_capacity(pipelines * noise.len());
    for i in 0..pipelines {
        let medium = match config.mode {
            ScalingMode::Once => noise.clone(),
            ScalingMode::Twice => models.small_to_medium[i].upscale_batch(&noise)?,
        };
        levels.extend(models.medium_to_large[i].upscale_batch(&medium)?);
    }
    Ok(levels)
}

/// Generates levels and scores each against the training levels.
pub fn run_scaling_experiment(
    models: &ScalingModels,
    config: &ExperimentConfig,
    training: &[LevelGrid],
) -> Result<ExperimentResult> {
    let levels = generate_levels(models, config, training)?;
    let metrics = score_levels(&levels, training, config)?;
    let summary = summarize(&metrics);
    Ok(ExperimentResult {
        levels,
        metrics,
        summary,
    })
}

/// Per-level metrics; ids follow the level order, and `noise_count`
/// splits ids into model and noise indices.
pub fn score_levels(
    levels: &[LevelGrid],
    training: &[LevelGrid],
    config: &ExperimentConfig,
) -> Result<Vec<LevelMetrics>> {
    let train: Vec<_> = training
        .iter()
        .map(|l| PatternDistribution::from_level(l, config.pattern_size))
        .collect::<Result<_>>()?;
    let per_model = config.noise_count.max(1);
    levels
        .iter()
        .enumerate()
        .map(|(id, level)| {
            let m = closest_match(
                &PatternDistribution::from_level(level, config.pattern_size)?,
                &train,
                config.epsilon,
            )?;
            let e = expressive_metrics(level, &config.rules);
            Ok(LevelMetrics {
                level_id: id,
                model_index: id / per_model,
                noise_index: id % per_model,
                reachable: e.reachable_tiles,
                empty: e.empty_tiles,
                min_tpkldiv: m.divergence,
                matched_training_id: m.training_index,
            })
        })
        .collect()
}

pub fn summarize(metrics: &[LevelMetrics]) -> ExperimentSummary {
    let n = metrics.len().max(1) as f64;
    let (mean, ci) = mean_ci95(&metrics.iter().map(|m| m.min_tpkldiv).collect::<Vec<_>>());
    ExperimentSummary {
        levels: metrics.len(),
        min_tpkldiv_mean: mean,
        min_tpkldiv_ci95: ci,
        reachable_mean: metrics.iter().map(|m| m.reachable as f64).sum::<f64>() / n,
        empty_mean: metrics.iter().map(|m| m.empty as f64).sum::<f64>() / n,
    }
}

pub fn write_metrics_csv(metrics: &[LevelMetrics], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

/// Provenance of an experiment or training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub dataset_checksum: Option<String>,
    pub model_checksums: Vec<String>,
    pub summary: Option<serde_json::Value>,
}
