use std::path::PathBuf;

use lode_core::eval::{
    run_scaling_experiment, write_metrics_csv, ExperimentConfig, ScalingMode, ScalingModels,
};
use lode_core::scalenet::Model;
use lode_core::vglc;

use super::{
    create_out, format_count, manifest, reference_levels, write_csv_file, write_json, Progress,
    MANIFEST_FILE,
};
use crate::args::GenerateArgs;
use crate::error::{Classify, CliError, CliResult, Failure};

pub const LEVELS_DIR: &str = "levels";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub(crate) fn load_models(paths: &[PathBuf]) -> CliResult<Vec<Model>> {
    paths
        .iter()
        .map(|p| {
            if !p.is_file() {
                return Err(CliError {
                    failure: Failure::Model,
                    source: anyhow::anyhow!("model file {} does not exist", p.display()),
                });
            }
            Model::load(p).model(format!("cannot load model {}", p.display()))
        })
        .collect()
}

pub(crate) fn generate(args: &GenerateArgs, progress: &Progress) -> CliResult<()> {
    let mode = ScalingMode::from(args.mode);
    match mode {
        ScalingMode::Once if !args.model_4to8.is_empty() => {
            return Err(CliError::usage(
                "--model-4to8 is only used with --mode twice",
            ));
        }
        ScalingMode::Twice if args.model_4to8.len() != args.model_8to16.len() => {
            return Err(CliError::usage(format!(
                "--mode twice pairs models by position: got {} --model-4to8 and {} --model-8to16",
                args.model_4to8.len(),
                args.model_8to16.len()
            )));
        }
        _ => {}
    }
    if args.count == 0 {
        return Err(CliError::usage("--count must be positive"));
    }
    let models = ScalingModels {
        small_to_medium: load_models(&args.model_4to8)?,
        medium_to_large: load_models(&args.model_8to16)?,
    };
    let (reference, dataset_checksum) = reference_levels(&args.reference, args.seed)?;

    let mut config = ExperimentConfig::new(mode, args.count, args.seed);
    config.pattern_size = args.reference.pattern_size;
    config.epsilon = args.reference.epsilon;
    config.rules.dig_enabled = args.reference.dig;
    progress.note(format!(
        "generating {} levels against {} reference windows",
        format_count(args.count * models.medium_to_large.len()),
        format_count(reference.len())
    ));
    let result = run_scaling_experiment(&models, &config, &reference).model("generation failed")?;

    create_out(&args.out)?;
    vglc::write_corpus(&args.out.join(LEVELS_DIR), &result.levels).data("cannot write levels")?;
    write_csv_file(&args.out.join(METRICS_FILE), |f| {
        write_metrics_csv(&result.metrics, f)
    })?;
    write_json(&args.out.join(SUMMARY_FILE), &result.summary)?;
    let checksums = models
        .small_to_medium
        .iter()
        .chain(&models.medium_to_large)
        .map(|m| m.checksum())
        .collect::<lode_core::Result<Vec<_>>>()
        .model("cannot hash models")?;
    let summary = serde_json::to_value(&result.summary).data("cannot encode summary")?;
    let m = manifest(
        args.seed,
        args,
        Some(dataset_checksum),
        checksums,
        Some(summary),
    )?;
    write_json(&args.out.join(MANIFEST_FILE), &m)?;

    let s = &result.summary;
    println!("levels: {}", format_count(s.levels));
    println!(
        "min-tpkldiv: {:.3} ± {:.3}",
        s.min_tpkldiv_mean, s.min_tpkldiv_ci95
    );
    println!("reachable tiles: {:.2}", s.reachable_mean);
    println!("empty tiles: {:.2}", s.empty_mean);
    Ok(())
}
