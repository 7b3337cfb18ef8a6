use lode_core::eval::{
    export_features, score_levels, summarize, write_metrics_csv, ExperimentConfig, ScalingMode,
};
use lode_core::vglc;

use super::generate::{METRICS_FILE, SUMMARY_FILE};
use super::{
    create_out, format_count, manifest, reference_levels, write_csv_file, write_json, Progress,
    MANIFEST_FILE,
};
use crate::args::EvaluateArgs;
use crate::error::{Classify, CliError, CliResult, Failure};

pub const FEATURES_FILE: &str = "features.csv";

pub(crate) fn evaluate(args: &EvaluateArgs, progress: &Progress) -> CliResult<()> {
    if !args.levels.is_dir() {
        return Err(CliError {
            failure: Failure::Data,
            source: anyhow::anyhow!("level directory {} does not exist", args.levels.display()),
        });
    }
    let levels = vglc::load_corpus(&args.levels)
        .data(format!("cannot read levels {}", args.levels.display()))?;
    let (reference, dataset_checksum) = reference_levels(&args.reference, args.seed)?;
    let mut config = ExperimentConfig::new(ScalingMode::Once, levels.len(), args.seed);
    config.pattern_size = args.reference.pattern_size;
    config.epsilon = args.reference.epsilon;
    config.rules.dig_enabled = args.reference.dig;
    progress.note(format!(
        "scoring {} levels against {} reference windows",
        format_count(levels.len()),
        format_count(reference.len())
    ));
    let metrics = score_levels(&levels, &reference, &config).data("scoring failed")?;
    let features = export_features(&levels, config.pattern_size, config.epsilon)
        .data("feature export failed")?;
    let summary = summarize(&metrics);

    create_out(&args.out)?;
    write_csv_file(&args.out.join(METRICS_FILE), |f| {
        write_metrics_csv(&metrics, f)
    })?;
    write_csv_file(&args.out.join(FEATURES_FILE), |f| features.write_csv(f))?;
    write_json(&args.out.join(SUMMARY_FILE), &summary)?;
    let value = serde_json::to_value(&summary).data("cannot encode summary")?;
    let m = manifest(
        args.seed,
        args,
        Some(dataset_checksum),
        Vec::new(),
        Some(value),
    )?;
    write_json(&args.out.join(MANIFEST_FILE), &m)?;

    println!("levels: {}", format_count(summary.levels));
    println!(
        "min-tpkldiv: {:.3} ± {:.3}",
        summary.min_tpkldiv_mean, summary.min_tpkldiv_ci95
    );
    println!("reachable tiles: {:.2}", summary.reachable_mean);
    println!("empty tiles: {:.2}", summary.empty_mean);
    Ok(())
}
