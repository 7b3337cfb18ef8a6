use serde::Serialize;

use lode_core::scalenet::{
    train_architecture, Architecture, TrainOutcome, TrainProgress, TrainingConfig,
};

use super::{
    create_out, dataset_checksum, format_count, load_pairs, manifest, write_json, Progress,
    MANIFEST_FILE,
};
use crate::args::{TrainArgs, DESK_BASE_EPOCHS, DESK_GREEDY_EPOCHS, DESK_SUBSET};
use crate::error::{Classify, CliError, CliResult};

pub const MODEL_FILE: &str = "model.lode";
pub const LOSS_FILE: &str = "loss.csv";

/// One row of the loss CSV. Epoch 0 of the base phase holds the losses
/// before the first update; greedy rows name the layer's tile.
#[derive(Debug, Serialize)]
struct LossRow {
    phase: &'static str,
    tile: String,
    epoch: usize,
    train_loss: f64,
    validation_loss: f64,
}

/// The effective configuration recorded in the manifest.
#[derive(Debug, Serialize)]
struct TrainRecord<'a> {
    args: &'a TrainArgs,
    architecture: Architecture,
    window: usize,
    subset: Option<usize>,
    pairs: usize,
    training: &'a TrainingConfig,
}

pub(crate) fn training_config(args: &TrainArgs) -> TrainingConfig {
    let (base, greedy) = if args.desk {
        (DESK_BASE_EPOCHS, DESK_GREEDY_EPOCHS)
    } else {
        let d = TrainingConfig::default();
        (d.base_epochs, d.greedy_epochs)
    };
    TrainingConfig {
        base_epochs: args.base_epochs.unwrap_or(base),
        greedy_epochs: args.greedy_epochs.unwrap_or(greedy),
        early_stop_patience: args.patience,
        batch_size: args.batch_size,
        base_learning_rate: args.learning_rate,
        finetune_learning_rate: args.finetune_learning_rate,
        seed: args.seed,
        ..TrainingConfig::default()
    }
}

pub(crate) fn train(args: &TrainArgs, progress: &Progress) -> CliResult<()> {
    let config = training_config(args);
    config.validate().map_err(CliError::usage)?;
    let subset = args.subset.or(args.desk.then_some(DESK_SUBSET));
    if subset == Some(0) {
        return Err(CliError::usage("--subset must be positive"));
    }
    let mut dataset = load_pairs(&args.source, args.synthetic_seed, args.window.unwrap_or(16))?;
    if let Some(n) = subset {
        dataset = dataset.subset(n, args.seed);
    }
    let checksum = dataset_checksum(&dataset)?;
    let architecture = Architecture::from(args.arch);
    progress.note(format!(
        "training {} on {} pairs ({}x{} -> {}x{})",
        architecture.name(),
        format_count(dataset.len()),
        dataset.low_size(),
        dataset.low_size(),
        dataset.window,
        dataset.window
    ));

    let outcome = train_architecture(architecture, &dataset.pairs, &config, &mut |p| match p {
        TrainProgress::Base {
            epoch,
            train,
            validation,
        } if epoch % 10 == 0 || epoch == config.base_epochs => {
            progress.note(format!(
                "base epoch {epoch}: train {train:.5} validation {validation:.5}"
            ));
        }
        TrainProgress::Greedy {
            tile,
            epoch,
            train,
            validation,
        } if epoch % 10 == 0 => {
            progress.note(format!(
                "{} layer epoch {epoch}: train {train:.5} validation {validation:.5}",
                tile.name()
            ));
        }
        _ => {}
    })
    .model("training failed")?;

    create_out(&args.out)?;
    let model_path = args.out.join(MODEL_FILE);
    let model_checksum = outcome
        .model
        .save(&model_path)
        .model(format!("cannot write {}", model_path.display()))?;
    super::write_csv_file(&args.out.join(LOSS_FILE), |f| write_loss_csv(&outcome, f))?;

    let record = TrainRecord {
        args,
        architecture,
        window: dataset.window,
        subset,
        pairs: dataset.len(),
        training: &config,
    };
    let summary = serde_json::json!({
        "initial_train_loss": outcome.base.initial_train,
        "final_train_loss": outcome.base.final_train,
        "greedy": outcome.greedy.as_ref().map(|g| g.layers.iter().map(|l| serde_json::json!({
            "tile": l.tile,
            "validation_before": l.validation_before,
            "validation_after": l.validation_after,
            "epochs_run": l.epochs_run,
        })).collect::<Vec<_>>()),
    });
    let m = manifest(
        args.seed,
        &record,
        Some(checksum),
        vec![model_checksum.clone()],
        Some(summary),
    )?;
    write_json(&args.out.join(MANIFEST_FILE), &m)?;

    println!(
        "train loss {:.5} -> {:.5}",
        outcome.base.initial_train, outcome.base.final_train
    );
    println!("wrote {} (sha256 {model_checksum})", model_path.display());
    Ok(())
}

fn write_loss_csv(outcome: &TrainOutcome, out: std::fs::File) -> lode_core::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let base = &outcome.base;
    w.serialize(LossRow {
        phase: "base",
        tile: String::new(),
        epoch: 0,
        train_loss: base.initial_train,
        validation_loss: base.initial_validation,
    })?;
    for (i, (t, v)) in base.train.iter().zip(&base.validation).enumerate() {
        w.serialize(LossRow {
            phase: "base",
            tile: String::new(),
            epoch: i + 1,
            train_loss: *t,
            validation_loss: *v,
        })?;
    }
    for layer in outcome.greedy.iter().flat_map(|g| &g.layers) {
        for (i, (t, v)) in layer.train.iter().zip(&layer.validation).enumerate() {
            w.serialize(LossRow {
                phase: "greedy",
                tile: layer.tile.name().to_string(),
                epoch: i + 1,
                train_loss: *t,
                validation_loss: *v,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
