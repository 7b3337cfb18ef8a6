mod dataset;
mod evaluate;
mod generate;
mod model;
mod serve;
mod train;

use std::fs;
use std::io;
use std::path::Path;

use lode_core::dataset::{build_dataset, read_dataset, write_dataset, Dataset};
use lode_core::eval::RunManifest;
use lode_core::{vglc, LevelGrid};

use crate::args::{
    Cli, Command, CorpusSource, DatasetCommand, ModelCommand, PairSource, ReferenceArgs,
};
use crate::error::{Classify, CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn execute(cli: Cli) -> CliResult<()> {
    let progress = Progress { quiet: cli.quiet };
    match cli.command {
        Command::Dataset(DatasetCommand::Build(args)) => dataset::build(&args),
        Command::Train(args) => train::train(&args, &progress),
        Command::Generate(args) => generate::generate(&args, &progress),
        Command::Evaluate(args) => evaluate::evaluate(&args, &progress),
        Command::Serve(args) => serve::serve(args),
        Command::Model(ModelCommand::Info { path }) => model::info(&path),
    }
}

pub(crate) struct Progress {
    quiet: bool,
}

impl Progress {
    pub(crate) fn note(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

/// `35700` becomes `35,700`.
pub fn format_count(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn corpus_levels(
    corpus: Option<&Path>,
    synthetic: Option<usize>,
    seed: u64,
) -> CliResult<Vec<LevelGrid>> {
    match (corpus, synthetic) {
        (Some(dir), _) => {
            if !dir.is_dir() {
                return Err(CliError {
                    failure: crate::error::Failure::Data,
                    source: anyhow::anyhow!("corpus directory {} does not exist", dir.display()),
                });
            }
            vglc::load_corpus(dir).data(format!("cannot read corpus {}", dir.display()))
        }
        (None, Some(0)) => Err(CliError::usage("--synthetic needs at least one level")),
        (None, Some(n)) => Ok(vglc::synthetic_corpus(n, seed)),
        (None, None) => Err(CliError::usage("no level source given")),
    }
}

pub(crate) fn load_corpus(source: &CorpusSource, seed: u64) -> CliResult<Vec<LevelGrid>> {
    corpus_levels(source.corpus.as_deref(), source.synthetic, seed)
}

/// Pairs from a dataset cache, or built from a corpus at `window`.
pub(crate) fn load_pairs(source: &PairSource, seed: u64, window: usize) -> CliResult<Dataset> {
    if let Some(path) = &source.dataset {
        let file = fs::File::open(path).data(format!("cannot open dataset {}", path.display()))?;
        return read_dataset(io::BufReader::new(file))
            .data(format!("cannot read dataset {}", path.display()));
    }
    let levels = corpus_levels(source.corpus.as_deref(), source.synthetic, seed)?;
    build_dataset(&levels, window).data("cannot build dataset")
}

/// The 16x16 reference windows and the checksum of the dataset they come from.
pub(crate) fn reference_levels(
    args: &ReferenceArgs,
    seed: u64,
) -> CliResult<(Vec<LevelGrid>, String)> {
    let mut dataset = load_pairs(&args.source, args.synthetic_seed, 16)?;
    if dataset.window != 16 {
        return Err(CliError::usage(format!(
            "reference levels must be 16x16 windows, the dataset holds {0}x{0}",
            dataset.window
        )));
    }
    if let Some(n) = args.reference_subset {
        if n == 0 {
            return Err(CliError::usage("--reference-subset must be positive"));
        }
        dataset = dataset.subset(n, seed);
    }
    let checksum = dataset_checksum(&dataset)?;
    Ok((dataset.highs(), checksum))
}

pub(crate) fn dataset_checksum(dataset: &Dataset) -> CliResult<String> {
    write_dataset(dataset, io::sink()).data("cannot hash dataset")
}

pub(crate) fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).data(format!("cannot create output directory {}", dir.display()))
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).data("cannot encode JSON")?;
    text.push('\n');
    fs::write(path, text).data(format!("cannot write {}", path.display()))
}

pub(crate) fn manifest(
    seed: u64,
    config: &impl serde::Serialize,
    dataset_checksum: Option<String>,
    model_checksums: Vec<String>,
    summary: Option<serde_json::Value>,
) -> CliResult<RunManifest> {
    Ok(RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        seed,
        config: serde_json::to_value(config).data("cannot encode configuration")?,
        dataset_checksum,
        model_checksums,
        summary,
    })
}

pub(crate) fn write_csv_file(
    path: &Path,
    write: impl FnOnce(fs::File) -> lode_core::Result<()>,
) -> CliResult<()> {
    let file = fs::File::create(path).data(format!("cannot create {}", path.display()))?;
    write(file).data(format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_are_grouped() {
        assert_eq!(format_count(0), "0");
        assert_eq!(format_count(999), "999");
        assert_eq!(format_count(1000), "1,000");
        assert_eq!(format_count(35_700), "35,700");
        assert_eq!(format_count(112_500), "112,500");
        assert_eq!(format_count(1_234_567), "1,234,567");
    }

    #[test]
    fn missing_corpus_is_a_data_error() {
        let e = corpus_levels(Some(Path::new("/definitely/not/here")), None, 0).unwrap_err();
        assert_eq!(e.failure, crate::error::Failure::Data);
    }

    #[test]
    fn empty_synthetic_corpus_is_a_usage_error() {
        let e = corpus_levels(None, Some(0), 0).unwrap_err();
        assert_eq!(e.failure, crate::error::Failure::Usage);
    }
}
