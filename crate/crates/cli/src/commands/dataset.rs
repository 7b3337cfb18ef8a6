use std::fs;
use std::io::{BufWriter, Write};

use lode_core::dataset::{build_dataset, write_dataset};

use super::{create_out, format_count, load_corpus, manifest, write_json};
use crate::args::DatasetBuildArgs;
use crate::error::{Classify, CliResult};

pub(crate) fn build(args: &DatasetBuildArgs) -> CliResult<()> {
    let levels = load_corpus(&args.source, args.synthetic_seed)?;
    let dataset = build_dataset(&levels, args.window).data("cannot build dataset")?;
    create_out(&args.out)?;
    let path = args.out.join(format!("dataset-w{}.bin", args.window));
    let file = fs::File::create(&path).data(format!("cannot create {}", path.display()))?;
    let mut writer = BufWriter::new(file);
    let checksum =
        write_dataset(&dataset, &mut writer).data(format!("cannot write {}", path.display()))?;
    writer
        .flush()
        .data(format!("cannot write {}", path.display()))?;

    let summary = serde_json::json!({
        "levels": levels.len(),
        "raw_windows": dataset.raw_windows,
        "pairs": dataset.len(),
    });
    let m = manifest(
        args.synthetic_seed,
        args,
        Some(checksum.clone()),
        Vec::new(),
        Some(summary),
    )?;
    write_json(
        &args
            .out
            .join(format!("dataset-w{}.manifest.json", args.window)),
        &m,
    )?;

    println!("levels: {}", format_count(levels.len()));
    println!("windows: {}", format_count(dataset.raw_windows));
    println!("pairs: {}", format_count(dataset.len()));
    println!("wrote {} (sha256 {checksum})", path.display());
    Ok(())
}
