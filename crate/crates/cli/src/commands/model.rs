use std::io::Write;
use std::path::Path;

use lode_core::scalenet::Model;

use crate::error::{Classify, CliError, CliResult, Failure};

pub(crate) fn info(path: &Path) -> CliResult<()> {
    if !path.is_file() {
        return Err(CliError {
            failure: Failure::Model,
            source: anyhow::anyhow!("model file {} does not exist", path.display()),
        });
    }
    let model = Model::load(path).model(format!("cannot load model {}", path.display()))?;
    let info = model.info().model("cannot describe model")?;
    let text = serde_json::to_string_pretty(&info).model("cannot encode model info")?;
    // A closed pipe (e.g. `| head`) is not an error.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}
