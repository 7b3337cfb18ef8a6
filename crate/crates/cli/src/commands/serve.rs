use lode_service::ServiceConfig;

use crate::args::ServeArgs;
use crate::error::{Classify, CliError, CliResult, Failure};

pub(crate) fn serve(args: ServeArgs) -> CliResult<()> {
    for path in [&args.model_4to8, &args.model_8to16].into_iter().flatten() {
        if !path.is_file() {
            return Err(CliError {
                failure: Failure::Model,
                source: anyhow::anyhow!("model file {} does not exist", path.display()),
            });
        }
    }
    if let Some(dir) = &args.static_dir {
        if !dir.is_dir() {
            return Err(CliError {
                failure: Failure::Data,
                source: anyhow::anyhow!("static directory {} does not exist", dir.display()),
            });
        }
    }
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .try_init();
    let config = ServiceConfig {
        host: args.host,
        port: args.port,
        model_4to8: args.model_4to8,
        model_8to16: args.model_8to16,
        static_dir: args.static_dir,
        snapshot_path: args.snapshot,
    };
    let runtime = tokio::runtime::Runtime::new().data("cannot start the async runtime")?;
    runtime
        .block_on(lode_service::serve(config))
        .data("service stopped")
}
