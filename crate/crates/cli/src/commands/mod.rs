mod eval;
mod predict;
mod serve;
mod synth;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

pub use eval::eval;
pub use predict::predict;
pub use serve::serve;
pub use synth::synth;
pub use train::train;

use pedrisk_core::eval::EvalReport;
use pedrisk_service::ServiceConfig;

use crate::error::CliError;
use crate::Context;

/// File names inside a model directory.
pub const WEIGHTS_FILE: &str = "model.prsk";
pub const REGISTRY_FILE: &str = "registry.txt";
pub const REPORT_FILE: &str = "eval_report.json";
pub const METRICS_FILE: &str = "metrics.psv";
pub const HISTORY_FILE: &str = "history.psv";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Internal(format!("write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Internal(format!("create {}: {e}", path.display())))
}

/// Write the JSON report and the flat metrics table into `dir`.
fn write_report(dir: &Path, report: &EvalReport) -> Result<Vec<PathBuf>, CliError> {
    let json = dir.join(REPORT_FILE);
    let table = dir.join(METRICS_FILE);
    write(&json, serde_json::to_string_pretty(report).expect("report serializes") + "\n")?;
    write(&table, report.metrics_table())?;
    Ok(vec![json, table])
}

/// Service settings with the model location resolved: a `--model`
/// directory wins over `[serve]` paths, which win over `./model`.
fn service_config(ctx: &Context, model: Option<&Path>) -> ServiceConfig {
    let mut svc = ctx.config.serve.clone();
    let dir = match model {
        Some(dir) => Some(ctx.workdir.path(dir)),
        None if svc.weights.is_none() && svc.registry.is_none() => Some(ctx.workdir.path(Path::new("model"))),
        None => None,
    };
    if let Some(dir) = dir {
        svc.weights = Some(dir.join(WEIGHTS_FILE));
        svc.registry = Some(dir.join(REGISTRY_FILE));
    }
    svc
}
