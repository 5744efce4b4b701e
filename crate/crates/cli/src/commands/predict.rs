use std::fs;
use std::io::Write;

use pedrisk_core::predict::PredictError;
use pedrisk_service::load_predictor;

use super::{service_config, write};
use crate::args::PredictArgs;
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::Context;

pub fn predict(ctx: &mut Context, args: PredictArgs) -> Result<(), CliError> {
    let mut svc = service_config(ctx, args.model.as_deref());
    if let Some(k) = args.top_k {
        svc.top_k = k;
    }
    ctx.config.serve = svc.clone();
    let input = ctx.workdir.path(&args.input);
    let mut manifest = RunManifest::start("predict", &ctx.argv, ctx.config.hash(), None);
    manifest.inputs.extend(svc.weights.iter().chain(&svc.registry).cloned());
    manifest.inputs.push(input.clone());

    let predictor = load_predictor(&svc).map_err(|e| CliError::Data(format!("model: {e}")))?;
    let raw = fs::read(&input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let result = predictor.predict_bundle(&raw).map_err(|e| match e {
        PredictError::Fhir(_) | PredictError::Ineligible(_) => CliError::data(e),
        _ => CliError::internal(e),
    })?;
    // The same bytes POST /v1/predict returns.
    let doc = result.to_json();
    let Some(out) = args.out else {
        let mut stdout = std::io::stdout().lock();
        return stdout.write_all(doc.as_bytes()).and_then(|()| stdout.flush()).map_err(CliError::internal);
    };
    let out = ctx.workdir.path(&out);
    write(&out, &doc)?;
    manifest.versions.insert("model".into(), predictor.model_version().to_string());
    let name = out.file_name().map_or_else(|| "prediction".into(), |n| n.to_string_lossy().into_owned());
    manifest.outputs.push(out.clone());
    manifest.finish(&out.with_file_name(format!("{name}.manifest.json")))
}
