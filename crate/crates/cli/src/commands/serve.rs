use std::sync::Arc;

use pedrisk_service::{load_predictor, AppState};

use super::service_config;
use crate::args::ServeArgs;
use crate::error::CliError;
use crate::Context;

pub fn serve(ctx: &mut Context, args: ServeArgs) -> Result<(), CliError> {
    let mut svc = service_config(ctx, args.model.as_deref());
    if let Some(listen) = args.listen {
        svc.listen = listen;
    }
    if let Some(token) = args.token {
        svc.token = Some(token);
    }
    if let Some(server) = args.fhir_server {
        svc.fhir_server = Some(server);
    }
    if let Some(dir) = args.ui_dir {
        svc.ui_dir = Some(ctx.workdir.path(&dir));
    }
    let predictor = match load_predictor(&svc) {
        Ok(p) => {
            tracing::info!("loaded model {}", p.model_version());
            Some(p)
        }
        Err(e) => {
            tracing::warn!("starting without a model: {e}");
            None
        }
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::internal)?;
    runtime
        .block_on(pedrisk_service::serve(Arc::new(AppState::new(svc, predictor))))
        .map_err(|e| CliError::Internal(format!("server: {e}")))
}
