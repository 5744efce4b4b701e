use pedrisk_core::synth::{generate, write_cohort, MANIFEST_FILE};

use super::create_dir;
use crate::args::SynthArgs;
use crate::error::CliError;
use crate::manifest::{RunManifest, RUN_MANIFEST_FILE};
use crate::Context;

pub fn synth(ctx: &mut Context, args: SynthArgs) -> Result<(), CliError> {
    if let Some(n) = args.n_patients {
        ctx.config.synth.n_patients = n;
    }
    let cfg = &ctx.config.synth;
    let out = ctx.workdir.path(&args.out);
    let mut manifest = RunManifest::start("synth", &ctx.argv, ctx.config.hash(), Some(cfg.seed));
    manifest.inputs.extend(ctx.config.registry.iter().chain(&ctx.config.lms_table).cloned());

    let registry = ctx.config.base_registry()?;
    let table = ctx.config.growth_table()?;
    let patients = generate(cfg, &registry, &table).map_err(CliError::usage)?;
    create_dir(&out)?;
    write_cohort(&out, &patients).map_err(CliError::internal)?;
    tracing::info!("wrote {} patients to {}", patients.len(), out.display());

    manifest.outputs.push(out.join(MANIFEST_FILE));
    manifest.outputs.push(out.clone());
    manifest.finish(&out.join(RUN_MANIFEST_FILE))
}
