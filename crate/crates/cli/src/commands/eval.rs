use std::collections::HashSet;

use pedrisk_core::eval::{build_examples, evaluate, split_patients, EvalOptions};
use pedrisk_core::model::io;
use pedrisk_core::registry::FeatureRegistry;
use pedrisk_core::sequence::{make_schedule, Sequencer};
use pedrisk_core::synth::{apply_eligibility, read_cohort};

use super::{create_dir, write_report, REGISTRY_FILE, WEIGHTS_FILE};
use crate::args::{EvalArgs, SplitChoice};
use crate::error::CliError;
use crate::manifest::{RunManifest, RUN_MANIFEST_FILE};
use crate::Context;

pub fn eval(ctx: &mut Context, args: EvalArgs) -> Result<(), CliError> {
    if let Some(reps) = args.bootstrap_reps {
        ctx.config.train.eval.bootstrap_reps = reps;
    }
    let cfg = &ctx.config.train;
    let model_dir = ctx.workdir.path(&args.model);
    let input = ctx.workdir.path(&args.input);
    let out = ctx.workdir.path(&args.out);
    let mut manifest = RunManifest::start("eval", &ctx.argv, ctx.config.hash(), Some(cfg.seed));
    let (weights_path, registry_path) = (model_dir.join(WEIGHTS_FILE), model_dir.join(REGISTRY_FILE));
    manifest.inputs.extend([weights_path.clone(), registry_path.clone(), input.clone()]);

    let registry = FeatureRegistry::load(&registry_path).map_err(|e| CliError::Data(format!("{}: {e}", registry_path.display())))?;
    let weights = io::load(&weights_path, Some(&registry.fingerprint()))
        .map_err(|e| CliError::Data(format!("{}: {e}", weights_path.display())))?;
    manifest.versions.insert("model".into(), io::model_version(&weights));
    let table = ctx.config.growth_table()?;
    let schedule = make_schedule(&weights.schedule).map_err(CliError::data)?;
    let sequencer = Sequencer::new(registry, schedule).map_err(CliError::data)?;

    let cohort = apply_eligibility(read_cohort(&input).map_err(CliError::data)?);
    let keep: Option<HashSet<String>> = match args.split {
        // The split is a pure function of the ids and the training seed.
        SplitChoice::Test => {
            let ids: Vec<String> = cohort.iter().map(|r| r.patient_id.clone()).collect();
            Some(split_patients(&ids, weights.config.seed).map_err(CliError::data)?.test.into_iter().collect())
        }
        SplitChoice::All => None,
    };
    let examples: Vec<_> = cohort
        .iter()
        .filter(|r| keep.as_ref().is_none_or(|k| k.contains(&r.patient_id)))
        .flat_map(|r| build_examples(r, &sequencer, &table, &cfg.windows, &weights.config.demographics))
        .collect();
    if examples.is_empty() {
        return Err(CliError::Data("no labelled examples to evaluate".into()));
    }
    tracing::info!("evaluating {} examples", examples.len());

    let opts = EvalOptions {
        seed: cfg.seed,
        threads: cfg.resolved_threads(),
        ..cfg.eval.clone()
    };
    let report = evaluate(&weights, &examples, &opts).map_err(CliError::internal)?;
    create_dir(&out)?;
    manifest.outputs.extend(write_report(&out, &report)?);
    print!("{}", report.metrics_table());
    manifest.finish(&out.join(RUN_MANIFEST_FILE))
}
