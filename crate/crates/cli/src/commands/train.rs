use std::fmt::Write as _;

use pedrisk_core::eval::{self, TrainError, TrainEvent};
use pedrisk_core::model::{io, ModelError};
use pedrisk_core::synth::{apply_eligibility, read_cohort};

use super::{create_dir, write, write_report, HISTORY_FILE, REGISTRY_FILE, WEIGHTS_FILE};
use crate::args::TrainArgs;
use crate::error::CliError;
use crate::manifest::{RunManifest, RUN_MANIFEST_FILE};
use crate::Context;

fn classify(err: TrainError) -> CliError {
    match err {
        TrainError::Split(_) | TrainError::NoExamples => CliError::data(err),
        TrainError::Registry(_) | TrainError::Sequence(_) | TrainError::Model(ModelError::InvalidConfig(_)) => {
            CliError::usage(err)
        }
        TrainError::Model(_) => CliError::internal(err),
    }
}

pub fn train(ctx: &mut Context, args: TrainArgs) -> Result<(), CliError> {
    if let Some(n) = args.max_epochs {
        ctx.config.train.max_epochs = n;
    }
    let cfg = &ctx.config.train;
    let input = ctx.workdir.path(&args.input);
    let out = ctx.workdir.path(&args.out);
    let mut manifest = RunManifest::start("train", &ctx.argv, ctx.config.hash(), Some(cfg.seed));
    manifest.inputs.push(input.clone());
    manifest.inputs.extend(ctx.config.registry.iter().chain(&ctx.config.lms_table).cloned());

    let registry = ctx.config.base_registry()?;
    let table = ctx.config.growth_table()?;
    let records = read_cohort(&input).map_err(CliError::data)?;
    let total = records.len();
    let cohort = apply_eligibility(records);
    tracing::info!("{} of {total} patients eligible", cohort.len());

    let outcome = eval::train(cfg, &cohort, &registry, &table, |event| match event {
        TrainEvent::Prepared { train_examples, val_examples, test_examples } => {
            tracing::info!("examples: {train_examples} train, {val_examples} val, {test_examples} test");
        }
        TrainEvent::Epoch(r) => tracing::info!(
            "epoch {:>3}  train {:.4}  val {}  {:.1}s{}",
            r.epoch,
            r.train_loss,
            r.val_loss.map_or_else(|| "-".into(), |v| format!("{v:.4}")),
            r.seconds,
            if r.improved { "  *" } else { "" },
        ),
        TrainEvent::EarlyStop { epoch, best_epoch } => {
            tracing::info!("early stop after epoch {epoch}; keeping epoch {best_epoch}");
        }
    })
    .map_err(classify)?;

    create_dir(&out)?;
    let weights_path = out.join(WEIGHTS_FILE);
    io::save(&outcome.weights, &weights_path).map_err(CliError::internal)?;
    let registry_path = out.join(REGISTRY_FILE);
    write(&registry_path, outcome.registry.to_text())?;
    let mut history = String::from("epoch|train_loss|val_loss|improved|seconds\n");
    for r in &outcome.history {
        let val = r.val_loss.map_or_else(String::new, |v| format!("{v:.6}"));
        let _ = writeln!(history, "{}|{:.6}|{val}|{}|{:.3}", r.epoch, r.train_loss, r.improved, r.seconds);
    }
    let history_path = out.join(HISTORY_FILE);
    write(&history_path, history)?;
    manifest.outputs.extend([weights_path, registry_path, history_path]);
    manifest.outputs.extend(write_report(&out, &outcome.report)?);
    manifest.versions.insert("model".into(), io::model_version(&outcome.weights));

    print!("{}", outcome.report.metrics_table());
    manifest.finish(&out.join(RUN_MANIFEST_FILE))
}
