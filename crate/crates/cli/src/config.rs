//! Config file loading and precedence. Flags and `PEDRISK_*` variables are
//! merged by clap before they get here; the file fills whatever they left
//! unset, and struct defaults cover the rest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pedrisk_core::eval::TrainConfig;
use pedrisk_core::growth::LmsTable;
use pedrisk_core::registry::FeatureRegistry;
use pedrisk_core::synth::SynthConfig;
use pedrisk_service::ServiceConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Seed for every command; overrides the per-section seeds.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// Base feature registry; the built-in demo registry when unset.
    pub registry: Option<PathBuf>,
    /// Extra LMS rows merged over the built-in CDC BMI-for-age table.
    pub lms_table: Option<PathBuf>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub serve: ServiceConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Fold global flag values in and push the shared settings down into
    /// the sections that consume them.
    pub fn apply_globals(&mut self, seed: Option<u64>, threads: Option<usize>) {
        if seed.is_some() {
            self.seed = seed;
        }
        if threads.is_some() {
            self.threads = threads;
        }
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.train.seed = s;
        }
        if let Some(t) = self.threads {
            self.train.threads = t;
        }
        if self.serve.lms_table.is_none() {
            self.serve.lms_table.clone_from(&self.lms_table);
        }
    }

    /// Make every path in the config absolute against `workdir`.
    pub fn resolve_paths(&mut self, workdir: &Workdir) {
        for p in [
            &mut self.registry,
            &mut self.lms_table,
            &mut self.serve.weights,
            &mut self.serve.registry,
            &mut self.serve.lms_table,
            &mut self.serve.ui_dir,
        ]
        .into_iter()
        .flatten()
        {
            *p = workdir.path(p);
        }
    }

    /// SHA-256 of the effective configuration as canonical TOML.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn base_registry(&self) -> Result<FeatureRegistry, CliError> {
        match &self.registry {
            Some(path) => FeatureRegistry::load(path).map_err(|e| CliError::Data(format!("registry {}: {e}", path.display()))),
            None => Ok(FeatureRegistry::demo()),
        }
    }

    pub fn growth_table(&self) -> Result<LmsTable, CliError> {
        let mut table = LmsTable::cdc_bmi();
        if let Some(path) = &self.lms_table {
            table.merge(LmsTable::load(path).map_err(|e| CliError::Data(format!("LMS table {}: {e}", path.display())))?);
        }
        Ok(table)
    }
}

/// Root that relative paths are resolved against.
#[derive(Debug, Clone)]
pub struct Workdir(PathBuf);

impl Workdir {
    pub fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        let cwd = std::env::current_dir().map_err(CliError::internal)?;
        let dir = match dir {
            Some(d) if d.is_absolute() => d,
            Some(d) => cwd.join(d),
            None => cwd,
        };
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("workdir {} is not a directory", dir.display())));
        }
        Ok(Self(dir))
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.0.join(p)
        }
    }
}
