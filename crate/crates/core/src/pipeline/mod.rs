//! Staged pipeline: cohort generation, knowledge-tracing training, feature
//! extraction, predictor training, evaluation and group analysis.
//!
//! Every stage reads its inputs from disk, writes its artifacts into one
//! subdirectory of the output root and records a [`Manifest`] there. A
//! downstream stage refuses to run when an upstream manifest is missing and
//! warns when it was written under a different configuration.

mod commands;
mod config;
mod manifest;

pub use commands::{analyze, evaluate, extract, generate, run_all, train_kt, train_predictor, AnalysisSummary};
pub use config::{EvalConfig, FeatureSet, KtVariant, RunConfig};
pub use manifest::{sha256_file, Manifest};

use std::path::{Path, PathBuf};

/// Artifact directories under an output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn cohort(&self) -> PathBuf {
        self.root.join("cohort")
    }

    pub fn kt(&self) -> PathBuf {
        self.root.join("kt")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }

    /// Stage directory owned by `command`.
    pub fn stage(&self, command: &str) -> PathBuf {
        match command {
            "generate" => self.cohort(),
            "train-kt" => self.kt(),
            "extract" => self.features(),
            "train-predictor" => self.models(),
            "evaluate" => self.eval(),
            "analyze" => self.analysis(),
            other => self.root.join(other),
        }
    }
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}
