use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch ({context}): expected {expected:?}, found {found:?}")]
    Shape {
        context: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("AUROC needs at least one real and one fake sample (real={n_real}, fake={n_fake})")]
    ClassMissing { n_real: usize, n_fake: usize },
    #[error("bad name {name:?}: token {token:?} {reason}")]
    Naming {
        name: String,
        token: String,
        reason: String,
    },
    #[error("submission is missing {} task(s): {}", missing.len(), preview(missing))]
    Coverage { missing: Vec<String> },
    #[error("submission has {} unexpected file(s): {}", files.len(), preview(files))]
    Extraneous { files: Vec<String> },
    #[error("detector {detector} failed on {item}: {reason}")]
    DetectorFault {
        detector: String,
        item: String,
        reason: String,
    },
    #[error("detector {0} does not expose gradients")]
    Capability(String),
    #[error("submission {submission} was modified after validation (stored {expected}, found {found})")]
    Tamper {
        submission: String,
        expected: String,
        found: String,
    },
    #[error("phase error: {0}")]
    Phase(String),
    #[error("phase {0} is frozen")]
    Frozen(String),
    #[error("team {team} reached the daily cap of {cap} submissions")]
    Quota { team: String, cap: u32 },
    #[error("no counterparty for {0}: the previous leaderboard is empty")]
    NoCounterparty(String),
    #[error("invalid game state: {0}")]
    State(String),
    #[error("optimization diverged: {0}")]
    Divergence(String),
    #[error("image {name}: {reason}")]
    Image { name: String, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn preview(names: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut s = names.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if names.len() > SHOWN {
        s.push_str(&format!(" and {} more", names.len() - SHOWN));
    }
    s
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Degenerate(_) => "degenerate",
            Error::Parameter(_) => "parameter",
            Error::ClassMissing { .. } => "class_missing",
            Error::Naming { .. } => "naming",
            Error::Coverage { .. } => "coverage",
            Error::Extraneous { .. } => "extraneous",
            Error::DetectorFault { .. } => "detector_fault",
            Error::Capability(_) => "capability",
            Error::Tamper { .. } => "tamper",
            Error::Phase(_) => "phase",
            Error::Frozen(_) => "frozen",
            Error::Quota { .. } => "quota",
            Error::NoCounterparty(_) => "no_counterparty",
            Error::State(_) => "state",
            Error::Divergence(_) => "divergence",
            Error::Image { .. } => "image",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}
