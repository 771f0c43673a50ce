use std::fmt;

use conngan::Error;

/// Pipeline stage an error is attributed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Corpus,
    Augment,
    TrainGan,
    Sample,
    Metrics,
    Similarity,
    Evaluate,
    Output,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Corpus => "corpus",
            Stage::Augment => "augment",
            Stage::TrainGan => "train-gan",
            Stage::Sample => "sample",
            Stage::Metrics => "metrics",
            Stage::Similarity => "similarity",
            Stage::Evaluate => "evaluate",
            Stage::Output => "output",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub stage: Stage,
    pub source: Error,
}

impl CliError {
    pub fn new(stage: Stage, source: Error) -> Self {
        CliError { stage, source }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::new(Stage::Config, Error::Config(msg.into()))
    }

    /// 2 for configuration problems, 4 for non-finite training values,
    /// 3 for everything else (unreadable, malformed or unsuitable data).
    pub fn exit_code(&self) -> i32 {
        match self.source {
            Error::Config(_) => EXIT_CONFIG,
            Error::Diverged { .. } | Error::NonFinite(_) => EXIT_DIVERGED,
            _ if self.stage == Stage::Config => EXIT_CONFIG,
            _ => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.source)
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Attaches a stage to library results.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, CliError>;
}

impl<T, E: Into<Error>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(stage, e.into()))
    }
}
