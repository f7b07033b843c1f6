use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown {kind} `{name}` (vocabulary is frozen)")]
    UnknownSymbol { kind: &'static str, name: String },

    #[error("synthesis exhausted: produced {achieved} of {target} outdated facts for the {split} split")]
    SynthesisExhausted {
        split: &'static str,
        achieved: usize,
        target: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("bad artifact {path}: {msg}")]
    Artifact { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
