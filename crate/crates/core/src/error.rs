use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("mesh has no triangles after cleanup")]
    EmptyMesh,

    #[error("operation requires a watertight mesh ({open_edges} open edges)")]
    NonWatertightInput { open_edges: usize },

    #[error("box has non-positive extent: {0}")]
    DegenerateBox(String),

    #[error("need {needed} boundary cells for seeding but the grid only has {available}")]
    InsufficientBoundaryCells { needed: usize, available: usize },

    #[error("no valid decomposition among {iterations} iterations")]
    NoValidDecomposition { iterations: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
