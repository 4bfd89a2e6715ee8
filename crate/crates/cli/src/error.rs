use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("cannot parse {path}: {source}")]
    Toml { path: PathBuf, source: Box<toml::de::Error> },

    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },

    #[error("writing output: {0}")]
    Csv(#[from] csv::Error),

    #[error("writing image: {0}")]
    Image(#[from] image::ImageError),

    #[error("{0}")]
    Solver(#[from] baryline::Error),

    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Self::Config { key: key.into(), msg: msg.into() }
    }

    /// 2 when a solver stopped short, 1 for anything wrong with the input.
    pub fn exit_code(&self) -> u8 {
        use baryline::Error as E;
        match self {
            Self::NotConverged(_) | Self::Solver(E::Solver { .. } | E::NotConverged { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
