use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unparseable date `{value}` at data row {row}")]
    BadDate { row: usize, value: String },
    #[error("parse error at data row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("split `{0}` has no rows")]
    EmptySplit(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no pageview profile `{0}`")]
    ProfileNotFound(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cache miss for `{profile}` ({month})")]
    CacheMiss { profile: String, month: String },
    #[error("pageview history for `{profile}` does not reach back to {needed}")]
    InsufficientHistory {
        profile: String,
        needed: chrono::NaiveDate,
    },

    #[error("best-odds spread has zero deviation but not all differences are equal")]
    DegenerateSpread,
    #[error("unknown match id `{0}`")]
    UnknownMatchId(String),

    #[error("decimal odds {0} are below 1.0")]
    BadOdds(f64),
    #[error("non-positive pageview input: {0}")]
    NonPositiveInput(f64),
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("not enough rows: {rows} rows for {params} parameters")]
    NotEnoughRows { rows: usize, params: usize },
    #[error("only one {0} cluster")]
    SingleCluster(&'static str),

    #[error("missing feature `{0}`")]
    MissingFeature(&'static str),
    #[error("no eligible rows to bet on")]
    EmptyUniverse,
    #[error("no stake was placed; ROI undefined")]
    ZeroInvestment,
    #[error("universe of {universe} rows is smaller than {bets} bets")]
    UniverseTooSmall { universe: usize, bets: usize },

    #[error("unknown table layout `{0}`")]
    UnknownLayout(String),
    #[error("series is empty")]
    EmptySeries,
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
