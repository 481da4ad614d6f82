use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid piecewise function: {0}")]
    InvalidPiecewise(String),

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("grid needs at least 16 base intervals, got {0}")]
    GridTooCoarse(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("negative density {value} at node {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("invalid effort profile: {0}")]
    InvalidProfile(String),

    #[error("profile mass {mass} does not match T*eta_bar = {expected}")]
    Unbound { mass: f64, expected: f64 },

    #[error("profile and problem use different grids or periods")]
    GridMismatch,

    #[error("support set is empty")]
    EmptySupport,

    #[error("nonpositive denominator {0} in the multiplier formula")]
    NonPositiveDenominator(f64),

    #[error("eta_bar = {eta_bar} does not exceed the full-support threshold {threshold}")]
    SubThreshold { eta_bar: f64, threshold: f64 },

    #[error("closed-form solution requires continuous data; c/w jumps at t = {0}")]
    DiscontinuousData(f64),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
