use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point |u| = {norm} lies outside chart {chart} (validity radius {radius})")]
    OutOfChart { chart: usize, norm: f64, radius: f64 },

    #[error("metric is not positive definite at the requested point")]
    SingularMetric,

    #[error("no chart of the atlas covers the state")]
    NoCoveringChart,

    #[error("step rejected: coordinate increment {norm} exceeds safety bound {bound}; shrink dt")]
    StepRejected { norm: f64, bound: f64 },

    #[error("no exits observed at any horizon; upper confidence bounds {upper_bounds:?}")]
    AllZeroExits { upper_bounds: Vec<f64> },

    #[error("random measure has negative mass: K1 < K2 at time index {index}")]
    NegativeMass { index: usize },

    #[error("curvature bounds violate K1 >= K2 ({k1} < {k2})")]
    InvalidBounds { k1: f64, k2: f64 },

    #[error("functional time {time} is not a node of the path grid (dt = {dt})")]
    TimesNotOnGrid { time: f64, dt: f64 },

    #[error("discrete radius attains its maximum at indices {first} and {second}")]
    NonDifferentiableRadius { first: usize, second: usize },

    #[error("no conditional-expectation backend for functional `{0}`")]
    NoBackend(String),

    #[error("inconclusive: combined stderr {stderr} exceeds {fraction} of |margin| = {margin}")]
    InconclusivePower { stderr: f64, margin: f64, fraction: f64 },

    #[error("{0}")]
    InvalidArgument(String),

    /// `line` is 0 for command-line overrides and defaults.
    #[error("{}key `{key}`: {message}", config_location(*line))]
    Config { line: usize, key: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

fn config_location(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("config line {line}: ")
    }
}
