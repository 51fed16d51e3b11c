use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("index {index:?} out of range for counts {counts:?}")]
    IndexOutOfRange {
        index: Vec<usize>,
        counts: Vec<usize>,
    },
    #[error("point {point:?} lies outside the grid domain")]
    OutOfDomain { point: Vec<f64> },
    #[error("time {time} outside [{start}, {end}]")]
    TimeOutOfRange { time: f64, start: f64, end: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time step {dt} exceeds CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("solver exceeded max_steps = {max_steps} at t = {time}")]
    MaxStepsExceeded { max_steps: usize, time: f64 },
    #[error("control {control:?} outside the admissible box")]
    InadmissibleControl { control: Vec<f64> },
    #[error("rejection sampling found no admissible start after {draws} draws")]
    SamplingExhausted { draws: usize },
}
