use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("R({time}) is not positive definite (smallest eigenvalue {eigenvalue})")]
    NonPositiveDefiniteR { time: f64, eigenvalue: f64 },
    #[error("initial covariance of player {player} is degenerate (smallest eigenvalue {eigenvalue})")]
    DegenerateInitialCovariance { player: usize, eigenvalue: f64 },
    #[error("policy mesh {dtau} is not an integer multiple of the simulation step {dt}")]
    IncompatibleGrids { dt: f64, dtau: f64 },
    #[error("player label {0} lies outside [0, 1]")]
    OutOfRangeLabel(f64),
    #[error("{what} blew up at time {time}")]
    IntegrationBlowup { what: &'static str, time: f64 },
    #[error("covariance at time {time} is near-singular (smallest eigenvalue {eigenvalue})")]
    SingularCovariance { time: f64, eigenvalue: f64 },
    #[error("trajectory batch is empty")]
    EmptyBatch,
    #[error("Picard iteration did not converge after {iterations} sweeps (last change {change})")]
    PicardDivergence { iterations: usize, change: f64 },
    #[error("mean field oracle did not reach tolerance {omega} after {iterations} iterations (last change {change})")]
    OracleNotConverged { iterations: usize, omega: f64, change: f64 },
    #[error("run diverged at iteration {iteration}: J1 = {j1}")]
    DivergedRun { iteration: usize, j1: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
