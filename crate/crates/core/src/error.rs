use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),

    #[error("invalid population: {0}")]
    InvalidPopulation(String),

    #[error("invalid design parameters: {0}")]
    InvalidDesign(String),

    #[error("unknown variable `{0}` (expected one of y, x, z, w)")]
    UnknownVariable(String),

    #[error("malformed population file at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("population file checksum mismatch: header says {expected:016x}, body hashes to {found:016x}")]
    Checksum { expected: u64, found: u64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("variance undefined: {0}")]
    UndefinedVariance(String),

    #[error("enumeration would visit about {estimate:.3e} draw paths, limit is {limit:.0e}")]
    EnumerationTooLarge { estimate: f64, limit: f64 },

    #[error("budget {budget} cannot buy a single target measurement at cost {c_tar}")]
    BudgetTooSmall { budget: f64, c_tar: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("experiment failed: {errored} of {replicates} replicates errored")]
    ExperimentQuality { errored: usize, replicates: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
