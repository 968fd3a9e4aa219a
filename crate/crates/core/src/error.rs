use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("modulus {0} is not prime")]
    NotPrime(u64),

    #[error("modulus {modulus} exceeds the supported maximum {max}")]
    ModulusTooLarge { modulus: u64, max: u64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("negative load {0}")]
    NegativeLoad(f64),

    #[error("edge dimensions infeasible: destination {node} has min-cut {cut} < {needed} symbols")]
    InfeasibleDims { node: usize, cut: usize, needed: usize },

    #[error("retry budget exhausted after {attempts} attempts ({context}); a larger field is needed")]
    RetriesExhausted { attempts: usize, context: String },

    #[error("field too small: q = {modulus} but at least {required} is required")]
    FieldTooSmall { modulus: u64, required: u64 },

    #[error("node {node}: no support of size <= {sparsity} explains the syndrome")]
    NoConsistentSupport { node: usize, sparsity: usize },

    #[error("node {node}: two sparse supports give different updates")]
    AmbiguousDecode { node: usize },

    #[error("node {node}: decoded output differs from the expected value in round {round}")]
    DecodeMismatch { node: usize, round: usize },

    #[error("non-finite value at iteration {iteration}; the step size is too large")]
    NonFinite { iteration: usize },

    #[error("cost ledger {realized} exceeds the bound {bound}")]
    LedgerBound { realized: f64, bound: f64 },
}
