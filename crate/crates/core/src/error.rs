use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("exhaustive oracle refused n = {n} (limit {limit})")]
    OracleLimit { n: usize, limit: usize },

    /// The tail of an infinite series did not fall below the threshold
    /// before the iteration cap.
    #[error("series did not converge after {terms} terms (partial sum {partial_sum})")]
    NonConvergence { partial_sum: f64, terms: usize },

    /// Restarting never succeeds under the bound because xi_N >= 1.
    #[error("infeasible schedule: xi_{block_length} = {xi} >= 1")]
    Infeasible { block_length: usize, xi: f64 },

    #[error("no feasible block length in {lo}..={hi}")]
    NoFeasibleBlockLength { lo: usize, hi: usize },

    #[error("{censored} of {trials} trials hit the symbol cap")]
    Censored { censored: usize, trials: usize },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error on line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
