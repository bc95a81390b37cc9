use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("network has {0} nodes; at most 65535 are supported")]
    TooManyNodes(usize),
    #[error("edge ({0}, {1}) is invalid")]
    InvalidEdge(usize, usize),
    #[error("network is disconnected: node {to} unreachable from node {from}")]
    Disconnected { from: usize, to: usize },
    #[error("signal of length {len} is too short (need at least {min})")]
    SignalTooShort { len: usize, min: usize },
    #[error("box size {m} outside [{min}, {max}]")]
    BoxSizeOutOfRange { m: usize, min: usize, max: usize },
    #[error("box sizes must be strictly ascending")]
    BoxSizesNotAscending,
    #[error("need at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no congestion in bracket: predicate false at lower bound {0}")]
    NoCongestionInBracket(f64),
    #[error("bracket invalid: still congested at upper bound {0}")]
    CongestedAtUpperBound(f64),
    #[error("congestion predicate is not monotone in beta near {0}")]
    NonMonotonePredicate(f64),
    #[error("all fluctuations vanish; the detrended signal is degenerate")]
    Degenerate,
}
