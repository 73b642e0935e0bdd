use thiserror::Error;

use crate::multicone::EdgeMargin;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not invertible (sigma_d / sigma_1 = {ratio:e})")]
    NonInvertible { ratio: f64 },
    #[error("matrix condition number {kappa:e} exceeds the 1e12 guard")]
    IllConditioned { kappa: f64 },
    #[error("no gap of index {p} (ratio {ratio})")]
    NoGap { p: usize, ratio: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("subspace is not a graph over the reference (distance {distance})")]
    NotGraph { distance: f64 },
    #[error("sequence too short: {0}")]
    TooShort(String),
    #[error("input sequence is not certified dominated")]
    NotDominatedInput,
    #[error("representation is not dominated")]
    NotDominated,
    #[error("limit did not converge (residual {residual:e})")]
    DidNotConverge { residual: f64 },
    #[error("unsupported group family: {0}")]
    UnsupportedFamily(String),
    #[error("ball of radius {radius} exceeds the cap ({cap} elements)")]
    BallTooLarge { radius: usize, cap: usize },
    #[error("cone types did not stabilize")]
    NotStabilized,
    #[error("automaton has an empty recurrent part")]
    EmptyRecurrentPart,
    #[error("invalid word: {0}")]
    InvalidWord(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("quadratic cones have different signatures or dimensions")]
    SignatureMismatch,
    #[error("index mismatch: {0}")]
    IndexMismatch(String),
    #[error("automaton mismatch: {0}")]
    AutomatonMismatch(String),
    #[error("multicone components are not certified disjoint")]
    NotDisjoint,
    #[error("no avoided (d-p)-plane found for the multicone")]
    NoAvoidedPlane,
    #[error("no candidate family certified (best min margin {best_min_margin:e})")]
    NoCandidateCertified {
        best_min_margin: f64,
        table: Vec<EdgeMargin>,
    },
    #[error("cone family is not certified")]
    NotCertified,
    #[error("internal consistency: {0}")]
    Internal(String),
    #[error("functional is not positive on the closed Weyl chamber")]
    NotPositiveOnChamber,
    #[error("no gap at the requested flag indices")]
    NoGapAtTheta,
    #[error("flags are not transverse")]
    NotTransverse,
    #[error("sequence is not regular (margin {margin})")]
    NotRegular { margin: f64 },
    #[error("quasi-geodesic constants exceed caps (mu {mu}, c {c})")]
    NotQuasiGeodesic { mu: f64, c: f64 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {cause}")]
    Io { path: String, cause: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;
