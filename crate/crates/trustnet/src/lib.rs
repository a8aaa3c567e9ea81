//! Trust-gated signed-network embeddings.
//!
//! The pipeline turns a signed directed graph into node embeddings whose
//! inner products predict edge signs:
//!
//! 1. **Ego-networks** ([`egonet`]): every simple path of bounded length from
//!    each node, labeled with a parity-inferred sign and the path length.
//! 2. **Trust gate** ([`fextra`]): a logistic classifier over 23 topological
//!    features decides, per inferred edge, whether the parity sign can be
//!    trusted; direct edges always can.
//! 3. **Propagation** ([`propagation`]): trusted neighbors route embeddings
//!    by sign polarity; untrusted neighbors split them by empirical triangle
//!    ratios ([`triads`]).
//! 4. **Training** ([`training`]): a sign loss on embedding inner products
//!    plus a status loss on directed score differences, optimized end to end
//!    through the propagation step.
//! 5. **Evaluation** ([`evaluation`]): downstream logistic regression on
//!    fused embeddings; micro/macro F1 and rank AUC.
//!
//! [`pipeline`] wires the stages together behind one run configuration, with
//! deterministic seeding and disk caches for the preprocessing artifacts.

pub mod cache;
pub mod egonet;
pub mod evaluation;
pub mod fextra;
pub mod graph;
pub mod logreg;
pub mod pipeline;
pub mod propagation;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod training;
pub mod triads;

pub use graph::{NodeId, Sign, SignedDigraph};
pub use scalar::Scalar;

/// Default scalar type for the numeric core.
pub type Real = f64;
/// Dense matrix at default precision.
pub type Matrix = logreg::DenseMatrix<Real>;
/// Model parameters at the default precision.
pub type Model = training::ModelParams<Real>;

/// Library-wide error type. The CLI maps each variant to an exit category.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("consistency: {0}")]
    Consistency(String),
    #[error("training: {0}")]
    Training(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
