//! NeurASP: answer set programs whose probabilistic atoms are computed by
//! neural networks.

pub mod experiments;
pub mod ground;
pub mod lang;
pub mod learn;
pub mod net;
mod par;
pub mod semantics;
pub mod solve;

pub use par::PARALLEL;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lang(#[from] lang::LangError),
    #[error(transparent)]
    Ground(#[from] ground::GroundError),
    #[error(transparent)]
    Solve(#[from] solve::SolveError),
    #[error(transparent)]
    Semantics(#[from] semantics::SemanticsError),
    #[error(transparent)]
    Net(#[from] net::NetError),
    #[error(transparent)]
    Learn(#[from] learn::LearnError),
    /// Malformed experiment data.
    #[error("{0}")]
    Experiment(String),
}
