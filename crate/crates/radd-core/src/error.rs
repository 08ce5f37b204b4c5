//! Error type shared by all modules of the crate.

use std::fmt;

/// Errors produced by grid construction, operator assembly, solvers,
/// decompositions and the experiment harness.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor argument violates its precondition.
    InvalidArgument(String),
    /// Two grid functions (or a function and an operator) live on different grids.
    GridMismatch,
    /// The diffusion coefficient dips below the declared lower bound at a
    /// sampled face midpoint.
    CoefficientBelowBound {
        x1: f64,
        x2: f64,
        value: f64,
        bound: f64,
    },
    /// The coarse step does not align with the fine grid.
    Alignment(String),
    /// The requested decomposition has no interface nodes.
    DegenerateDecomposition(String),
    /// Overlap bands of distinct cross nodes would merge.
    OverlapCollision(String),
    /// An operation required a symmetric positive (semi)definite expression.
    NotSymmetricPositiveDefinite(String),
    /// The conjugate-gradient iteration hit its cap before reaching tolerance.
    NoConvergence { iterations: usize, residual: f64 },
    /// A dense computation was requested beyond the dense node cap.
    SizeCap { nodes: usize, cap: usize },
    /// A scheme received a decomposition it does not support.
    UnsupportedDecomposition(String),
    /// Bad experiment configuration (harness).
    Config(String),
    /// NaN / divergence detected while running an experiment.
    Numerical(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::GridMismatch => write!(f, "operands live on different grids"),
            Error::CoefficientBelowBound {
                x1,
                x2,
                value,
                bound,
            } => write!(
                f,
                "coefficient {value} below bound {bound} at face midpoint ({x1}, {x2})"
            ),
            Error::Alignment(msg) => write!(f, "coarse step misaligned: {msg}"),
            Error::DegenerateDecomposition(msg) => {
                write!(f, "degenerate decomposition: {msg}")
            }
            Error::OverlapCollision(msg) => write!(f, "overlap collision: {msg}"),
            Error::NotSymmetricPositiveDefinite(msg) => {
                write!(f, "expression is not symmetric positive definite: {msg}")
            }
            Error::NoConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "conjugate gradients did not converge in {iterations} iterations (residual {residual:e})"
            ),
            Error::SizeCap { nodes, cap } => write!(
                f,
                "dense verification limited to {cap} nodes, grid has {nodes}"
            ),
            Error::UnsupportedDecomposition(msg) => {
                write!(f, "unsupported decomposition: {msg}")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
