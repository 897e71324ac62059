//! Three-block ADMM for regularized least squares decomposition
//!
//! ```text
//! min f1(x1) + f2(x2) + f3(x3)   s.t.   A1 x1 + A2 x2 + x3 = b
//! ```
//!
//! with runtime convergence certificates, penalty-range computation and
//! synthetic benchmark generators.

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod gamma;
pub mod io;
pub mod problem;
pub mod regularizers;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{Block, BlockMap, KktResidual, RlsdProblem, StronglyConvexSmooth, F3};
pub use regularizers::{BoxSet, Regularizer, RegularizerKind};
pub use solver::{Admm, IterateState, SolveResult, SolverConfig, Status, Trace, TraceRecord};
