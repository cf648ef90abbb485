//! Geometric multigrid for `curl(α curl u) + u = f` on `(-1, 1)^3` with
//! lowest-order hexahedral Nédélec elements and nonoverlapping
//! domain-decomposition smoothers.

pub mod assembly;
pub mod dense;
pub mod element;
pub mod error;
pub mod experiment;
pub mod mesh;
pub mod multigrid;
pub mod quadrature;
pub mod smoother;
pub mod sparse;
pub mod transfer;

pub use error::{Error, Result};

/// Execution mode for operator and smoother applications.
///
/// Both modes produce bitwise-identical results; `Parallel` only spreads
/// the independent local work over the rayon pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Deterministic,
    Parallel,
}

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/transfer.md")]
    mod transfer {}
    #[doc = include_str!("../../../book/src/smoothers.md")]
    mod smoothers {}
    #[doc = include_str!("../../../book/src/vcycle.md")]
    mod vcycle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
