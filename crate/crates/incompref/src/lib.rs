//! Time-varying incomplete preferences: set-valued index processes, the
//! scalarized martingale consumption-investment solver, and Monte Carlo
//! hedging portfolios for the three worked examples.

pub mod error;
pub mod geometry;
pub mod index_set;
pub mod portfolio;
pub mod preferences;
pub mod solver;
pub mod stochastic;

pub use error::{Error, Result};

// Compile and run the book's snippets as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/index-sets.md")]
    mod index_sets {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/preferences.md")]
    mod preferences {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/portfolio.md")]
    mod portfolio {}
}
