//! Monte Carlo engine for a mean-field asset market with endogenous prices.
//!
//! A continuum of identical representative agents splits its wealth among
//! `N` dividend-paying assets according to a strategy `μ_t`; their demand
//! fixes the prices `S^n = μ^n V`. A small agent with strategy `λ_t` trades
//! at those prices without moving them. The crate simulates both wealth
//! processes and the diagnostics that decide whether the small agent can
//! beat the market (`W/V` a supermartingale) and whether it survives
//! (`W/V` bounded away from zero).
//!
//! Modules, bottom up:
//!
//! * [`paths`]: grids, random streams, path containers, realized covariation
//! * [`dividends`]: built-in dividend-intensity models
//! * [`strategy`]: strategies and the growth-optimal allocation
//! * [`market`]: prices, wealth, and the `L`, `Z`, `[Z]`, `G` diagnostics
//! * [`analysis`]: supermartingale and survival verdicts
//! * [`experiment`]: JSON configs, parallel runs, CSV/JSON outputs
//!
//! The guide in `book/` walks through the model with runnable snippets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dividends;
pub mod error;
pub mod experiment;
pub mod market;
pub mod paths;
pub mod simplex;
pub mod strategy;

pub use error::{Error, Result};
pub use simplex::FLOOR_EPS;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/optimal.md")]
    mod optimal {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/survival.md")]
    mod survival {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
