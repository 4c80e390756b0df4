//! Recursive dual value functions for dynamic problems with forward-looking
//! constraints.
//!
//! The crate solves the multiplier-state functional equations in both the
//! inf-sup and sup-inf forms, recovers lottery policies with promised values,
//! and ships reference models and closed-form oracles.

pub mod analytic_oracles;
pub mod dual_value;
pub mod inner_solver;
pub mod model;
pub mod policy;
pub mod ramsey;

pub use model::{Horizon, ModelBuilder, ModelSpec, MultiplierVector};

// Book chapters run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/dual_value.md")]
    mod dual_value {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/examples.md")]
    mod examples {}
    #[doc = include_str!("../../../book/src/ramsey.md")]
    mod ramsey {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
