//! Dual value functions over `(γ, x, s)` and the monotone iteration of the
//! Bellman operator in both inf-sup and sup-inf form.

mod bellman;
mod bounds;
pub mod codec;
mod field;
mod grid;
mod iterate;

pub use bellman::{
    bellman_apply, fd_step, inner_problem, multiplier_bound, next_multiplier, BellmanError, BellmanOptions,
    BellmanOutcome, FieldContinuation,
};
pub use bounds::{feasible_stationary_payoffs, POLICY_BUDGET};
pub use codec::{load_field, read_field, save_field, write_field, CodecError};
pub use field::{DualValueField, FeasiblePayoff, MembershipReport, Variant};
pub use grid::{GammaGrid, GridError, GridSpec, MAX_DIM};
pub use iterate::{
    active_nodes, build_grid, default_gamma_max, fe_residual, init_affine_majorant, sweep, value_iterate,
    value_iterate_from, weighted_distance, IterationRecord, IterationReport, SolveError, SolveOptions, Solution,
    Sweep,
};
