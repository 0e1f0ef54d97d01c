//! Allocation engine: the single-channel closed form, the successive convex
//! approximation for parallel channels with its interior-point inner solver,
//! and model selection over the look-up table.

pub mod barrier;
pub mod init;
pub mod objective;
pub mod report;
pub mod sca;
pub mod select;
pub mod single;
pub mod surrogate;

/// Smallest admissible coding rate, bits per channel use.
pub const R_MIN: f64 = 1e-4;
/// Smallest admissible power on an active channel, watts.
pub const P_MIN: f64 = 1e-8;

pub use barrier::{
    lagrangian_stationarity, solve_barrier, BarrierOptions, BarrierSolution, BarrierStatus, Eval, SmoothProgram,
};
pub use init::{init_feasible, water_filling};
pub use objective::{p4_gradient, p4_objective, p4_objective_exact};
pub use report::build_allocation;
pub use sca::{
    interior_anchor, original_kkt_residual, refit_reduced_multipliers, sca_solve, sca_solve_with,
    solve_convex_subproblem, subproblem_start, ReducedMultipliers, ScaOptions, SolveReport, SolveStatus,
    SubproblemSolution,
};
pub use select::{select_model, select_model_with, solve_for_model, ModelOutcome, SelectionReport};
pub use single::solve_single_channel;
pub use surrogate::{build_surrogate, ChannelVars, ConstraintKind, ScaState, SubproblemSpec};
