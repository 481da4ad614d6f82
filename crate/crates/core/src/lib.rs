//! Optimal periodic effort for a linear decay process `S' = c - (delta + eta) S`
//! driven by a periodic inflow `c`, with cost `int w S` and a fixed mean
//! effort `eta_bar`.
//!
//! Efforts are cumulative profiles `alpha` on a grid, so atoms are ordinary
//! jumps. The crate evaluates state and cost, the switching function and
//! its optimality certificate, closed-form solutions and thresholds, and
//! minimizes the cost by projected gradient.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which is also what [`io`] reads and writes.

pub mod analytic;
pub mod error;
pub mod firstorder;
pub mod forward;
pub mod io;
pub mod measure;
pub mod profiles;
pub mod quad;
pub mod scalar;
pub mod solver;

pub use analytic::{
    classify_discontinuities, closed_form_profile, closed_form_solution, concentration_function, eta_bar_threshold,
    eta_star, mean_sqrt_wc, pure_atom_threshold,
};
pub use error::{Error, Result};
pub use firstorder::{certificate, fixed_point_residual, gradient, h_function, identity_residual, psi_function};
pub use forward::{cost, cost_along_segment, cost_continuous, periodic_state};
pub use measure::{default_support_tol, detect_atoms, support, support_mask, DEFAULT_ATOM_RATIO};
pub use profiles::{preset, Expr, NodeKind, Piece, Side, PRESET_NAMES};
pub use scalar::Scalar;
pub use solver::{assess, dominance_violation, project_circular, project_monotone, project_simplex, solve, sweep_eta, SearchSpace};

pub type PeriodicPiecewise = profiles::PeriodicPiecewise<f64>;
pub type ProblemData = profiles::ProblemData<f64>;
pub type Grid = profiles::Grid<f64>;
pub type EffortProfile = measure::EffortProfile<f64>;
pub type Atom = measure::Atom<f64>;
pub type SupportSet = measure::SupportSet<f64>;
pub type StateTrajectory = forward::StateTrajectory<f64>;
pub type Gradient = firstorder::Gradient<f64>;
pub type FirstOrderDiagnostics = firstorder::FirstOrderDiagnostics<f64>;
pub type ClosedFormSolution = analytic::ClosedFormSolution<f64>;
pub type Concentration = analytic::Concentration<f64>;
pub type DiscontinuityReport = analytic::DiscontinuityReport<f64>;
pub type JumpAtom = analytic::JumpAtom<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type SolveReport = solver::SolveReport<f64>;
pub type Sweep = solver::Sweep<f64>;
