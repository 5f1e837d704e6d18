//! ADMM reconstruction and its closed-form building blocks.

mod admm;
mod band;
mod problem;
mod prox;

pub use admm::{
    solve, update_x_frame, AdmmSolver, FrameData, ResidualLog, ResidualRecord, Solution,
    SolverConfig, SolverState,
};
pub use band::BandCholesky;
pub use problem::{objective_value, Problem, Regularization};
pub use prox::{soft_threshold, update_h};

#[cfg(test)]
mod tests;
