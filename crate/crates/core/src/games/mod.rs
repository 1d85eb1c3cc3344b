//! Stochastic Nash equilibrium problems and the two benchmark instances.

mod pev;
mod qp;

pub use pev::{
    proximal_gradient_run, epsilon_sne_certificate, pev_pseudogradient, reference_sne, reference_sne_from,
    solve_sne, PevGame, PevInstanceFile, PevScenario, SneResult, REFERENCE_MAX_ITERATIONS,
};
pub use qp::{qp_generate, qp_oracle, qp_reference, QpInstance, QP_STD};
