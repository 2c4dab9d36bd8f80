//! Particle approximation of principal eigen-quantities of non-negative
//! integral kernels `Q(x, dy) = G(x) M(x, dy)`.
//!
//! The forward pass ([`forward`]) runs an interacting particle system with
//! selection proportional to `G` and mutation by `M`; the backward pass
//! ([`backward`]) propagates the unit function back through the particle
//! clouds to approximate the eigenfunction `h⋆`, the eigenvalue `λ⋆` and the
//! twisted kernel. [`oracle`] is a deterministic grid solver used as the
//! reference; [`rare_event`] and [`bellman`] implement the applications.

pub mod backward;
pub mod bellman;
pub mod error;
pub mod forward;
pub mod kernel;
pub mod models;
pub mod oracle;
pub mod rare_event;
pub mod rng;
pub mod stats;
pub mod weights;

pub use backward::{
    eval_h, log_random_semigroup_apply, pathwise_ratio_diagnostic, random_semigroup_apply,
    run_backward, sample_twisted_chain, twisted_row, window_average_h, BackwardSolution,
    RatioReport, SemigroupStart, TwistedPath, TwistedRow,
};
pub use error::{Error, Result};
pub use forward::{log_lambda_average, run_forward, ForwardTrajectory, InitialLaw};
pub use kernel::{EmpiricalMeasure, EpsilonBounds, KernelModel, StateSpace};
pub use models::{BuiltinModel, CirModel, NeutronModel, RareEventModel};
pub use weights::{categorical_sample, log_sum_exp, normalize_log_weights, LogWeightVector};
pub use bellman::{bellman_residual, estimate_value_function, ValueFunctionEstimate};
pub use oracle::{build_grid_operator, power_iteration, GridEigenSystem, GridOperator};
pub use rare_event::{
    replicated_conditional_is, ConditionalDesign,
    conditional_particle_is, lambda_curve, lambda_derivative, naive_is, rate_function, twisted_exact_is,
    IsEstimate, LambdaCurve,
};
