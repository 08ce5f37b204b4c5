//! Substructuring domain-decomposition time stepping for the 2D diffusion
//! and wave model problems on rectangular grids.
//!
//! The crate builds the five-point diffusion operator, partitions the grid
//! into subdomains separated by interface node lines, and advances the
//! discrete problems with regionally-additive splitting schemes: the
//! factorized scheme and its staged explicit-implicit implementation, the
//! regularized full-approximation scheme, component-wise splitting and its
//! symmetrized second-order variant, plus three-level schemes for the wave
//! equation. A dense verification engine certifies the unconditional
//! stability bounds on small grids, and an experiment harness reproduces the
//! model convergence studies against the closed-form exact solution.

pub mod decomposition;
mod error;
pub mod grid;
pub mod harness;
pub mod hyperbolic;
pub mod operator;
pub mod parabolic;
pub mod stability;

pub use decomposition::{
    build_three_component, build_two_component, Decomposition, PartitionReport,
};
pub use error::{Error, Result};
pub use grid::{build_grid, inner_product, norm, Grid, GridFunction};
pub use harness::{
    apply_config_key, apply_spatial_step, apply_time_step, convergence_study, exact_solution,
    parse_config, preset, run_experiment, ErrorRow, ErrorSeries, ExperimentConfig, Problem,
    SplittingKind, StudyMode, StudyRow, StudyTable,
};
pub use hyperbolic::{
    init_second_level, step_regularized_hyperbolic, step_threelevel_weighted, HyperbolicState,
};
pub use operator::{
    assemble_diffusion, energy_norm, solve_spd, spectral_bound_check, DiffusionOperator, Factor,
    Mask, OperatorExpression,
};
pub use parabolic::{
    step, step_componentwise, step_componentwise_symmetrized, step_factorized, step_regularized,
    step_weighted, ParabolicState, RhsSampling, SchemeConfig, SchemeKind,
};
pub use stability::{
    certify, dense_from_diffusion, dense_from_expression, evaluate_energy, min_eigenvalue,
    spectral_norm, symmetrized_operators, transition_operator, CertifyReport, CertifyScheme,
    DenseOperator, EnergyFunctional, EnergyKind, SymmetrizedMode, SymmetrizedOperators,
    DENSE_NODE_CAP,
};

#[cfg(test)]
mod tests {
    // Shared immutable types cross thread boundaries; the schemes only ever
    // hand them around behind Arc.
    #[test]
    fn shared_types_are_send_and_sync() {
        fn check<T: Send + Sync>() {}
        check::<crate::Grid>();
        check::<crate::GridFunction>();
        check::<crate::DiffusionOperator>();
        check::<crate::OperatorExpression>();
        check::<crate::Mask>();
        check::<crate::Decomposition>();
        check::<crate::SchemeConfig>();
        check::<crate::ParabolicState>();
        check::<crate::HyperbolicState>();
    }
}
