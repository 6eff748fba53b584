//! Phasor-domain dynamic simulation of a distribution grid with an aggregated
//! transmission generator and synchronverter-based virtual inertia plants.

mod devices;
mod model;
mod network;
mod sim;
mod trajectory;

pub use devices::{
    filter_derivatives, generator_derivatives, synchronverter_derivatives, FilterDerivatives,
    GeneratorDerivatives, GeneratorState, SynchronverterDerivatives, SynchronverterState,
    MIN_ACTIVE_INERTIA,
};
pub use model::{
    load_grid, Branch, Bus, GeneratorParams, GridFile, GridModel, Load, SynchronverterParams,
    COST_FACTOR_RANGE, GRID_SCHEMA_VERSION,
};
pub use network::{build_ybus, CMatrix};
pub use sim::{
    run_episode, solve_steady_state, EpisodeConfig, Simulator, SystemState, DIVERGENCE_LIMIT,
    STEADY_STATE_TOL,
};
pub(crate) use trajectory::fmt as fmt_f64;
pub use trajectory::Trajectory;
