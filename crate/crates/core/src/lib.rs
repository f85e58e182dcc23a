//! Gradient-play learning dynamics for quadratic games and disturbance
//! decoupling between players.
//!
//! * [`game`]: quadratic games, game graphs, Nash equilibria, step sizes.
//! * [`decoupling`]: the matrix-power and path-weight decoupling tests.
//! * [`lq`]: finite-horizon LQ games lifted to quadratic games.
//! * [`bilinear`]: simultaneous and alternating play in bilinear games.
//! * [`simulator`]: clean vs. corrupted trajectories and deviation reports.

pub mod bilinear;
pub mod decoupling;
pub mod error;
mod exact;
pub mod game;
pub mod linalg;
pub mod lq;
pub mod simulator;

pub use decoupling::{
    all_pairs_exact, all_pairs_report, check_algebraic, check_algebraic_exact, check_paths, check_potential_symmetry,
    enumerate_paths, DecouplingQuery, DecouplingReport, Method, PathSet,
};
pub use error::{Error, Result};
pub use game::{
    build_game_graph, game_jacobian, nash_equilibrium, uniform_step_size, GameGraph, PlayerDims, QuadraticGame,
    StepSizes, UniformStepSize,
};
pub use simulator::{compare, magnitude_sweep, run, DeviationReport, DisturbanceKind, DisturbanceSignal, Trajectory};
