use thiserror::Error;

use crate::simulator::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: String,
        found: String,
    },

    #[error("player index {index} out of range for a game with {players} players")]
    PlayerIndex { index: usize, players: usize },

    #[error("coordinate index {index} out of range for side of dimension {dim}")]
    CoordinateIndex { index: usize, dim: usize },

    #[error("source and target are the same player ({0}); a player is never decoupled from its own disturbance")]
    SamePlayer(usize),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("step size for player {player} must be positive and finite, got {value}")]
    InvalidStepSize { player: usize, value: f64 },

    #[error("singular game Jacobian (reciprocal condition number {rcond:e})")]
    SingularJacobian { rcond: f64 },

    #[error("step-size rule inapplicable: alpha = {alpha:e} is not positive (beta = {beta:e})")]
    StepSizeInapplicable { alpha: f64, beta: f64 },

    #[error("path enumeration would visit {estimated} prefixes, above the cap of {cap}; use the algebraic check")]
    EnumerationCap { estimated: u128, cap: u128 },

    #[error("not a potential game: ||P_{i}{j} - P_{j}{i}^T||_F = {residual:e}", i = .pair.0, j = .pair.1)]
    NotPotential { pair: (usize, usize), residual: f64 },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("iterate became non-finite at step {step}")]
    Diverged { step: usize, partial: Box<Trajectory> },
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
