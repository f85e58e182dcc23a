//! Clean and corrupted gradient-play runs.
//!
//! The clean run is `x^{k+1} = W x^k - Gamma r`, the corrupted run
//! `y^{k+1} = W y^k - Gamma r - Gamma d^k` where `d^k` is nonzero only on
//! the disturbed player's coordinates.

use nalgebra::{DVector, DVectorView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{GameGraph, PlayerDims, QuadraticGame};

/// Anything that can price a joint action for each player.
pub trait PlayerCosts: Sync {
    fn players(&self) -> usize;
    fn cost(&self, player: usize, x: &DVector<f64>) -> f64;
}

impl PlayerCosts for QuadraticGame {
    fn players(&self) -> usize {
        QuadraticGame::players(self)
    }

    fn cost(&self, player: usize, x: &DVector<f64>) -> f64 {
        QuadraticGame::cost(self, player, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind {
    Zero,
    Constant(DVector<f64>),
    /// `value` at step `step`, zero otherwise.
    Impulse {
        step: usize,
        value: DVector<f64>,
    },
    /// Fresh draw each step, uniform on the Euclidean ball of radius `bound`.
    SeededUniform {
        seed: u64,
        bound: f64,
    },
    /// `values[k]` at step `k`, zero past the end.
    Explicit(Vec<DVector<f64>>),
}

/// A disturbance confined to one player's coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSignal {
    pub player: usize,
    pub kind: DisturbanceKind,
}

impl DisturbanceSignal {
    pub fn new(player: usize, kind: DisturbanceKind) -> Self {
        DisturbanceSignal { player, kind }
    }

    pub fn zero(player: usize) -> Self {
        Self::new(player, DisturbanceKind::Zero)
    }

    pub fn seeded_uniform(player: usize, seed: u64, bound: f64) -> Self {
        Self::new(player, DisturbanceKind::SeededUniform { seed, bound })
    }

    pub fn impulse(player: usize, step: usize, value: DVector<f64>) -> Self {
        Self::new(player, DisturbanceKind::Impulse { step, value })
    }

    fn validate(&self, dims: &PlayerDims) -> Result<()> {
        dims.check_player(self.player)?;
        let d = dims.dim(self.player);
        let check = |what: &str, v: &DVector<f64>| {
            if v.len() != d {
                Err(Error::dim(what, d, v.len()))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            DisturbanceKind::Zero => Ok(()),
            DisturbanceKind::Constant(v) => check("constant disturbance", v),
            DisturbanceKind::Impulse { value, .. } => check("impulse disturbance", value),
            DisturbanceKind::Explicit(vs) => vs.iter().try_for_each(|v| check("explicit disturbance", v)),
            DisturbanceKind::SeededUniform { bound, .. } => {
                if bound.is_finite() && *bound >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!(
                        "disturbance bound must be finite and nonnegative, got {bound}"
                    )))
                }
            }
        }
    }

    /// Disturbance on the player's own coordinates at step `k`.
    pub fn local(&self, dim: usize, k: usize) -> DVector<f64> {
        match &self.kind {
            DisturbanceKind::Zero => DVector::zeros(dim),
            DisturbanceKind::Constant(v) => v.clone(),
            DisturbanceKind::Impulse { step, value } => {
                if *step == k {
                    value.clone()
                } else {
                    DVector::zeros(dim)
                }
            }
            DisturbanceKind::Explicit(values) => values.get(k).cloned().unwrap_or_else(|| DVector::zeros(dim)),
            DisturbanceKind::SeededUniform { seed, bound } => uniform_ball(*seed, k, dim, *bound),
        }
    }

    /// Joint disturbance vector at step `k`, zero outside the player's block.
    pub fn joint(&self, dims: &PlayerDims, k: usize) -> DVector<f64> {
        let mut out = DVector::zeros(dims.total());
        out.rows_mut(dims.offset(self.player), dims.dim(self.player))
            .copy_from(&self.local(dims.dim(self.player), k));
        out
    }
}

/// Deterministic in `(seed, step, dim, bound)`: each step draws from its own
/// ChaCha stream.
fn uniform_ball(seed: u64, step: usize, dim: usize, bound: f64) -> DVector<f64> {
    if bound == 0.0 {
        return DVector::zeros(dim);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    let dir = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
    let norm = dir.norm();
    let u: f64 = Uniform::new(0.0, 1.0).expect("valid range").sample(&mut rng);
    let radius = bound * u.powf(1.0 / dim as f64);
    if norm == 0.0 {
        return DVector::zeros(dim);
    }
    dir * (radius / norm)
}

/// Iterates `x^0 .. x^K` with the disturbances applied and, optionally,
/// per-player costs at every iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dims: PlayerDims,
    pub iterates: Vec<DVector<f64>>,
    /// `disturbances[k]` is the joint `d^k` used to produce `iterates[k + 1]`.
    pub disturbances: Vec<DVector<f64>>,
    /// `costs[k][i]` is player `i`'s cost at `iterates[k]`.
    pub costs: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn player(&self, i: usize, k: usize) -> DVectorView<'_, f64> {
        self.dims.slice(&self.iterates[k], i)
    }

    pub fn attach_costs(&mut self, costs: &dyn PlayerCosts) {
        self.costs = Some(
            self.iterates
                .iter()
                .map(|x| (0..costs.players()).map(|i| costs.cost(i, x)).collect())
                .collect(),
        );
    }
}

/// `y^{k+1} = W y^k - offset - Gamma d^k`, `y^0 = x0`, for `steps` steps.
///
/// Fails with [`Error::Diverged`] carrying the finite prefix when an iterate
/// stops being finite.
pub fn run(graph: &GameGraph, x0: &DVector<f64>, steps: usize, disturbance: &DisturbanceSignal) -> Result<Trajectory> {
    let dims = graph.dims();
    if x0.len() != dims.total() {
        return Err(Error::dim("initial action", dims.total(), x0.len()));
    }
    disturbance.validate(dims)?;
    let gains = graph.gamma().diagonal(dims);
    let mut traj = Trajectory {
        dims: dims.clone(),
        iterates: Vec::with_capacity(steps + 1),
        disturbances: Vec::with_capacity(steps),
        costs: None,
    };
    traj.iterates.push(x0.clone());
    for k in 0..steps {
        let d = disturbance.joint(dims, k);
        let next = graph.step(&traj.iterates[k]) - gains.component_mul(&d);
        traj.disturbances.push(d);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: k + 1,
                partial: Box::new(traj),
            });
        }
        traj.iterates.push(next);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerDeviation {
    /// `max_k ||y_j^k - x_j^k||`.
    pub max_deviation: f64,
    /// `max_deviation / max(1, max_k ||x_j^k||)`.
    pub rel_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub source: usize,
    /// Disturbance bound, for sweeps.
    pub bound: Option<f64>,
    pub players: Vec<PlayerDeviation>,
    pub clean: Trajectory,
    pub corrupted: Trajectory,
    /// First step at which either run stopped being finite; deviations then
    /// cover the common finite prefix only.
    pub diverged_at: Option<usize>,
}

impl DeviationReport {
    pub fn deviation(&self, player: usize) -> PlayerDeviation {
        self.players[player]
    }
}

fn run_tolerating_divergence(
    graph: &GameGraph,
    x0: &DVector<f64>,
    steps: usize,
    signal: &DisturbanceSignal,
) -> Result<(Trajectory, Option<usize>)> {
    match run(graph, x0, steps, signal) {
        Ok(t) => Ok((t, None)),
        Err(Error::Diverged { step, partial }) => Ok((*partial, Some(step))),
        Err(e) => Err(e),
    }
}

/// Runs the clean and corrupted recursions from the same `x0` and measures
/// how far each player's actions move.
pub fn compare(
    graph: &GameGraph,
    x0: &DVector<f64>,
    steps: usize,
    disturbance: &DisturbanceSignal,
    costs: Option<&dyn PlayerCosts>,
) -> Result<DeviationReport> {
    let (mut clean, clean_div) =
        run_tolerating_divergence(graph, x0, steps, &DisturbanceSignal::zero(disturbance.player))?;
    let (mut corrupted, corrupt_div) = run_tolerating_divergence(graph, x0, steps, disturbance)?;
    if let Some(c) = costs {
        clean.attach_costs(c);
        corrupted.attach_costs(c);
    }
    let common = clean.iterates.len().min(corrupted.iterates.len());
    let dims = graph.dims();
    let players = (0..dims.players())
        .map(|j| {
            let mut max_dev: f64 = 0.0;
            let mut max_norm: f64 = 0.0;
            for k in 0..common {
                let x = clean.player(j, k);
                max_dev = max_dev.max((corrupted.player(j, k) - x).norm());
                max_norm = max_norm.max(x.norm());
            }
            PlayerDeviation {
                max_deviation: max_dev,
                rel_deviation: max_dev / max_norm.max(1.0),
            }
        })
        .collect();
    let diverged_at = match (clean_div, corrupt_div) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let bound = match disturbance.kind {
        DisturbanceKind::SeededUniform { bound, .. } => Some(bound),
        _ => None,
    };
    Ok(DeviationReport {
        source: disturbance.player,
        bound,
        players,
        clean,
        corrupted,
        diverged_at,
    })
}

/// One [`compare`] per bound. Every bound reuses `seed`, so the disturbance
/// sequences differ only in scale and deviations grow with the bound.
pub fn magnitude_sweep(
    graph: &GameGraph,
    x0: &DVector<f64>,
    steps: usize,
    player: usize,
    bounds: &[f64],
    seed: u64,
    costs: Option<&dyn PlayerCosts>,
) -> Result<Vec<DeviationReport>> {
    if bounds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidSpec("sweep bounds must be nondecreasing".into()));
    }
    bounds
        .par_iter()
        .map(|&b| {
            compare(
                graph,
                x0,
                steps,
                &DisturbanceSignal::seeded_uniform(player, seed, b),
                costs,
            )
        })
        .collect()
}
