//! Quadratic games, their game graphs and the gradient-play operator.
//!
//! Player `i` minimizes
//!
//! ```text
//! f_i(x) = 1/2 x_i' P_i x_i + x_i' (sum_{j != i} P_ij x_j + r_i)
//! ```
//!
//! and gradient play with step sizes `gamma_i` is the affine recursion
//! `x <- W x - Gamma r`, where `W = I - Gamma J` and `J` stacks the blocks
//! `P_i` (diagonal) and `P_ij` (off-diagonal). Players are indexed from zero.

use std::ops::Range;

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::linalg;

/// Reciprocal condition number below which the Jacobian is treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Per-player action dimensions and their offsets in the joint action vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerDims {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl PlayerDims {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpec("a game needs at least one player".into()));
        }
        if let Some(p) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidSpec(format!("player {p} has an empty action space")));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        Ok(PlayerDims { dims, offsets, total })
    }

    /// `count` players with scalar actions.
    pub fn scalar(count: usize) -> Result<Self> {
        Self::new(vec![1; count])
    }

    pub fn players(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn dim(&self, player: usize) -> usize {
        self.dims[player]
    }

    pub fn offset(&self, player: usize) -> usize {
        self.offsets[player]
    }

    pub fn range(&self, player: usize) -> Range<usize> {
        self.offsets[player]..self.offsets[player] + self.dims[player]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.dims
    }

    pub fn check_player(&self, player: usize) -> Result<()> {
        if player < self.players() {
            Ok(())
        } else {
            Err(Error::PlayerIndex {
                index: player,
                players: self.players(),
            })
        }
    }

    /// The `(i, j)` block of an `n x n` matrix.
    pub fn block<'a>(&self, m: &'a DMatrix<f64>, i: usize, j: usize) -> DMatrixView<'a, f64> {
        m.view((self.offsets[i], self.offsets[j]), (self.dims[i], self.dims[j]))
    }

    pub fn slice<'a>(&self, v: &'a DVector<f64>, player: usize) -> DVectorView<'a, f64> {
        v.rows(self.offsets[player], self.dims[player])
    }

    /// Expands per-player scalars into one value per joint coordinate.
    pub fn expand(&self, per_player: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.total);
        for (p, &v) in per_player.iter().enumerate() {
            out.rows_mut(self.offsets[p], self.dims[p]).fill(v);
        }
        out
    }
}

/// An N-player quadratic game.
///
/// The cost blocks are stored assembled in the step-size-free Jacobian `J`
/// (`P_i` on the diagonal, `P_ij` off the diagonal) together with the stacked
/// linear terms `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    dims: PlayerDims,
    jacobian: DMatrix<f64>,
    linear: DVector<f64>,
}

impl QuadraticGame {
    /// Builds a game from own-cost blocks `P_i`, cross blocks `P_ij` (absent
    /// pairs are zero) and linear terms `r_i`.
    pub fn new(
        dims: PlayerDims,
        own: Vec<DMatrix<f64>>,
        cross: impl IntoIterator<Item = ((usize, usize), DMatrix<f64>)>,
        linear: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let players = dims.players();
        if own.len() != players {
            return Err(Error::dim("own-cost blocks", players, own.len()));
        }
        if linear.len() != players {
            return Err(Error::dim("linear terms", players, linear.len()));
        }
        let n = dims.total();
        let mut jacobian = DMatrix::zeros(n, n);
        for (i, p) in own.iter().enumerate() {
            let expect = (dims.dim(i), dims.dim(i));
            if p.shape() != expect {
                return Err(Error::dim(
                    format!("P_{}", i + 1),
                    format!("{expect:?}"),
                    format!("{:?}", p.shape()),
                ));
            }
            jacobian.view_mut((dims.offset(i), dims.offset(i)), expect).copy_from(p);
        }
        for ((i, j), p) in cross {
            dims.check_player(i)?;
            dims.check_player(j)?;
            if i == j {
                return Err(Error::InvalidSpec(format!(
                    "cross block P_{0}{0} names the same player twice",
                    i + 1
                )));
            }
            let expect = (dims.dim(i), dims.dim(j));
            if p.shape() != expect {
                return Err(Error::dim(
                    format!("P_{},{}", i + 1, j + 1),
                    format!("{expect:?}"),
                    format!("{:?}", p.shape()),
                ));
            }
            jacobian
                .view_mut((dims.offset(i), dims.offset(j)), expect)
                .copy_from(&p);
        }
        let mut r = DVector::zeros(n);
        for (i, ri) in linear.iter().enumerate() {
            if ri.len() != dims.dim(i) {
                return Err(Error::dim(format!("r_{}", i + 1), dims.dim(i), ri.len()));
            }
            r.rows_mut(dims.offset(i), dims.dim(i)).copy_from(ri);
        }
        Self::from_jacobian(dims, jacobian, r)
    }

    /// Builds a game directly from the assembled Jacobian and stacked `r`.
    pub fn from_jacobian(dims: PlayerDims, jacobian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let n = dims.total();
        if jacobian.shape() != (n, n) {
            return Err(Error::dim(
                "game Jacobian",
                format!("({n}, {n})"),
                format!("{:?}", jacobian.shape()),
            ));
        }
        if linear.len() != n {
            return Err(Error::dim("stacked linear term", n, linear.len()));
        }
        if !linalg::all_finite(&jacobian) {
            return Err(Error::NonFinite("game cost matrices".into()));
        }
        if linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("game linear terms".into()));
        }
        Ok(QuadraticGame { dims, jacobian, linear })
    }

    pub fn dims(&self) -> &PlayerDims {
        &self.dims
    }

    pub fn players(&self) -> usize {
        self.dims.players()
    }

    /// `P_i`.
    pub fn own(&self, i: usize) -> DMatrixView<'_, f64> {
        self.dims.block(&self.jacobian, i, i)
    }

    /// `P_ij` for `i != j`.
    pub fn cross(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        self.dims.block(&self.jacobian, i, j)
    }

    /// `r_i`.
    pub fn linear(&self, i: usize) -> DVectorView<'_, f64> {
        self.dims.slice(&self.linear, i)
    }

    /// Stacked linear terms `r = (r_1, ..., r_N)`.
    pub fn linear_stacked(&self) -> &DVector<f64> {
        &self.linear
    }

    /// The step-size-free Jacobian `J`; the game graph is `W = I - Gamma J`.
    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    /// Players whose `P_i` is not symmetric. Gradients use `P_i x_i` as
    /// written, so such games behave as if `P_i` were taken literally.
    pub fn asymmetric_players(&self) -> Vec<usize> {
        (0..self.players())
            .filter(|&i| !linalg::is_symmetric(&self.own(i).clone_owned(), 1e-12))
            .collect()
    }

    /// `true` when `P_ij = P_ji^T` for all pairs, within
    /// `tol * max(1, ||P_ij||_F)`.
    pub fn is_potential(&self, tol: f64) -> bool {
        self.potential_violation(tol).is_none()
    }

    pub(crate) fn potential_violation(&self, tol: f64) -> Option<((usize, usize), f64)> {
        let players = self.players();
        for i in 0..players {
            for j in (i + 1)..players {
                let pij = self.cross(i, j);
                let residual = (pij - self.cross(j, i).transpose()).norm();
                if residual > tol * pij.norm().max(1.0) {
                    return Some(((i, j), residual));
                }
            }
        }
        None
    }

    /// Cost of player `i` at joint action `x`.
    pub fn cost(&self, i: usize, x: &DVector<f64>) -> f64 {
        let xi = self.dims.slice(x, i);
        let mut coupling = self.linear(i).clone_owned();
        for j in (0..self.players()).filter(|&j| j != i) {
            coupling += self.cross(i, j) * self.dims.slice(x, j);
        }
        0.5 * xi.dot(&(self.own(i) * xi)) + xi.dot(&coupling)
    }

    /// Stacked individual gradients `(D_1 f_1, ..., D_N f_N) = J x + r`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.jacobian * x + &self.linear
    }
}

/// Per-player step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizes(Vec<f64>);

impl StepSizes {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        for (player, &value) in gammas.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidStepSize { player, value });
            }
        }
        Ok(StepSizes(gammas))
    }

    pub fn uniform(players: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![gamma; players])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, player: usize) -> f64 {
        self.0[player]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Diagonal of `Gamma = blkdiag(gamma_1 I, ..., gamma_N I)`.
    pub fn diagonal(&self, dims: &PlayerDims) -> DVector<f64> {
        dims.expand(&self.0)
    }
}

/// The game graph: block adjacency matrix `W` of the gradient-play
/// recursion `x <- W x - offset`, with `offset = Gamma r` for games.
#[derive(Debug, Clone, PartialEq)]
pub struct GameGraph {
    dims: PlayerDims,
    w: DMatrix<f64>,
    gamma: StepSizes,
    offset: DVector<f64>,
}

impl GameGraph {
    /// Assembles a graph from an explicit adjacency matrix.
    pub fn from_parts(dims: PlayerDims, w: DMatrix<f64>, gamma: StepSizes, offset: DVector<f64>) -> Result<Self> {
        let n = dims.total();
        if w.shape() != (n, n) {
            return Err(Error::dim(
                "adjacency matrix W",
                format!("({n}, {n})"),
                format!("{:?}", w.shape()),
            ));
        }
        if gamma.len() != dims.players() {
            return Err(Error::dim("step sizes", dims.players(), gamma.len()));
        }
        if offset.len() != n {
            return Err(Error::dim("offset", n, offset.len()));
        }
        if !linalg::all_finite(&w) {
            return Err(Error::NonFinite("adjacency matrix W".into()));
        }
        Ok(GameGraph { dims, w, gamma, offset })
    }

    pub fn dims(&self) -> &PlayerDims {
        &self.dims
    }

    pub fn players(&self) -> usize {
        self.dims.players()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn gamma(&self) -> &StepSizes {
        &self.gamma
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    /// `W_ij`: the weight of edge `j -> i`, shape `n_i x n_j`.
    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        self.dims.block(&self.w, i, j)
    }

    /// Edge `from -> to` exists when some entry of `W_{to,from}` exceeds
    /// `zero_tol` in magnitude. Self loops always exist.
    pub fn has_edge(&self, from: usize, to: usize, zero_tol: f64) -> bool {
        from == to || self.block(to, from).iter().any(|v| v.abs() > zero_tol)
    }

    /// One undisturbed step `W x - offset`.
    pub fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * x - &self.offset
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.w)
    }
}

/// `W_ii = I - gamma_i P_i`, `W_ij = -gamma_i P_ij`, offset `Gamma r`.
pub fn build_game_graph(game: &QuadraticGame, gamma: &StepSizes) -> Result<GameGraph> {
    if gamma.len() != game.players() {
        return Err(Error::dim("step sizes", game.players(), gamma.len()));
    }
    let n = game.dims().total();
    let diag = gamma.diagonal(game.dims());
    let mut w = -game.jacobian().clone();
    for (r, mut row) in w.row_iter_mut().enumerate() {
        row *= diag[r];
    }
    for k in 0..n {
        w[(k, k)] += 1.0;
    }
    let offset = game.linear_stacked().component_mul(&diag);
    GameGraph::from_parts(game.dims().clone(), w, gamma.clone(), offset)
}

/// The assembled Jacobian `J` with `W = I - Gamma J`.
pub fn game_jacobian(game: &QuadraticGame) -> DMatrix<f64> {
    game.jacobian().clone()
}

/// The joint action solving `J x = -r`: every player's first-order
/// condition holds and `x` is a fixed point of gradient play for any step sizes.
pub fn nash_equilibrium(game: &QuadraticGame) -> Result<DVector<f64>> {
    let j = game.jacobian();
    let rcond = linalg::reciprocal_condition(j);
    if !(rcond >= SINGULAR_RCOND) {
        return Err(Error::SingularJacobian { rcond });
    }
    j.clone()
        .lu()
        .solve(&(-game.linear_stacked()))
        .ok_or(Error::SingularJacobian { rcond })
}

/// Uniform step size `sqrt(alpha) / beta` with
/// `alpha = lambda_min(1/4 (J + J')'(J + J'))` and `beta = lambda_max(J'J)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformStepSize {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn uniform_step_size(jacobian: &DMatrix<f64>) -> Result<UniformStepSize> {
    if !jacobian.is_square() {
        return Err(Error::dim("Jacobian", "square", format!("{:?}", jacobian.shape())));
    }
    let sym = jacobian + jacobian.transpose();
    let a_mat = sym.transpose() * &sym * 0.25;
    let b_mat = jacobian.transpose() * jacobian;
    let alpha = linalg::symmetric_eigenvalues(&a_mat).min();
    let beta = linalg::symmetric_eigenvalues(&b_mat).max();
    // Rounding leaves O(eps * beta) eigenvalues where the exact alpha is zero.
    let floor = f64::EPSILON * beta * jacobian.nrows() as f64;
    if !(beta > 0.0) || !(alpha > floor) {
        return Err(Error::StepSizeInapplicable { alpha, beta });
    }
    Ok(UniformStepSize {
        gamma: alpha.sqrt() / beta,
        alpha,
        beta,
    })
}
