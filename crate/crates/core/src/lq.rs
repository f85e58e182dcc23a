//! Finite-horizon LQ dynamic games lifted to one-shot quadratic games.
//!
//! Player `i` picks an open-loop control sequence `U_i = (u_i^0, ..., u_i^{T-1})`
//! and pays
//!
//! ```text
//! 1/2 sum_{t=0}^{T} (z^t - c_i)' Q_i (z^t - c_i) + 1/2 sum_{t=0}^{T-1} u_i^t' R_i u_i^t
//! z^{t+1} = A z^t + sum_j B_j u_j^t
//! ```
//!
//! Stacking states gives `Z = sum_j G_j U_j + H z^0`, which turns the game
//! into a quadratic game with `P_i = G_i' Qbar_i G_i + Rbar_i`,
//! `P_ij = G_i' Qbar_i G_j` and `r_i = G_i' Qbar_i (H z^0 - C_i)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{PlayerDims, QuadraticGame};
use crate::linalg;
use crate::simulator::PlayerCosts;

/// Relative threshold for the necessary-condition product and for singular values.
pub const RANK_TOLERANCE: f64 = 1e-9;
/// Eigenvalue floor for the positive-definiteness of `Q_j`.
pub const PD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LqGameSpec {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub horizon: usize,
    pub z0: DVector<f64>,
    /// Per-player target points `c_i`; zero when absent.
    pub targets: Option<Vec<DVector<f64>>>,
}

impl LqGameSpec {
    pub fn players(&self) -> usize {
        self.b.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self, i: usize) -> usize {
        self.b[i].ncols()
    }

    pub fn target(&self, i: usize) -> DVector<f64> {
        match &self.targets {
            Some(t) => t[i].clone(),
            None => DVector::zeros(self.state_dim()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.a.nrows();
        if m == 0 || !self.a.is_square() {
            return Err(Error::dim("A", "nonempty square", format!("{:?}", self.a.shape())));
        }
        let players = self.b.len();
        if players == 0 {
            return Err(Error::InvalidSpec("an LQ game needs at least one player".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidSpec("horizon T must be at least 1".into()));
        }
        if self.q.len() != players || self.r.len() != players {
            return Err(Error::dim(
                "Q/R lists",
                format!("{players} entries each"),
                format!("{} and {}", self.q.len(), self.r.len()),
            ));
        }
        if self.z0.len() != m {
            return Err(Error::dim("z0", m, self.z0.len()));
        }
        for i in 0..players {
            let p = i + 1;
            if self.b[i].nrows() != m || self.b[i].ncols() == 0 {
                return Err(Error::dim(
                    format!("B_{p}"),
                    format!("{m} rows, >= 1 column"),
                    format!("{:?}", self.b[i].shape()),
                ));
            }
            if self.q[i].shape() != (m, m) {
                return Err(Error::dim(
                    format!("Q_{p}"),
                    format!("({m}, {m})"),
                    format!("{:?}", self.q[i].shape()),
                ));
            }
            if !linalg::is_symmetric(&self.q[i], 1e-12) {
                return Err(Error::InvalidSpec(format!("Q_{p} is not symmetric")));
            }
            let mi = self.b[i].ncols();
            if self.r[i].shape() != (mi, mi) {
                return Err(Error::dim(
                    format!("R_{p}"),
                    format!("({mi}, {mi})"),
                    format!("{:?}", self.r[i].shape()),
                ));
            }
            if !linalg::is_symmetric(&self.r[i], 1e-12) || self.r[i].clone().cholesky().is_none() {
                return Err(Error::InvalidSpec(format!("R_{p} is not symmetric positive definite")));
            }
        }
        if let Some(t) = &self.targets {
            if t.len() != players {
                return Err(Error::dim("targets", players, t.len()));
            }
            if let Some(p) = t.iter().position(|c| c.len() != m) {
                return Err(Error::dim(format!("c_{}", p + 1), m, t[p].len()));
            }
        }
        let finite = |m: &DMatrix<f64>| linalg::all_finite(m);
        if !finite(&self.a)
            || !self.b.iter().chain(&self.q).chain(&self.r).all(finite)
            || self.z0.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("LQ game matrices".into()));
        }
        Ok(())
    }

    /// State sequence `(z^0, ..., z^T)` stacked, iterating the dynamics for
    /// the stacked controls `u = (U_1, ..., U_N)`.
    pub fn simulate_dynamics(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.state_dim();
        let t_len = self.horizon;
        let mut out = DVector::zeros((t_len + 1) * m);
        let mut z = self.z0.clone();
        out.rows_mut(0, m).copy_from(&z);
        let offsets = self.control_offsets();
        for t in 0..t_len {
            let mut next = &self.a * &z;
            for (i, b) in self.b.iter().enumerate() {
                let mi = b.ncols();
                next += b * u.rows(offsets[i] + t * mi, mi);
            }
            z = next;
            out.rows_mut((t + 1) * m, m).copy_from(&z);
        }
        out
    }

    /// Player `i`'s dynamic-game cost evaluated through the dynamics.
    pub fn dynamic_cost(&self, i: usize, u: &DVector<f64>) -> f64 {
        let m = self.state_dim();
        let z = self.simulate_dynamics(u);
        let c = self.target(i);
        let mut state_cost = 0.0;
        for t in 0..=self.horizon {
            let e = z.rows(t * m, m) - &c;
            state_cost += e.dot(&(&self.q[i] * &e));
        }
        let mi = self.input_dim(i);
        let off = self.control_offsets()[i];
        let mut control_cost = 0.0;
        for t in 0..self.horizon {
            let ut = u.rows(off + t * mi, mi);
            control_cost += ut.dot(&(&self.r[i] * ut));
        }
        0.5 * (state_cost + control_cost)
    }

    fn control_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.b
            .iter()
            .map(|b| {
                let o = off;
                off += b.ncols() * self.horizon;
                o
            })
            .collect()
    }

    fn powers_of_a(&self, count: usize) -> Vec<DMatrix<f64>> {
        let m = self.state_dim();
        let mut out = vec![DMatrix::identity(m, m)];
        for k in 1..count {
            let next = &self.a * &out[k - 1];
            out.push(next);
        }
        out
    }
}

/// The stacked matrices of a lifted LQ game and the quadratic game they define.
#[derive(Debug, Clone)]
pub struct LiftedLqGame {
    pub spec: LqGameSpec,
    /// `G_i`, `(T+1) m x T m_i`; block row `t`, column `s` is `A^{t-1-s} B_i` for `s < t`.
    pub g: Vec<DMatrix<f64>>,
    /// `H = [I; A; ...; A^T]`.
    pub h: DMatrix<f64>,
    pub qbar: Vec<DMatrix<f64>>,
    pub rbar: Vec<DMatrix<f64>>,
    pub game: QuadraticGame,
}

pub fn lift(spec: &LqGameSpec) -> Result<LiftedLqGame> {
    spec.validate()?;
    let m = spec.state_dim();
    let t_len = spec.horizon;
    let a_pow = spec.powers_of_a(t_len + 1);

    let mut h = DMatrix::zeros((t_len + 1) * m, m);
    for (t, p) in a_pow.iter().enumerate() {
        h.view_mut((t * m, 0), (m, m)).copy_from(p);
    }

    let g: Vec<DMatrix<f64>> = spec
        .b
        .iter()
        .map(|b| {
            let mi = b.ncols();
            let mut gi = DMatrix::zeros((t_len + 1) * m, t_len * mi);
            for t in 1..=t_len {
                for s in 0..t {
                    let blk = &a_pow[t - 1 - s] * b;
                    gi.view_mut((t * m, s * mi), (m, mi)).copy_from(&blk);
                }
            }
            gi
        })
        .collect();
    let qbar: Vec<DMatrix<f64>> = spec.q.iter().map(|q| linalg::repeat_block_diag(q, t_len + 1)).collect();
    let rbar: Vec<DMatrix<f64>> = spec.r.iter().map(|r| linalg::repeat_block_diag(r, t_len)).collect();

    let players = spec.players();
    let dims = PlayerDims::new((0..players).map(|i| t_len * spec.input_dim(i)).collect())?;
    let free = &h * &spec.z0;
    let mut own = Vec::with_capacity(players);
    let mut cross = Vec::new();
    let mut linear = Vec::with_capacity(players);
    for i in 0..players {
        let gq = g[i].transpose() * &qbar[i];
        own.push(&gq * &g[i] + &rbar[i]);
        for j in (0..players).filter(|&j| j != i) {
            cross.push(((i, j), &gq * &g[j]));
        }
        let stacked_target = spec
            .target(i)
            .iter()
            .copied()
            .cycle()
            .take((t_len + 1) * m)
            .collect::<Vec<_>>();
        linear.push(&gq * (&free - DVector::from_vec(stacked_target)));
    }
    let game = QuadraticGame::new(dims, own, cross, linear)?;
    Ok(LiftedLqGame {
        spec: spec.clone(),
        g,
        h,
        qbar,
        rbar,
        game,
    })
}

impl LiftedLqGame {
    /// Stacked states `sum_i G_i U_i + H z^0`.
    pub fn states(&self, u: &DVector<f64>) -> DVector<f64> {
        let dims = self.game.dims();
        let mut z = &self.h * &self.spec.z0;
        for (i, gi) in self.g.iter().enumerate() {
            z += gi * dims.slice(u, i);
        }
        z
    }
}

/// Costs reported for a lifted game are the dynamic-game costs.
impl PlayerCosts for LiftedLqGame {
    fn players(&self) -> usize {
        self.spec.players()
    }

    fn cost(&self, player: usize, x: &DVector<f64>) -> f64 {
        self.spec.dynamic_cost(player, x)
    }
}

/// Outcome of the LQ necessary-condition test for decoupling `j` from `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqCondition {
    pub holds: bool,
    pub residual_norm: f64,
}

fn check_pair(spec: &LqGameSpec, i: usize, j: usize) -> Result<()> {
    spec.validate()?;
    let players = spec.players();
    for index in [i, j] {
        if index >= players {
            return Err(Error::PlayerIndex { index, players });
        }
    }
    if i == j {
        return Err(Error::SamePlayer(i));
    }
    Ok(())
}

/// `[B_j'; B_j' A'; ...; B_j' (A')^{T-1}] Q_j [B_i, A B_i, ..., A^{T-1} B_i] = 0`,
/// which must hold whenever player `j` is decoupled from player `i`.
pub fn lq_decoupling_condition(spec: &LqGameSpec, i: usize, j: usize) -> Result<LqCondition> {
    check_pair(spec, i, j)?;
    let m = spec.state_dim();
    let t_len = spec.horizon;
    let a_pow = spec.powers_of_a(t_len);
    let (mi, mj) = (spec.input_dim(i), spec.input_dim(j));
    let mut obs = DMatrix::zeros(t_len * mj, m);
    let mut ctrl = DMatrix::zeros(m, t_len * mi);
    for (t, p) in a_pow.iter().enumerate() {
        obs.view_mut((t * mj, 0), (mj, m))
            .copy_from(&(spec.b[j].transpose() * p.transpose()));
        ctrl.view_mut((0, t * mi), (m, mi)).copy_from(&(p * &spec.b[i]));
    }
    let product = &obs * &spec.q[j] * &ctrl;
    let residual_norm = product.norm();
    let scale = obs.norm() * spec.q[j].norm() * ctrl.norm();
    Ok(LqCondition {
        holds: residual_norm <= RANK_TOLERANCE * scale.max(1.0),
        residual_norm,
    })
}

/// Subspace form of the LQ condition: with `S = Q_j^{1/2}`,
/// `At = S A S^{-1}`, `Bt_i = S B_i`, `Bt_j = S B_j`, the controllable
/// subspace of `(At, Bt_i)` must lie in the unobservable subspace of
/// `(Bt_j', At')`. Requires `Q_j` positive definite and `T >= m`.
pub fn lq_decoupling_subspace_check(spec: &LqGameSpec, i: usize, j: usize) -> Result<bool> {
    check_pair(spec, i, j)?;
    let m = spec.state_dim();
    if spec.horizon < m {
        return Err(Error::InvalidSpec(format!(
            "subspace test needs horizon T >= state dimension ({} < {m})",
            spec.horizon
        )));
    }
    let (root, inv_root) = linalg::sqrt_pd(&spec.q[j], PD_FLOOR)
        .ok_or_else(|| Error::InvalidSpec(format!("Q_{} is not positive definite", j + 1)))?;
    let a_t = &root * &spec.a * &inv_root;
    let b_i = &root * &spec.b[i];
    let c_j = (&root * &spec.b[j]).transpose();

    // Krylov matrices over m steps span the full invariant subspaces.
    let (mi, mj) = (b_i.ncols(), c_j.nrows());
    let mut krylov = DMatrix::zeros(m, m * mi);
    let mut obs = DMatrix::zeros(m * mj, m);
    let a_t_tr = a_t.transpose();
    let mut blk = b_i.clone();
    let mut row = c_j.clone();
    for k in 0..m {
        krylov.view_mut((0, k * mi), (m, mi)).copy_from(&blk);
        obs.view_mut((k * mj, 0), (mj, m)).copy_from(&row);
        blk = &a_t * blk;
        row *= &a_t_tr;
    }
    let controllable = linalg::range_basis(&krylov, RANK_TOLERANCE);
    if controllable.ncols() == 0 {
        return Ok(true);
    }
    let unobservable = linalg::null_basis(&obs, RANK_TOLERANCE);
    let joint = DMatrix::from_fn(m, unobservable.ncols() + controllable.ncols(), |r, c| {
        if c < unobservable.ncols() {
            unobservable[(r, c)]
        } else {
            controllable[(r, c - unobservable.ncols())]
        }
    });
    Ok(linalg::rank(&joint, RANK_TOLERANCE) == unobservable.ncols())
}
