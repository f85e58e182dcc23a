//! Instance generators and independent oracles shared by the integration
//! suites. Nothing here calls into the code paths it is used to check.
#![allow(dead_code)]

use ddgame::bilinear::{BilinearGameSpec, PlayMode};
use ddgame::lq::LqGameSpec;
use ddgame::{GameGraph, PlayerDims, QuadraticGame, StepSizes};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut TestRng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn uniform_vector(rng: &mut TestRng, len: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(lo..hi))
}

/// Random game: `N` in 2..=5, `n_i` in {1, 2}, entries uniform in [-1, 1],
/// each cross block zeroed with probability `zero_prob`.
pub fn random_game(rng: &mut TestRng, zero_prob: f64) -> QuadraticGame {
    let players = rng.random_range(2..=5);
    random_game_with(rng, players, zero_prob)
}

pub fn random_game_with(rng: &mut TestRng, players: usize, zero_prob: f64) -> QuadraticGame {
    let dims = PlayerDims::new((0..players).map(|_| rng.random_range(1..=2)).collect()).unwrap();
    let own = (0..players)
        .map(|i| uniform_matrix(rng, dims.dim(i), dims.dim(i), -1.0, 1.0))
        .collect();
    let mut cross = Vec::new();
    for i in 0..players {
        for j in (0..players).filter(|&j| j != i) {
            if rng.random_bool(zero_prob) {
                continue;
            }
            cross.push(((i, j), uniform_matrix(rng, dims.dim(i), dims.dim(j), -1.0, 1.0)));
        }
    }
    let linear = (0..players)
        .map(|i| uniform_vector(rng, dims.dim(i), -1.0, 1.0))
        .collect();
    QuadraticGame::new(dims, own, cross, linear).unwrap()
}

pub fn random_steps(rng: &mut TestRng, players: usize) -> StepSizes {
    StepSizes::new((0..players).map(|_| rng.random_range(0.05..0.5)).collect()).unwrap()
}

/// Well-conditioned game: diagonally dominant symmetric own blocks.
pub fn well_conditioned_game(rng: &mut TestRng) -> QuadraticGame {
    let base = random_game(rng, 0.3);
    let dims = base.dims().clone();
    let n = dims.total();
    let mut j = base.jacobian().clone();
    for i in 0..dims.players() {
        let r = dims.range(i);
        let p = uniform_matrix(rng, dims.dim(i), dims.dim(i), -1.0, 1.0);
        let sym = &p * p.transpose() + DMatrix::identity(dims.dim(i), dims.dim(i)) * (2.0 * n as f64);
        j.view_mut((r.start, r.start), (dims.dim(i), dims.dim(i)))
            .copy_from(&sym);
    }
    QuadraticGame::from_jacobian(dims, j, base.linear_stacked().clone()).unwrap()
}

/// Random potential game (`P_ij = P_ji^T`, symmetric `P_i`), with a share
/// of cross blocks zeroed symmetrically.
pub fn random_potential_game(rng: &mut TestRng, zero_prob: f64) -> QuadraticGame {
    let players = rng.random_range(2..=5);
    let dims = PlayerDims::new((0..players).map(|_| rng.random_range(1..=2)).collect()).unwrap();
    let own = (0..players)
        .map(|i| {
            let p = uniform_matrix(rng, dims.dim(i), dims.dim(i), -1.0, 1.0);
            (&p + p.transpose()) * 0.5
        })
        .collect();
    let mut cross = Vec::new();
    for i in 0..players {
        for j in (i + 1)..players {
            if rng.random_bool(zero_prob) {
                continue;
            }
            let p = uniform_matrix(rng, dims.dim(i), dims.dim(j), -1.0, 1.0);
            cross.push(((j, i), p.transpose()));
            cross.push(((i, j), p));
        }
    }
    let linear = (0..players)
        .map(|i| uniform_vector(rng, dims.dim(i), -1.0, 1.0))
        .collect();
    QuadraticGame::new(dims, own, cross, linear).unwrap()
}

/// Four scalar players on the diamond graph: forward edges `1->2` (alpha),
/// `1->3` (beta), `2->4` (gamma), `3->4` (delta), their reverses, and self
/// loops `w`. Indices are zero-based (player 1 is index 0).
#[derive(Debug, Clone, Copy)]
pub struct Diamond {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub loops: [f64; 4],
    /// Weights of `2->1`, `3->1`, `4->2`, `4->3`.
    pub reverse: [f64; 4],
}

impl Diamond {
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(4, 4);
        for k in 0..4 {
            w[(k, k)] = self.loops[k];
        }
        w[(1, 0)] = self.alpha;
        w[(2, 0)] = self.beta;
        w[(3, 1)] = self.gamma;
        w[(3, 2)] = self.delta;
        w[(0, 1)] = self.reverse[0];
        w[(0, 2)] = self.reverse[1];
        w[(1, 3)] = self.reverse[2];
        w[(2, 3)] = self.reverse[3];
        w
    }

    /// Graph with the weights placed directly in `W` and unit gains.
    pub fn graph(&self) -> GameGraph {
        GameGraph::from_parts(
            PlayerDims::scalar(4).unwrap(),
            self.matrix(),
            StepSizes::uniform(4, 1.0).unwrap(),
            DVector::zeros(4),
        )
        .unwrap()
    }

    /// The quadratic game whose gradient play under `gamma` has this graph:
    /// `P_i = (1 - w_i) / gamma_i`, `P_ij = -W_ij / gamma_i`.
    pub fn game(&self, gamma: &StepSizes, linear: &DVector<f64>) -> QuadraticGame {
        let w = self.matrix();
        let j = DMatrix::from_fn(4, 4, |r, c| {
            let id = if r == c { 1.0 } else { 0.0 };
            (id - w[(r, c)]) / gamma.get(r)
        });
        QuadraticGame::from_jacobian(PlayerDims::scalar(4).unwrap(), j, linear.clone()).unwrap()
    }

    /// Randomized weights satisfying `alpha gamma + beta delta = 0`, `w_2 = w_3`.
    pub fn random_decoupled(rng: &mut TestRng) -> Self {
        let mag = |rng: &mut TestRng| {
            let v: f64 = rng.random_range(0.2..0.45);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        };
        let alpha = mag(rng);
        let beta = mag(rng);
        let gamma = mag(rng);
        let w23 = rng.random_range(0.1..0.5);
        Diamond {
            alpha,
            beta,
            gamma,
            delta: -alpha * gamma / beta,
            loops: [rng.random_range(0.1..0.5), w23, w23, rng.random_range(0.1..0.5)],
            reverse: [mag(rng), mag(rng), mag(rng), mag(rng)],
        }
    }
}

/// Sum over all `k`-edge node sequences `i = v_0, ..., v_k = j` of
/// `W_{v_k v_{k-1}} ... W_{v_1 v_0}`, with no pruning of zero blocks.
pub fn brute_force_path_sum(w: &DMatrix<f64>, dims: &PlayerDims, i: usize, j: usize, k: usize) -> DMatrix<f64> {
    let players = dims.players();
    let block = |a: usize, b: usize| -> DMatrix<f64> { dims.block(w, a, b).clone_owned() };
    let mut total = DMatrix::zeros(dims.dim(j), dims.dim(i));
    let mut seq = vec![0usize; k.saturating_sub(1)];
    loop {
        let mut prod = DMatrix::identity(dims.dim(i), dims.dim(i));
        let mut prev = i;
        for &v in seq.iter().chain(std::iter::once(&j)) {
            prod = block(v, prev) * prod;
            prev = v;
        }
        total += prod;
        // Odometer increment over intermediate nodes.
        let mut pos = 0;
        loop {
            if pos == seq.len() {
                return total;
            }
            seq[pos] += 1;
            if seq[pos] < players {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}

pub const B1: [f64; 2] = [1.0, 0.0];
pub const B4: [f64; 2] = [0.0, 1.0];

/// Input directions of the four tug-of-war players.
pub fn tug_inputs() -> Vec<DMatrix<f64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        DMatrix::from_column_slice(2, 1, &B1),
        DMatrix::from_column_slice(2, 1, &[s, s]),
        DMatrix::from_column_slice(2, 1, &[-s, s]),
        DMatrix::from_column_slice(2, 1, &B4),
    ]
}

/// Four players pulling a planar point: `A = I`, `Q_i = I`, `R_i = 10`,
/// targets `c_i = 4 B_i`, random `z0`.
pub fn tug_of_war(horizon: usize, seed: u64) -> LqGameSpec {
    let mut r = rng(seed);
    let b = tug_inputs();
    LqGameSpec {
        a: DMatrix::identity(2, 2),
        targets: Some(b.iter().map(|bi| bi.column(0) * 4.0).collect()),
        b,
        q: vec![DMatrix::identity(2, 2); 4],
        r: vec![DMatrix::from_element(1, 1, 10.0); 4],
        horizon,
        z0: uniform_vector(&mut r, 2, -5.0, 5.0),
    }
}

/// The printed 9x9 weight matrix: `E[s][t] = 9 - max(s, t)`.
pub fn printed_e() -> DMatrix<f64> {
    DMatrix::from_fn(9, 9, |s, t| 9.0 - s.max(t) as f64)
}

fn spd(rng: &mut TestRng, n: usize, shift: f64) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n, n, -1.0, 1.0);
    &m * m.transpose() + DMatrix::identity(n, n) * shift
}

/// Random LQ game: `m` in 1..=3, 2..=3 players, `m_i` in {1, 2}, `T` in 1..=4.
pub fn random_lq(rng: &mut TestRng) -> LqGameSpec {
    let m = rng.random_range(1..=3);
    let players = rng.random_range(2..=3);
    let horizon = rng.random_range(1..=4);
    let b: Vec<DMatrix<f64>> = (0..players)
        .map(|_| {
            let mi = rng.random_range(1..=2);
            uniform_matrix(rng, m, mi, -1.0, 1.0)
        })
        .collect();
    LqGameSpec {
        a: uniform_matrix(rng, m, m, -0.8, 0.8),
        q: (0..players).map(|_| spd(rng, m, 0.1)).collect(),
        r: b.iter().map(|bi| spd(rng, bi.ncols(), 1.0)).collect(),
        b,
        horizon,
        z0: uniform_vector(rng, m, -1.0, 1.0),
        targets: None,
    }
}

/// LQ game with two decoupled channels: `A` block-diagonal, player 1 acting
/// on the first state block, player 2 on the second, costs block-diagonal.
pub fn split_lq(rng: &mut TestRng) -> LqGameSpec {
    let (m1, m2) = (rng.random_range(1..=2), rng.random_range(1..=2));
    let m = m1 + m2;
    let mut a = DMatrix::zeros(m, m);
    a.view_mut((0, 0), (m1, m1))
        .copy_from(&uniform_matrix(rng, m1, m1, -0.8, 0.8));
    a.view_mut((m1, m1), (m2, m2))
        .copy_from(&uniform_matrix(rng, m2, m2, -0.8, 0.8));
    let mut b1 = DMatrix::zeros(m, 1);
    b1.view_mut((0, 0), (m1, 1))
        .copy_from(&uniform_matrix(rng, m1, 1, -1.0, 1.0));
    let mut b2 = DMatrix::zeros(m, 1);
    b2.view_mut((m1, 0), (m2, 1))
        .copy_from(&uniform_matrix(rng, m2, 1, -1.0, 1.0));
    let block_q = |rng: &mut TestRng| {
        let mut q = DMatrix::zeros(m, m);
        q.view_mut((0, 0), (m1, m1)).copy_from(&spd(rng, m1, 0.1));
        q.view_mut((m1, m1), (m2, m2)).copy_from(&spd(rng, m2, 0.1));
        q
    };
    LqGameSpec {
        a,
        b: vec![b1, b2],
        q: vec![block_q(rng), block_q(rng)],
        r: vec![spd(rng, 1, 1.0), spd(rng, 1, 1.0)],
        horizon: rng.random_range(m..=m + 2),
        z0: uniform_vector(rng, m, -1.0, 1.0),
        targets: None,
    }
}

/// Random bilinear game with roughly `zero_prob` of the payoff entries zeroed.
/// Nonzero entries have magnitude in [0.1, 1], which keeps nonzero path sums
/// well above the relative zero test.
pub fn random_bilinear(rng: &mut TestRng, zero_prob: f64) -> BilinearGameSpec {
    let (n1, n2) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let sparse = |rows, cols, rng: &mut TestRng| {
        DMatrix::from_fn(rows, cols, |_, _| {
            if rng.random_bool(zero_prob) {
                0.0
            } else {
                let v: f64 = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            }
        })
    };
    let a = sparse(n1, n2, rng);
    let b = sparse(n2, n1, rng);
    BilinearGameSpec {
        a,
        b,
        gamma1: rng.random_range(0.05..0.5),
        gamma2: rng.random_range(0.05..0.5),
        mode: if rng.random_bool(0.5) {
            PlayMode::Simultaneous
        } else {
            PlayMode::Alternating
        },
    }
}

/// Rollout of the dynamics written out independently of the library.
pub fn rollout(spec: &LqGameSpec, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut z = vec![spec.z0.clone()];
    for t in 0..spec.horizon {
        let mut next = &spec.a * &z[t];
        for (b, u) in spec.b.iter().zip(controls) {
            let mi = b.ncols();
            next += b * u.rows(t * mi, mi);
        }
        z.push(next);
    }
    z
}

pub fn oracle_cost(spec: &LqGameSpec, i: usize, controls: &[DVector<f64>]) -> f64 {
    let c = spec.target(i);
    let states: f64 = rollout(spec, controls)
        .iter()
        .map(|z| {
            let e = z - &c;
            e.dot(&(&spec.q[i] * &e))
        })
        .sum();
    let mi = spec.input_dim(i);
    let inputs: f64 = (0..spec.horizon)
        .map(|t| {
            let u = controls[i].rows(t * mi, mi);
            u.dot(&(&spec.r[i] * u))
        })
        .sum();
    0.5 * (states + inputs)
}

pub fn split_controls(spec: &LqGameSpec, u: &DVector<f64>) -> Vec<DVector<f64>> {
    let mut off = 0;
    (0..spec.players())
        .map(|i| {
            let len = spec.horizon * spec.input_dim(i);
            let part = u.rows(off, len).clone_owned();
            off += len;
            part
        })
        .collect()
}

pub fn stacked_len(spec: &LqGameSpec) -> usize {
    (0..spec.players()).map(|i| spec.horizon * spec.input_dim(i)).sum()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |k, _| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += h;
        minus[k] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
