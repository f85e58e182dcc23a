//! Two-player bilinear games `f_1 = x_1' A x_2`, `f_2 = x_1' B' x_2` under
//! simultaneous and alternating gradient play.
//!
//! Simultaneous play `x_1 <- x_1 - g_1 A x_2`, `x_2 <- x_2 - g_2 B x_1` has
//! graph `[[I, -g_1 A], [-g_2 B, I]]`. Alternating play feeds player 2 the
//! fresh `x_1`, giving `[[I, -g_1 A], [-g_2 B, I + g_1 g_2 B A]]`.
//!
//! Graphs are built at coordinate level: every scalar coordinate is its own
//! node, coordinate `i` of side one is node `i` and coordinate `i` of side two
//! is node `n_1 + i`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{GameGraph, PlayerDims, QuadraticGame, StepSizes};

/// Absolute threshold for the step-size-free coupling conditions.
pub const CONDITION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlayMode {
    Simultaneous,
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearGameSpec {
    /// `n_1 x n_2`.
    pub a: DMatrix<f64>,
    /// `n_2 x n_1`.
    pub b: DMatrix<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub mode: PlayMode,
}

impl BilinearGameSpec {
    pub fn n1(&self) -> usize {
        self.a.nrows()
    }

    pub fn n2(&self) -> usize {
        self.a.ncols()
    }

    pub fn side_dim(&self, side: Side) -> usize {
        match side {
            Side::One => self.n1(),
            Side::Two => self.n2(),
        }
    }

    /// Node index of coordinate `index` on `side`.
    pub fn node(&self, side: Side, index: usize) -> usize {
        match side {
            Side::One => index,
            Side::Two => self.n1() + index,
        }
    }

    fn validate_shapes(&self) -> Result<()> {
        let (n1, n2) = self.a.shape();
        if n1 == 0 || n2 == 0 {
            return Err(Error::dim("A", "nonempty", format!("{:?}", self.a.shape())));
        }
        if self.b.shape() != (n2, n1) {
            return Err(Error::dim(
                "B",
                format!("({n2}, {n1})"),
                format!("{:?}", self.b.shape()),
            ));
        }
        if !self.a.iter().chain(self.b.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("bilinear payoff matrices".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shapes()?;
        for (player, value) in [(0, self.gamma1), (1, self.gamma2)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidStepSize { player, value });
            }
        }
        Ok(())
    }

    fn check_coord(&self, side: Side, index: usize) -> Result<()> {
        let dim = self.side_dim(side);
        if index < dim {
            Ok(())
        } else {
            Err(Error::CoordinateIndex { index, dim })
        }
    }

    /// The step-size-free matrix `J` with `W = I - Gamma J`. For alternating
    /// play the `(2, 2)` block `-g_1 B A` absorbs player 1's step size.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.n1(), self.n2());
        let mut j = DMatrix::zeros(n1 + n2, n1 + n2);
        j.view_mut((0, n1), (n1, n2)).copy_from(&self.a);
        j.view_mut((n1, 0), (n2, n1)).copy_from(&self.b);
        if self.mode == PlayMode::Alternating {
            j.view_mut((n1, n1), (n2, n2))
                .copy_from(&(&self.b * &self.a * -self.gamma1));
        }
        j
    }

    /// The coordinate-level quadratic game whose gradient play is this
    /// bilinear dynamics (for alternating play, with player 1's step size
    /// folded into player 2's cost).
    pub fn to_quadratic_game(&self) -> Result<QuadraticGame> {
        self.validate()?;
        let n = self.n1() + self.n2();
        QuadraticGame::from_jacobian(PlayerDims::scalar(n)?, self.jacobian(), DVector::zeros(n))
    }

    pub fn coordinate_step_sizes(&self) -> Vec<f64> {
        let mut g = vec![self.gamma1; self.n1()];
        g.extend(std::iter::repeat_n(self.gamma2, self.n2()));
        g
    }
}

/// Coordinate-level game graph for the chosen mode.
pub fn build_bilinear_graph(spec: &BilinearGameSpec) -> Result<GameGraph> {
    spec.validate()?;
    let (n1, n2) = (spec.n1(), spec.n2());
    let n = n1 + n2;
    let mut w = DMatrix::identity(n, n);
    w.view_mut((0, n1), (n1, n2)).copy_from(&(&spec.a * -spec.gamma1));
    w.view_mut((n1, 0), (n2, n1)).copy_from(&(&spec.b * -spec.gamma2));
    if spec.mode == PlayMode::Alternating {
        let ba = &spec.b * &spec.a * (spec.gamma1 * spec.gamma2);
        let mut lower = w.view_mut((n1, n1), (n2, n2));
        lower += ba;
    }
    // Zero step sizes are legal for the bilinear dynamics but not as
    // disturbance gains; keep the graph's gains positive in that case.
    let gains = spec
        .coordinate_step_sizes()
        .into_iter()
        .map(|g| if g > 0.0 { g } else { 1.0 })
        .collect();
    GameGraph::from_parts(PlayerDims::scalar(n)?, w, StepSizes::new(gains)?, DVector::zeros(n))
}

/// One step of the bilinear update rule, written out directly.
pub fn bilinear_step(spec: &BilinearGameSpec, x1: &DVector<f64>, x2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let next1 = x1 - &spec.a * x2 * spec.gamma1;
    let next2 = match spec.mode {
        PlayMode::Simultaneous => x2 - &spec.b * x1 * spec.gamma2,
        PlayMode::Alternating => x2 - &spec.b * &next1 * spec.gamma2,
    };
    (next1, next2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingCondition {
    pub holds: bool,
    pub value: f64,
}

/// Necessary condition for coordinate `j` to be decoupled from coordinate
/// `i` on the same side (`i != j`), valid for both modes and any step sizes:
/// side one needs `sum_l b_{l i} a_{j l} = 0`, side two `sum_l b_{j l} a_{l i} = 0`.
pub fn same_side_condition(spec: &BilinearGameSpec, side: Side, i: usize, j: usize) -> Result<CouplingCondition> {
    spec.validate_shapes()?;
    spec.check_coord(side, i)?;
    spec.check_coord(side, j)?;
    if i == j {
        return Err(Error::SamePlayer(spec.node(side, i)));
    }
    let value: f64 = match side {
        Side::One => (0..spec.n2()).map(|l| spec.b[(l, i)] * spec.a[(j, l)]).sum(),
        Side::Two => (0..spec.n1()).map(|l| spec.b[(j, l)] * spec.a[(l, i)]).sum(),
    };
    Ok(CouplingCondition {
        holds: value.abs() <= CONDITION_TOLERANCE,
        value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSideCondition {
    pub holds: bool,
    /// The direct coupling entry and the length-two/three path sum.
    pub values: (f64, f64),
}

/// Necessary condition for coordinate `j` on the other side to be decoupled
/// from coordinate `i` on `from_side`. From side one (target `x_{2,j}`):
/// `b_{ji} = 0` and `sum_q b_{qi} sum_l a_{lq} b_{jl} = 0`. From side two
/// (target `x_{1,j}`): `a_{ji} = 0` and `sum_q a_{qi} sum_l b_{lq} a_{jl} = 0`.
pub fn cross_side_condition(
    spec: &BilinearGameSpec,
    from_side: Side,
    i: usize,
    j: usize,
) -> Result<CrossSideCondition> {
    spec.validate_shapes()?;
    let to_side = match from_side {
        Side::One => Side::Two,
        Side::Two => Side::One,
    };
    spec.check_coord(from_side, i)?;
    spec.check_coord(to_side, j)?;
    let (a, b) = (&spec.a, &spec.b);
    let values = match from_side {
        Side::One => {
            let direct = b[(j, i)];
            let path: f64 = (0..spec.n2())
                .map(|q| b[(q, i)] * (0..spec.n1()).map(|l| a[(l, q)] * b[(j, l)]).sum::<f64>())
                .sum();
            (direct, path)
        }
        Side::Two => {
            let direct = a[(j, i)];
            let path: f64 = (0..spec.n1())
                .map(|q| a[(q, i)] * (0..spec.n2()).map(|l| b[(l, q)] * a[(j, l)]).sum::<f64>())
                .sum();
            (direct, path)
        }
    };
    Ok(CrossSideCondition {
        holds: values.0.abs() <= CONDITION_TOLERANCE && values.1.abs() <= CONDITION_TOLERANCE,
        values,
    })
}
