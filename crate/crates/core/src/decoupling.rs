//! Disturbance decoupling between players of a game graph.
//!
//! Player `j` is decoupled from a disturbance entering player `i`'s update
//! iff the `(j, i)` block of `W^k` vanishes for every `0 < k < n`, where `n`
//! is the joint action dimension. Equivalently, the path weights of all
//! length-`k` walks from `i` to `j` sum to zero for each such `k`. Both tests
//! are implemented here independently of each other: the algebraic test
//! multiplies matrix powers, the path test walks the graph node by node.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact;
use crate::game::{build_game_graph, GameGraph, QuadraticGame, StepSizes};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Upper bound on walk prefixes visited by [`check_paths`].
pub const PATH_EXTENSION_CAP: u128 = 10_000_000;

/// Disturbance enters `source`; decoupling is asked for `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecouplingQuery {
    pub source: usize,
    pub target: usize,
    pub tolerance: f64,
}

impl DecouplingQuery {
    pub fn new(source: usize, target: usize) -> Self {
        DecouplingQuery {
            source,
            target,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    fn validate(&self, players: usize) -> Result<()> {
        for index in [self.source, self.target] {
            if index >= players {
                return Err(Error::PlayerIndex { index, players });
            }
        }
        if self.source == self.target {
            return Err(Error::SamePlayer(self.source));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "tolerance must be nonnegative, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Algebraic,
    PathEnumeration,
    /// Integer arithmetic on the exact binary values of `W`; tolerance-free.
    ExactAlgebraic,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Algebraic => "algebraic",
            Method::PathEnumeration => "path-enumeration",
            Method::ExactAlgebraic => "exact-algebraic",
        }
    }
}

/// Outcome of a decoupling test.
///
/// `residuals[k - 1]` is the Frobenius norm of the `(target, source)` block
/// of `W^k` (or of the matching path-weight sum); `normalizers[k - 1]` is the
/// scale it is compared against. The algebraic methods use `||W^k||_F`; path
/// enumeration uses the summed Frobenius norms of the individual path weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingReport {
    pub query: DecouplingQuery,
    pub verdict: bool,
    pub residuals: Vec<f64>,
    pub normalizers: Vec<f64>,
    pub method: Method,
}

impl DecouplingReport {
    fn from_norms(query: DecouplingQuery, residuals: Vec<f64>, normalizers: Vec<f64>, method: Method) -> Self {
        let verdict = residuals
            .iter()
            .zip(&normalizers)
            .all(|(r, s)| *r <= query.tolerance * s.max(1.0));
        DecouplingReport {
            query,
            verdict,
            residuals,
            normalizers,
            method,
        }
    }

    /// Smallest power `k` whose block is not zero, if any.
    pub fn first_failure(&self) -> Option<usize> {
        self.residuals
            .iter()
            .zip(&self.normalizers)
            .position(|(r, s)| *r > self.query.tolerance * s.max(1.0))
            .map(|idx| idx + 1)
    }
}

/// `W^1, ..., W^count`.
pub fn matrix_powers(w: &DMatrix<f64>, count: usize) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(count);
    for k in 0..count {
        let next = match k {
            0 => w.clone(),
            _ => w * &out[k - 1],
        };
        out.push(next);
    }
    out
}

fn report_from_powers(graph: &GameGraph, powers: &[DMatrix<f64>], query: DecouplingQuery) -> DecouplingReport {
    let dims = graph.dims();
    let residuals = powers
        .iter()
        .map(|p| dims.block(p, query.target, query.source).norm())
        .collect();
    let normalizers = powers.iter().map(|p| p.norm()).collect();
    DecouplingReport::from_norms(query, residuals, normalizers, Method::Algebraic)
}

/// Matrix-power test over `W^1 .. W^{n-1}`.
pub fn check_algebraic(graph: &GameGraph, query: DecouplingQuery) -> Result<DecouplingReport> {
    query.validate(graph.players())?;
    let powers = matrix_powers(graph.matrix(), graph.dims().total() - 1);
    Ok(report_from_powers(graph, &powers, query))
}

/// Reports for every ordered pair `(source, target)`, source-major order.
pub fn all_pairs_report(graph: &GameGraph, tolerance: f64) -> Result<Vec<DecouplingReport>> {
    let players = graph.players();
    let queries: Vec<DecouplingQuery> = (0..players)
        .flat_map(|i| (0..players).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| DecouplingQuery::new(i, j).with_tolerance(tolerance))
        .collect();
    for q in &queries {
        q.validate(players)?;
    }
    let powers = matrix_powers(graph.matrix(), graph.dims().total() - 1);
    Ok(queries
        .into_par_iter()
        .map(|q| report_from_powers(graph, &powers, q))
        .collect())
}

/// Exact variant of [`check_algebraic`]: every finite `f64` is a dyadic
/// rational, so `W = 2^e Z` with integer `Z` and the powers are computed
/// without rounding. The verdict is exact for the stored `W`; the report
/// carries tolerance `0`.
pub fn check_algebraic_exact(graph: &GameGraph, query: DecouplingQuery) -> Result<DecouplingReport> {
    Ok(all_pairs_exact_for(graph, &[query.with_tolerance(0.0)])?.remove(0))
}

/// Exact reports for every ordered pair.
pub fn all_pairs_exact(graph: &GameGraph) -> Result<Vec<DecouplingReport>> {
    let players = graph.players();
    let queries: Vec<DecouplingQuery> = (0..players)
        .flat_map(|i| {
            (0..players)
                .filter(move |&j| j != i)
                .map(move |j| DecouplingQuery::new(i, j))
        })
        .map(|q| q.with_tolerance(0.0))
        .collect();
    all_pairs_exact_for(graph, &queries)
}

fn all_pairs_exact_for(graph: &GameGraph, queries: &[DecouplingQuery]) -> Result<Vec<DecouplingReport>> {
    for q in queries {
        q.validate(graph.players())?;
    }
    let dims = graph.dims();
    let powers = exact::DyadicPowers::new(graph.matrix(), dims.total() - 1);
    let normalizers: Vec<f64> = (1..dims.total())
        .map(|k| powers.frobenius(k, 0..dims.total(), 0..dims.total()))
        .collect();
    Ok(queries
        .iter()
        .map(|&q| {
            let rows = dims.range(q.target);
            let cols = dims.range(q.source);
            let mut residuals = Vec::with_capacity(normalizers.len());
            let mut verdict = true;
            for k in 1..dims.total() {
                let zero = powers.block_is_zero(k, rows.clone(), cols.clone());
                verdict &= zero;
                residuals.push(if zero {
                    0.0
                } else {
                    powers.frobenius(k, rows.clone(), cols.clone())
                });
            }
            DecouplingReport {
                query: q,
                verdict,
                residuals,
                normalizers: normalizers.clone(),
                method: Method::ExactAlgebraic,
            }
        })
        .collect())
}

/// Walks of a fixed length between two players together with their summed
/// path weight `sum_p W_{j,v_{k-1}} ... W_{v_1,i}` (shape `n_j x n_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub source: usize,
    pub target: usize,
    pub length: usize,
    pub paths: Vec<Vec<usize>>,
    pub weight_sum: DMatrix<f64>,
}

/// Adjacency lists and dense block copies used by the walkers.
struct EdgeTable {
    dims: Vec<usize>,
    successors: Vec<Vec<usize>>,
    /// `blocks[to][from]`, row-major, present only for existing edges.
    blocks: Vec<Vec<Option<Vec<f64>>>>,
}

impl EdgeTable {
    fn new(graph: &GameGraph, zero_tol: f64) -> Self {
        let players = graph.players();
        let dims: Vec<usize> = graph.dims().as_slice().to_vec();
        let mut successors = vec![Vec::new(); players];
        let mut blocks = vec![vec![None; players]; players];
        for from in 0..players {
            for to in 0..players {
                if graph.has_edge(from, to, zero_tol) {
                    successors[from].push(to);
                    let b = graph.block(to, from);
                    let mut flat = Vec::with_capacity(b.len());
                    for r in 0..b.nrows() {
                        for c in 0..b.ncols() {
                            flat.push(b[(r, c)]);
                        }
                    }
                    blocks[to][from] = Some(flat);
                }
            }
        }
        EdgeTable {
            dims,
            successors,
            blocks,
        }
    }

    /// Fewest edges from each node to `target` (`usize::MAX` if unreachable).
    fn distances_to(&self, target: usize) -> Vec<usize> {
        let players = self.dims.len();
        let mut dist = vec![usize::MAX; players];
        dist[target] = 0;
        let mut frontier = vec![target];
        let mut d = 0;
        while !frontier.is_empty() {
            d += 1;
            let mut next = Vec::new();
            for v in 0..players {
                if dist[v] == usize::MAX && self.successors[v].iter().any(|s| frontier.contains(s)) {
                    dist[v] = d;
                    next.push(v);
                }
            }
            frontier = next;
        }
        dist
    }

    /// Number of walk prefixes (length >= 1) from `source` that can still
    /// reach `target` within `max_len` total edges.
    fn count_live_prefixes(&self, source: usize, dist: &[usize], max_len: usize) -> u128 {
        let players = self.dims.len();
        let mut current = vec![0u128; players];
        if dist[source] > max_len {
            return 0;
        }
        current[source] = 1;
        let mut total: u128 = 0;
        for len in 1..=max_len {
            let mut next = vec![0u128; players];
            for v in 0..players {
                if current[v] == 0 {
                    continue;
                }
                for &u in &self.successors[v] {
                    if dist[u] <= max_len - len {
                        next[u] = next[u].saturating_add(current[v]);
                    }
                }
            }
            total = next.iter().fold(total, |acc, &c| acc.saturating_add(c));
            current = next;
        }
        total
    }
}

/// Depth-first walker accumulating products `W_{v_l, v_{l-1}} ... W_{v_1, i}`.
struct Walker<'a> {
    table: &'a EdgeTable,
    source_dim: usize,
    target: usize,
    dist: Vec<usize>,
    max_len: usize,
    /// `products[l]` holds the partial product after `l` edges, row-major.
    products: Vec<Vec<f64>>,
    nodes: Vec<usize>,
}

impl<'a> Walker<'a> {
    fn new(table: &'a EdgeTable, source: usize, target: usize, max_len: usize) -> Self {
        let max_dim = table.dims.iter().copied().max().unwrap_or(1);
        let source_dim = table.dims[source];
        let mut products = vec![vec![0.0; max_dim * source_dim]; max_len + 1];
        for r in 0..source_dim {
            products[0][r * source_dim + r] = 1.0;
        }
        Walker {
            table,
            source_dim,
            target,
            dist: table.distances_to(target),
            max_len,
            products,
            nodes: vec![source],
        }
    }

    /// Visits every live walk; `visit(len, nodes, product)` runs whenever the
    /// walk currently sits on the target.
    fn walk(&mut self, visit: &mut dyn FnMut(usize, &[usize], &[f64])) {
        let depth = self.nodes.len() - 1;
        if depth == self.max_len {
            return;
        }
        let from = *self.nodes.last().expect("walk starts at the source");
        let from_dim = self.table.dims[from];
        let cols = self.source_dim;
        for &to in &self.table.successors[from] {
            if self.dist[to] > self.max_len - depth - 1 {
                continue;
            }
            let block = self.table.blocks[to][from].as_ref().expect("edge has a block");
            let to_dim = self.table.dims[to];
            let (done, rest) = self.products.split_at_mut(depth + 1);
            let prev = &done[depth];
            let next = &mut rest[0];
            for r in 0..to_dim {
                for c in 0..cols {
                    let mut acc = 0.0;
                    for m in 0..from_dim {
                        acc += block[r * from_dim + m] * prev[m * cols + c];
                    }
                    next[r * cols + c] = acc;
                }
            }
            self.nodes.push(to);
            if to == self.target {
                let len = depth + 1;
                visit(len, &self.nodes, &self.products[len][..to_dim * cols]);
            }
            self.walk(visit);
            self.nodes.pop();
        }
    }
}

/// Path-weight test: enumerates every walk of length `0 < k < n` from the
/// source to the target over the edges of the game graph and sums their
/// weights. An edge exists when its block has an entry above
/// `edge_zero_tol` in magnitude; self loops always exist.
pub fn check_paths(graph: &GameGraph, query: DecouplingQuery, edge_zero_tol: f64) -> Result<DecouplingReport> {
    query.validate(graph.players())?;
    let max_len = graph.dims().total() - 1;
    let table = EdgeTable::new(graph, edge_zero_tol);
    let dist = table.distances_to(query.target);
    let estimated = table.count_live_prefixes(query.source, &dist, max_len);
    if estimated > PATH_EXTENSION_CAP {
        return Err(Error::EnumerationCap {
            estimated,
            cap: PATH_EXTENSION_CAP,
        });
    }
    let block_len = table.dims[query.target] * table.dims[query.source];
    let mut sums = vec![vec![0.0; block_len]; max_len];
    let mut magnitudes = vec![0.0; max_len];
    let mut walker = Walker::new(&table, query.source, query.target, max_len);
    walker.walk(&mut |len, _, product| {
        let sum = &mut sums[len - 1];
        let mut sq = 0.0;
        for (s, p) in sum.iter_mut().zip(product) {
            *s += p;
            sq += p * p;
        }
        magnitudes[len - 1] += sq.sqrt();
    });
    let residuals = sums
        .iter()
        .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    Ok(DecouplingReport::from_norms(
        query,
        residuals,
        magnitudes,
        Method::PathEnumeration,
    ))
}

/// Lists the walks of exactly `length` edges from `source` to `target`.
pub fn enumerate_paths(
    graph: &GameGraph,
    source: usize,
    target: usize,
    length: usize,
    edge_zero_tol: f64,
) -> Result<PathSet> {
    let dims = graph.dims();
    dims.check_player(source)?;
    dims.check_player(target)?;
    let table = EdgeTable::new(graph, edge_zero_tol);
    let dist = table.distances_to(target);
    let estimated = table.count_live_prefixes(source, &dist, length);
    if estimated > PATH_EXTENSION_CAP {
        return Err(Error::EnumerationCap {
            estimated,
            cap: PATH_EXTENSION_CAP,
        });
    }
    let (rows, cols) = (dims.dim(target), dims.dim(source));
    let mut weight_sum = DMatrix::zeros(rows, cols);
    let mut paths = Vec::new();
    if length > 0 {
        let mut walker = Walker::new(&table, source, target, length);
        walker.walk(&mut |len, nodes, product| {
            if len == length {
                paths.push(nodes.to_vec());
                weight_sum += DMatrix::from_row_slice(rows, cols, product);
            }
        });
    }
    Ok(PathSet {
        source,
        target,
        length,
        paths,
        weight_sum,
    })
}

/// Both-direction verdicts for an unordered pair of a potential game.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryCheck {
    pub pair: (usize, usize),
    pub forward: bool,
    pub backward: bool,
}

impl SymmetryCheck {
    pub fn agree(&self) -> bool {
        self.forward == self.backward
    }
}

/// For a potential game (`P_ij = P_ji^T`), decoupling of `j` from `i`
/// should coincide with decoupling of `i` from `j` for any positive step
/// sizes. Runs the algebraic test both ways for every unordered pair.
pub fn check_potential_symmetry(game: &QuadraticGame, gamma: &StepSizes, tolerance: f64) -> Result<Vec<SymmetryCheck>> {
    if let Some((pair, residual)) = game.potential_violation(tolerance) {
        return Err(Error::NotPotential {
            pair: (pair.0 + 1, pair.1 + 1),
            residual,
        });
    }
    let graph = build_game_graph(game, gamma)?;
    let powers = matrix_powers(graph.matrix(), graph.dims().total() - 1);
    let players = graph.players();
    let mut out = Vec::new();
    for i in 0..players {
        for j in (i + 1)..players {
            let forward = report_from_powers(&graph, &powers, DecouplingQuery::new(i, j).with_tolerance(tolerance));
            let backward = report_from_powers(&graph, &powers, DecouplingQuery::new(j, i).with_tolerance(tolerance));
            out.push(SymmetryCheck {
                pair: (i, j),
                forward: forward.verdict,
                backward: backward.verdict,
            });
        }
    }
    Ok(out)
}
