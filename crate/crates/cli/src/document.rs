//! Game specification documents and their conversion to library types.
//!
//! The canonical serialization is TOML. Every document has a top-level
//! `kind` of `quadratic`, `lq` or `bilinear`; unknown keys are rejected.
//! Player indices inside documents are 1-based.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use ddgame::bilinear::{build_bilinear_graph, BilinearGameSpec, PlayMode};
use ddgame::lq::{lift, LiftedLqGame, LqGameSpec};
use ddgame::simulator::PlayerCosts;
use ddgame::{build_game_graph, uniform_step_size, GameGraph, PlayerDims, QuadraticGame, StepSizes};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOLERANCE: f64 = ddgame::decoupling::DEFAULT_TOLERANCE;

/// Row-major matrix as written in a document.
pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Quadratic,
    Lq,
    Bilinear,
}

/// Either an explicit per-player list or the keyword `"uniform"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    List(Vec<f64>),
    Keyword(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simultaneous,
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticDocument {
    pub kind: Kind,
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Keys `"i"` for `P_i` and `"i,j"` for `P_ij`.
    #[serde(rename = "P")]
    pub p: BTreeMap<String, Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqDocument {
    pub kind: Kind,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Vec<Rows>,
    #[serde(rename = "Q")]
    pub q: Vec<Rows>,
    #[serde(rename = "R")]
    pub r: Vec<Rows>,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub z0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilinearDocument {
    pub kind: Kind,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    pub gamma1: f64,
    pub gamma2: f64,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameSpecDocument {
    Quadratic(QuadraticDocument),
    Lq(LqDocument),
    Bilinear(BilinearDocument),
}

impl GameSpecDocument {
    /// Parses a TOML document. Syntax errors and unknown keys are reported
    /// with line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| anyhow!("{e}"))?;
        let kind = table
            .get("kind")
            .ok_or_else(|| anyhow!("missing top-level key `kind` (quadratic, lq or bilinear)"))?;
        let doc = match kind.as_str() {
            Some("quadratic") => GameSpecDocument::Quadratic(toml::from_str(text).map_err(|e| anyhow!("{e}"))?),
            Some("lq") => GameSpecDocument::Lq(toml::from_str(text).map_err(|e| anyhow!("{e}"))?),
            Some("bilinear") => GameSpecDocument::Bilinear(toml::from_str(text).map_err(|e| anyhow!("{e}"))?),
            _ => bail!("unknown kind {kind}; expected \"quadratic\", \"lq\" or \"bilinear\""),
        };
        Ok(doc)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(match self {
            GameSpecDocument::Quadratic(d) => toml::to_string(d)?,
            GameSpecDocument::Lq(d) => toml::to_string(d)?,
            GameSpecDocument::Bilinear(d) => toml::to_string(d)?,
        })
    }

    pub fn kind(&self) -> Kind {
        match self {
            GameSpecDocument::Quadratic(_) => Kind::Quadratic,
            GameSpecDocument::Lq(_) => Kind::Lq,
            GameSpecDocument::Bilinear(_) => Kind::Bilinear,
        }
    }

    fn shared(&self) -> (Option<f64>, Option<u64>, Option<&Vec<f64>>) {
        match self {
            GameSpecDocument::Quadratic(d) => (d.tolerance, d.seed, d.x0.as_ref()),
            GameSpecDocument::Lq(d) => (d.tolerance, d.seed, d.x0.as_ref()),
            GameSpecDocument::Bilinear(d) => (d.tolerance, d.seed, d.x0.as_ref()),
        }
    }
}

fn matrix(name: &str, rows: &Rows) -> Result<DMatrix<f64>> {
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || cols == 0 {
        bail!("{name}: matrix is empty");
    }
    for (k, row) in rows.iter().enumerate() {
        if row.len() != cols {
            bail!("{name}: row {} has {} entries, expected {cols}", k + 1, row.len());
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// The model behind a document, plus everything needed to run it.
pub enum Model {
    Quadratic(QuadraticGame),
    Lq(Box<LiftedLqGame>),
    Bilinear(BilinearGameSpec),
}

pub struct Loaded {
    pub kind: Kind,
    pub model: Model,
    pub graph: GameGraph,
    pub tolerance: f64,
    pub seed: u64,
    pub x0: Option<DVector<f64>>,
}

impl Loaded {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_document(&GameSpecDocument::parse(text)?)
    }

    pub fn from_document(doc: &GameSpecDocument) -> Result<Self> {
        let (model, graph) = match doc {
            GameSpecDocument::Quadratic(d) => {
                let game = quadratic_game(d)?;
                let gamma = resolve_gamma(d.gamma.as_ref(), &game)?;
                let graph = build_game_graph(&game, &gamma)?;
                (Model::Quadratic(game), graph)
            }
            GameSpecDocument::Lq(d) => {
                let lifted = lift(&lq_spec(d)?)?;
                let gamma = resolve_gamma(d.gamma.as_ref(), &lifted.game)?;
                let graph = build_game_graph(&lifted.game, &gamma)?;
                (Model::Lq(Box::new(lifted)), graph)
            }
            GameSpecDocument::Bilinear(d) => {
                let spec = bilinear_spec(d)?;
                let graph = build_bilinear_graph(&spec)?;
                (Model::Bilinear(spec), graph)
            }
        };
        let (tolerance, seed, x0) = doc.shared();
        let tolerance = tolerance.unwrap_or(DEFAULT_TOLERANCE);
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            bail!("tolerance must be finite and nonnegative, got {tolerance}");
        }
        let n = graph.dims().total();
        let x0 = match x0 {
            Some(v) if v.len() != n => bail!("x0 has {} entries, the game has {n} coordinates", v.len()),
            Some(v) if v.iter().any(|x| !x.is_finite()) => bail!("x0 has a non-finite entry"),
            Some(v) => Some(DVector::from_vec(v.clone())),
            None => None,
        };
        Ok(Loaded {
            kind: doc.kind(),
            model,
            graph,
            tolerance,
            seed: seed.unwrap_or(0),
            x0,
        })
    }

    /// Number of graph nodes addressed by player indices: players for
    /// quadratic and LQ games, coordinates for bilinear games.
    pub fn players(&self) -> usize {
        self.graph.players()
    }

    /// The quadratic game whose gradient play the graph describes.
    pub fn game(&self) -> Result<QuadraticGame> {
        Ok(match &self.model {
            Model::Quadratic(g) => g.clone(),
            Model::Lq(l) => l.game.clone(),
            Model::Bilinear(s) => s.to_quadratic_game()?,
        })
    }

    /// Per-player costs worth reporting alongside trajectories.
    pub fn costs(&self) -> Option<&dyn PlayerCosts> {
        match &self.model {
            Model::Quadratic(g) => Some(g),
            Model::Lq(l) => Some(l.as_ref()),
            Model::Bilinear(_) => None,
        }
    }

    pub fn initial_action(&self) -> DVector<f64> {
        self.x0
            .clone()
            .unwrap_or_else(|| DVector::zeros(self.graph.dims().total()))
    }

    /// The derived quadratic game as a document whose explicit step sizes
    /// reproduce this graph.
    pub fn to_quadratic_document(&self) -> Result<QuadraticDocument> {
        if let Model::Bilinear(s) = &self.model {
            if s.gamma1 == 0.0 || s.gamma2 == 0.0 {
                bail!("a zero step size cannot be written as a quadratic game's step size");
            }
        }
        let game = self.game()?;
        let dims = game.dims();
        let mut p = BTreeMap::new();
        for i in 0..dims.players() {
            p.insert(format!("{}", i + 1), rows_of(&game.own(i).clone_owned()));
            for j in (0..dims.players()).filter(|&j| j != i) {
                let block = game.cross(i, j);
                if block.iter().any(|v| *v != 0.0) {
                    p.insert(format!("{},{}", i + 1, j + 1), rows_of(&block.clone_owned()));
                }
            }
        }
        let r = (0..dims.players())
            .map(|i| game.linear(i).iter().copied().collect())
            .collect();
        Ok(QuadraticDocument {
            kind: Kind::Quadratic,
            dims: dims.as_slice().to_vec(),
            r: Some(r),
            gamma: Some(GammaSpec::List(self.graph.gamma().as_slice().to_vec())),
            tolerance: Some(self.tolerance),
            seed: Some(self.seed),
            x0: self.x0.as_ref().map(|v| v.iter().copied().collect()),
            p,
        })
    }
}

fn parse_player(key: &str, token: &str, players: usize) -> Result<usize> {
    let idx: usize = token
        .trim()
        .parse()
        .with_context(|| format!("P key \"{key}\": \"{token}\" is not a player number"))?;
    if idx == 0 || idx > players {
        bail!("P key \"{key}\" names player {idx}, but dims declares {players} players");
    }
    Ok(idx - 1)
}

fn quadratic_game(d: &QuadraticDocument) -> Result<QuadraticGame> {
    let dims = PlayerDims::new(d.dims.clone())?;
    let players = dims.players();
    let mut own: Vec<Option<DMatrix<f64>>> = vec![None; players];
    let mut cross = Vec::new();
    for (key, rows) in &d.p {
        let name = format!("P[\"{key}\"]");
        let m = matrix(&name, rows)?;
        match key.split(',').collect::<Vec<_>>().as_slice() {
            [i] => own[parse_player(key, i, players)?] = Some(m),
            [i, j] => cross.push(((parse_player(key, i, players)?, parse_player(key, j, players)?), m)),
            _ => bail!("P key \"{key}\" must be \"i\" or \"i,j\""),
        }
    }
    let own = own
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| anyhow!("P is missing the own-cost block \"{}\"", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let linear = match &d.r {
        Some(r) => {
            if r.len() != players {
                bail!("r has {} entries, dims declares {players} players", r.len());
            }
            r.iter().map(|v| DVector::from_vec(v.clone())).collect()
        }
        None => (0..players).map(|i| DVector::zeros(dims.dim(i))).collect(),
    };
    Ok(QuadraticGame::new(dims, own, cross, linear)?)
}

fn lq_spec(d: &LqDocument) -> Result<LqGameSpec> {
    let list = |name: &str, ms: &[Rows]| -> Result<Vec<DMatrix<f64>>> {
        ms.iter()
            .enumerate()
            .map(|(i, m)| matrix(&format!("{name}[{}]", i + 1), m))
            .collect()
    };
    Ok(LqGameSpec {
        a: matrix("A", &d.a)?,
        b: list("B", &d.b)?,
        q: list("Q", &d.q)?,
        r: list("R", &d.r)?,
        horizon: d.horizon,
        z0: DVector::from_vec(d.z0.clone()),
        targets: d
            .targets
            .as_ref()
            .map(|t| t.iter().map(|c| DVector::from_vec(c.clone())).collect()),
    })
}

fn bilinear_spec(d: &BilinearDocument) -> Result<BilinearGameSpec> {
    Ok(BilinearGameSpec {
        a: matrix("A", &d.a)?,
        b: matrix("B", &d.b)?,
        gamma1: d.gamma1,
        gamma2: d.gamma2,
        mode: match d.mode {
            Mode::Simultaneous => PlayMode::Simultaneous,
            Mode::Alternating => PlayMode::Alternating,
        },
    })
}

/// Absent or `"uniform"` step sizes come from the uniform step-size rule on
/// the game Jacobian.
fn resolve_gamma(spec: Option<&GammaSpec>, game: &QuadraticGame) -> Result<StepSizes> {
    match spec {
        None => uniform(game),
        Some(GammaSpec::Keyword(k)) if k == "uniform" => uniform(game),
        Some(GammaSpec::Keyword(k)) => bail!("gamma must be a list or \"uniform\", got \"{k}\""),
        Some(GammaSpec::List(g)) => {
            if g.len() != game.players() {
                bail!("gamma has {} entries, the game has {} players", g.len(), game.players());
            }
            Ok(StepSizes::new(g.clone())?)
        }
    }
}

fn uniform(game: &QuadraticGame) -> Result<StepSizes> {
    let rule = uniform_step_size(game.jacobian()).context("resolving gamma = \"uniform\"")?;
    Ok(StepSizes::uniform(game.players(), rule.gamma)?)
}
