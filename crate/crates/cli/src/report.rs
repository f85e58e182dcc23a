//! Serializable reports and CSV output. Player and coordinate indices are
//! 1-based; floats in CSV files use 17 significant digits.

use std::fmt::Write as _;

use ddgame::{DecouplingReport, DeviationReport, Trajectory};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportDocument {
    /// `[source, target]`.
    pub pair: [usize; 2],
    /// `true` when the target is decoupled from the source.
    pub verdict: bool,
    pub residuals: Vec<f64>,
    pub normalizers: Vec<f64>,
    pub tolerance: f64,
    pub method: String,
    pub first_failure: Option<usize>,
    /// Wall time in milliseconds; `null` unless timing was requested.
    pub runtime_ms: Option<f64>,
}

impl ReportDocument {
    pub fn new(report: &DecouplingReport, runtime_ms: Option<f64>) -> Self {
        ReportDocument {
            pair: [report.query.source + 1, report.query.target + 1],
            verdict: report.verdict,
            residuals: report.residuals.clone(),
            normalizers: report.normalizers.clone(),
            tolerance: report.query.tolerance,
            method: report.method.as_str().to_string(),
            first_failure: report.first_failure(),
            runtime_ms,
        }
    }

    pub fn to_text(&self) -> String {
        let [i, j] = self.pair;
        let mut out = match (self.verdict, self.first_failure) {
            (true, _) => format!("{i} -> {j}: decoupled"),
            (false, Some(k)) => format!("{i} -> {j}: coupled (first nonzero block at power {k})"),
            (false, None) => format!("{i} -> {j}: coupled"),
        };
        let _ = write!(out, " [{}, tolerance {:e}", self.method, self.tolerance);
        if let Some(ms) = self.runtime_ms {
            let _ = write!(out, ", {ms:.3} ms");
        }
        out.push(']');
        for (k, (r, s)) in self.residuals.iter().zip(&self.normalizers).enumerate() {
            let _ = write!(out, "\n  k = {:>3}  residual {r:.6e}  scale {s:.6e}", k + 1);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerDeviationDocument {
    pub player: usize,
    pub max_deviation: f64,
    pub rel_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviationDocument {
    pub source: usize,
    pub bound: f64,
    pub seed: u64,
    pub steps: usize,
    pub players: Vec<PlayerDeviationDocument>,
    /// First step whose iterate was non-finite.
    pub diverged_at: Option<usize>,
    /// `true` when the trajectories stop before `steps`.
    pub partial: bool,
}

impl DeviationDocument {
    pub fn new(report: &DeviationReport, bound: f64, seed: u64, steps: usize) -> Self {
        DeviationDocument {
            source: report.source + 1,
            bound,
            seed,
            steps,
            players: report
                .players
                .iter()
                .enumerate()
                .map(|(j, p)| PlayerDeviationDocument {
                    player: j + 1,
                    max_deviation: p.max_deviation,
                    rel_deviation: p.rel_deviation,
                })
                .collect(),
            diverged_at: report.diverged_at,
            partial: report.diverged_at.is_some(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "disturbance on player {} with bound {:e}, seed {}, {} steps\n",
            self.source, self.bound, self.seed, self.steps
        );
        if let Some(k) = self.diverged_at {
            let _ = writeln!(out, "diverged at step {k}; deviations cover the finite prefix");
        }
        let _ = writeln!(out, "{:<8}{:<26}rel_deviation", "player", "max_deviation");
        for p in &self.players {
            let max = format!("{:.16e}", p.max_deviation);
            let _ = writeln!(out, "{:<8}{max:<26}{:.16e}", p.player, p.rel_deviation);
        }
        out
    }
}

/// `k,player,coord,value` rows for every iterate.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("k,player,coord,value\n");
    for (k, x) in traj.iterates.iter().enumerate() {
        for i in 0..traj.dims.players() {
            for (c, v) in traj.dims.slice(x, i).iter().enumerate() {
                let _ = writeln!(out, "{k},{},{},{v:.16e}", i + 1, c + 1);
            }
        }
    }
    out
}

/// `k,player,clean,corrupted` rows, or `None` when no costs were recorded.
pub fn costs_csv(report: &DeviationReport) -> Option<String> {
    let clean = report.clean.costs.as_ref()?;
    let corrupted = report.corrupted.costs.as_ref()?;
    let mut out = String::from("k,player,clean,corrupted\n");
    for (k, (a, b)) in clean.iter().zip(corrupted).enumerate() {
        for (i, (ca, cb)) in a.iter().zip(b).enumerate() {
            let _ = writeln!(out, "{k},{},{ca:.16e},{cb:.16e}", i + 1);
        }
    }
    Some(out)
}

pub fn sweep_csv(docs: &[DeviationDocument]) -> String {
    let mut out = String::from("bound,player,max_deviation,rel_deviation\n");
    for d in docs {
        for p in &d.players {
            let _ = writeln!(
                out,
                "{:.16e},{},{:.16e},{:.16e}",
                d.bound, p.player, p.max_deviation, p.rel_deviation
            );
        }
    }
    out
}
