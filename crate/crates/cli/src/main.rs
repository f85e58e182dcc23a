//! `ddgame`: decoupling analysis and trajectory simulation for gradient play.
//!
//! Exit codes: 0 on success (every queried pair decoupled for `analyze`),
//! 1 when a queried pair is coupled or a simulation diverged, 2 on error.

mod document;
mod report;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ddgame::{
    all_pairs_exact, all_pairs_report, check_algebraic, check_algebraic_exact, check_paths, compare, magnitude_sweep,
    nash_equilibrium, uniform_step_size, DecouplingQuery, DecouplingReport, DisturbanceSignal,
};
use rayon::prelude::*;
use serde::Serialize;

use document::{GameSpecDocument, Kind, Loaded, Model, Rows};
use report::{costs_csv, sweep_csv, trajectory_csv, DeviationDocument, ReportDocument};

const THREADS_VAR: &str = "DECOUPLING_THREADS";

#[derive(Parser)]
#[command(
    name = "ddgame",
    version,
    about = "Disturbance decoupling analysis for gradient play in quadratic games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether disturbances on one player can reach another.
    Analyze(AnalyzeArgs),
    /// Run clean and disturbed gradient play and report deviations.
    Simulate(SimulateArgs),
    /// Print the learning-dynamics graph or the derived quadratic game.
    Build(BuildArgs),
    /// Print the Nash equilibrium, one coordinate per line.
    Nash(InputArgs),
    /// Print the uniform step size of the game Jacobian.
    Stepsize(InputArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Game document (TOML), or `-` for stdin.
    input: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Algebraic,
    Paths,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Game document (TOML), or `-` for stdin.
    input: String,
    /// Source and target player (1-based).
    #[arg(long, num_args = 2, value_names = ["SOURCE", "TARGET"], required_unless_present = "all_pairs")]
    pair: Option<Vec<usize>>,
    /// Every ordered pair of distinct players.
    #[arg(long, conflicts_with = "pair")]
    all_pairs: bool,
    #[arg(long, value_enum, default_value = "algebraic")]
    method: MethodArg,
    /// Relative zero tolerance; overrides the document.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Tolerance-free matrix powers in exact binary arithmetic.
    #[arg(long, conflicts_with = "tolerance")]
    exact: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Record wall time per report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Game document (TOML), or `-` for stdin.
    input: String,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Disturbed player (1-based).
    #[arg(long, default_value_t = 1)]
    disturb: usize,
    /// Radius of the ball the disturbance is drawn from.
    #[arg(long, default_value_t = 1.0, conflicts_with = "sweep")]
    bound: f64,
    /// Disturbance seed; overrides the document.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated nondecreasing bounds, all run with the same seed.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    /// Directory for trajectory and report files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Graph,
    Game,
}

#[derive(Args)]
struct BuildArgs {
    /// Game document (TOML), or `-` for stdin.
    input: String,
    #[arg(long, value_enum, default_value = "graph")]
    emit: Emit,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got \"{value}\""))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Analyze(args) => analyze(args),
        Command::Simulate(args) => simulate(args),
        Command::Build(args) => build(args),
        Command::Nash(args) => nash(args),
        Command::Stepsize(args) => stepsize(args),
    }
}

fn read_input(input: &str) -> Result<String> {
    if input == "-" {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text).context("reading stdin")?;
        Ok(text)
    } else {
        fs::read_to_string(input).with_context(|| format!("reading {input}"))
    }
}

/// Writes to stdout; a closed pipe (`ddgame ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => r.context("writing stdout"),
    }
}

fn load(input: &str) -> Result<Loaded> {
    let loaded = Loaded::from_text(&read_input(input)?).with_context(|| format!("in {input}"))?;
    if let Model::Quadratic(game) = &loaded.model {
        let asym = game.asymmetric_players();
        if !asym.is_empty() {
            let list: Vec<String> = asym.iter().map(|i| (i + 1).to_string()).collect();
            eprintln!(
                "warning: own-cost blocks of players {} are not symmetric; costs use their symmetric part",
                list.join(", ")
            );
        }
    }
    Ok(loaded)
}

fn player_index(what: &str, index: usize, players: usize) -> Result<usize> {
    if index == 0 || index > players {
        bail!("{what} {index} is out of range 1..={players}");
    }
    Ok(index - 1)
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    if args.exact && args.method == MethodArg::Paths {
        bail!("--exact applies to the algebraic method only");
    }
    let loaded = load(&args.input)?;
    let tolerance = args.tolerance.unwrap_or(loaded.tolerance);
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        bail!("--tolerance must be finite and nonnegative, got {tolerance}");
    }
    let graph = &loaded.graph;
    let players = loaded.players();
    let queries: Vec<DecouplingQuery> = match &args.pair {
        Some(p) => {
            if p[0] == p[1] {
                bail!(
                    "source and target are both player {}; a player is never decoupled from itself",
                    p[0]
                );
            }
            let q = DecouplingQuery::new(
                player_index("source", p[0], players)?,
                player_index("target", p[1], players)?,
            );
            vec![q.with_tolerance(tolerance)]
        }
        None => (0..players)
            .flat_map(|i| (0..players).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| DecouplingQuery::new(i, j).with_tolerance(tolerance))
            .collect(),
    };
    let timed = |f: &dyn Fn() -> ddgame::Result<Vec<DecouplingReport>>| -> Result<Vec<(DecouplingReport, f64)>> {
        let start = Instant::now();
        let reports = f()?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(reports.into_iter().map(|r| (r, ms)).collect())
    };
    let results: Vec<(DecouplingReport, f64)> = match (args.method, args.exact, args.all_pairs) {
        (MethodArg::Algebraic, true, true) => timed(&|| all_pairs_exact(graph))?,
        (MethodArg::Algebraic, false, true) => timed(&|| all_pairs_report(graph, tolerance))?,
        (MethodArg::Algebraic, true, false) => timed(&|| Ok(vec![check_algebraic_exact(graph, queries[0])?]))?,
        (MethodArg::Algebraic, false, false) => timed(&|| Ok(vec![check_algebraic(graph, queries[0])?]))?,
        (MethodArg::Paths, _, _) => queries
            .par_iter()
            .map(|&q| {
                let start = Instant::now();
                let r = check_paths(graph, q, 0.0)?;
                Ok((r, start.elapsed().as_secs_f64() * 1e3))
            })
            .collect::<Result<_>>()?,
    };
    let docs: Vec<ReportDocument> = results
        .iter()
        .map(|(r, ms)| ReportDocument::new(r, args.timing.then_some(*ms)))
        .collect();
    match args.format {
        Format::Json => emit(&format!("{}\n", serde_json::to_string_pretty(&docs)?))?,
        Format::Text => {
            for d in &docs {
                emit(&format!("{}\n", d.to_text()))?;
            }
        }
    }
    Ok(if docs.iter().all(|d| d.verdict) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    if args.steps == 0 {
        bail!("--steps must be positive");
    }
    let loaded = load(&args.input)?;
    let player = player_index("--disturb", args.disturb, loaded.players())?;
    let seed = args.seed.unwrap_or(loaded.seed);
    let x0 = loaded.initial_action();
    let costs = loaded.costs();
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let diverged = match &args.sweep {
        Some(bounds) => {
            let reports = magnitude_sweep(&loaded.graph, &x0, args.steps, player, bounds, seed, costs)?;
            let docs: Vec<DeviationDocument> = reports
                .iter()
                .zip(bounds)
                .map(|(r, &b)| DeviationDocument::new(r, b, seed, args.steps))
                .collect();
            for d in &docs {
                emit(&format!("{}\n", d.to_text()))?;
            }
            if let Some(dir) = &args.out {
                write_file(dir, "deviation.json", &serde_json::to_string_pretty(&docs)?)?;
                write_file(dir, "sweep.csv", &sweep_csv(&docs))?;
            }
            docs.iter().any(|d| d.partial)
        }
        None => {
            let signal = DisturbanceSignal::seeded_uniform(player, seed, args.bound);
            let rep = compare(&loaded.graph, &x0, args.steps, &signal, costs)?;
            let doc = DeviationDocument::new(&rep, args.bound, seed, args.steps);
            emit(&format!("{}\n", doc.to_text()))?;
            if let Some(dir) = &args.out {
                write_file(dir, "clean.csv", &trajectory_csv(&rep.clean))?;
                write_file(dir, "corrupted.csv", &trajectory_csv(&rep.corrupted))?;
                if let Some(c) = costs_csv(&rep) {
                    write_file(dir, "costs.csv", &c)?;
                }
                write_file(dir, "deviation.json", &serde_json::to_string_pretty(&doc)?)?;
            }
            doc.partial
        }
    };
    if diverged {
        eprintln!("warning: iterates became non-finite; output covers the finite prefix only");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct GraphDump {
    kind: Kind,
    dims: Vec<usize>,
    gamma: Vec<f64>,
    #[serde(rename = "W")]
    w: Rows,
    offset: Vec<f64>,
    spectral_radius: f64,
    #[serde(rename = "G", skip_serializing_if = "Option::is_none")]
    g: Option<Vec<Rows>>,
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    h: Option<Rows>,
}

fn build(args: BuildArgs) -> Result<ExitCode> {
    let loaded = load(&args.input)?;
    match args.emit {
        Emit::Graph => {
            let graph = &loaded.graph;
            let (g, h) = match &loaded.model {
                Model::Lq(l) => (Some(l.g.iter().map(rows).collect()), Some(rows(&l.h))),
                _ => (None, None),
            };
            let dump = GraphDump {
                kind: loaded.kind,
                dims: graph.dims().as_slice().to_vec(),
                gamma: graph.gamma().as_slice().to_vec(),
                w: rows(graph.matrix()),
                offset: graph.offset().iter().copied().collect(),
                spectral_radius: graph.spectral_radius(),
                g,
                h,
            };
            emit(&format!("{}\n", serde_json::to_string_pretty(&dump)?))?;
        }
        Emit::Game => {
            let doc = GameSpecDocument::Quadratic(loaded.to_quadratic_document()?);
            emit(&doc.to_toml()?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn nash(args: InputArgs) -> Result<ExitCode> {
    let loaded = load(&args.input)?;
    let x = nash_equilibrium(&loaded.game()?)?;
    // Adding zero turns -0 into 0.
    emit(&x.iter().map(|v| format!("{:.16e}\n", v + 0.0)).collect::<String>())?;
    Ok(ExitCode::SUCCESS)
}

fn stepsize(args: InputArgs) -> Result<ExitCode> {
    let loaded = load(&args.input)?;
    let rule = uniform_step_size(loaded.game()?.jacobian())?;
    emit(&format!("{:.16e}\n", rule.gamma))?;
    Ok(ExitCode::SUCCESS)
}
