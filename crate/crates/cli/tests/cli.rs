use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn command() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ddgame"));
    cmd.env_remove("DECOUPLING_THREADS");
    cmd
}

fn ddgame(args: &[&str]) -> Output {
    command().args(args).output().unwrap()
}

fn ddgame_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = command()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(out)))
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|row| row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

/// `(source, target)` pairs reported decoupled by `analyze --all-pairs`.
fn decoupled_pairs(input: &str, extra: &[&str]) -> BTreeSet<(u64, u64)> {
    let mut args = vec!["analyze", input, "--all-pairs", "--format", "json"];
    args.extend_from_slice(extra);
    let out = ddgame(&args);
    assert!(code(&out) <= 1, "{}", stderr(&out));
    json(&out)
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["verdict"].as_bool().unwrap())
        .map(|r| (r["pair"][0].as_u64().unwrap(), r["pair"][1].as_u64().unwrap()))
        .collect()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn analyze_exit_codes_follow_verdicts() {
    let ok = ddgame(&["analyze", &fixture("diamond_decoupled.toml"), "--pair", "1", "4"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(stdout(&ok).starts_with("1 -> 4: decoupled"));

    let flipped = ddgame(&[
        "analyze",
        &fixture("diamond_coupled.toml"),
        "--pair",
        "1",
        "4",
        "--format",
        "json",
    ]);
    assert_eq!(code(&flipped), 1);
    let report = &json(&flipped)[0];
    assert_eq!(report["verdict"], false);
    assert_eq!(report["firstFailure"], 2);
    assert_eq!(report["residuals"][0], 0.0);
    assert!(report["residuals"][1].as_f64().unwrap() > 0.1);
    assert!(report["runtimeMs"].is_null());

    let ragged = ddgame(&["analyze", &fixture("ragged.toml"), "--all-pairs"]);
    assert_eq!(code(&ragged), 2);
    assert!(stderr(&ragged).contains("P[\"1\"]: row 2 has 1 entries, expected 2"));
    assert!(ragged.stdout.is_empty());

    let missing = ddgame(&["analyze", &fixture("no_such_file.toml"), "--all-pairs"]);
    assert_eq!(code(&missing), 2);
    assert_eq!(code(&ddgame(&["analyze", &fixture("identity.toml")])), 2);
    assert_eq!(
        code(&ddgame(&["analyze", &fixture("identity.toml"), "--pair", "1", "3"])),
        2
    );
    assert_eq!(
        code(&ddgame(&["analyze", &fixture("identity.toml"), "--pair", "2", "2"])),
        2
    );
}

#[test]
fn parse_errors_carry_locations() {
    let text = fs::read_to_string(fixture("two_player_scalar.toml")).unwrap();
    let typo = text.replace("gamma =", "gama =");
    let out = ddgame_stdin(&["analyze", "-", "--all-pairs"], typo.as_bytes());
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("line 5") && err.contains("gama"), "{err}");

    let broken = text.replace("dims = [1, 1]", "dims = [1, 1");
    let out = ddgame_stdin(&["analyze", "-", "--all-pairs"], broken.as_bytes());
    assert_eq!(code(&out), 2);
    // The unclosed array is reported where the next line begins.
    assert!(stderr(&out).contains("line 4"), "{}", stderr(&out));

    let bilinear = fs::read_to_string(fixture("bilinear_alternating.toml")).unwrap() + "gamma = [1.0]\n";
    let out = ddgame_stdin(&["stepsize", "-"], bilinear.as_bytes());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown field `gamma`"));

    let undeclared = text.replace("\"2,1\"", "\"3,1\"");
    let out = ddgame_stdin(&["nash", "-"], undeclared.as_bytes());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("names player 3"));

    let wrong_block = text.replace("\"1,2\" = [[1.0]]", "\"1,2\" = [[1.0, 0.0]]");
    let out = ddgame_stdin(&["nash", "-"], wrong_block.as_bytes());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("P_1,2"), "{}", stderr(&out));
}

#[test]
fn stdin_matches_file_input() {
    let path = fixture("tug_of_war.toml");
    let from_file = ddgame(&["analyze", &path, "--all-pairs", "--format", "json"]);
    let from_stdin = ddgame_stdin(
        &["analyze", "-", "--all-pairs", "--format", "json"],
        &fs::read(&path).unwrap(),
    );
    assert_eq!(code(&from_file), 1);
    assert_eq!(from_file.stdout, from_stdin.stdout);
}

#[test]
fn tug_of_war_decouples_orthogonal_pullers() {
    let path = fixture("tug_of_war.toml");
    let expected: BTreeSet<(u64, u64)> = [(1, 4), (4, 1), (2, 3), (3, 2)].into_iter().collect();
    assert_eq!(decoupled_pairs(&path, &[]), expected);
    // Exact arithmetic sees the rounding left in the lifted (2,3) blocks;
    // only the structurally zero pair survives.
    let exact: BTreeSet<(u64, u64)> = [(1, 4), (4, 1)].into_iter().collect();
    assert_eq!(decoupled_pairs(&path, &["--exact"]), exact);
    // Forty coordinates make walks of length up to 39; enumeration refuses.
    let paths = ddgame(&["analyze", &path, "--all-pairs", "--method", "paths"]);
    assert_eq!(code(&paths), 2);
    assert!(stderr(&paths).contains("use the algebraic check"));
    let pair = ddgame(&["analyze", &path, "--pair", "1", "4"]);
    assert_eq!(code(&pair), 0);
}

#[test]
fn methods_agree_on_every_fixture() {
    for name in [
        "diamond_decoupled.toml",
        "diamond_coupled.toml",
        "bilinear_alternating.toml",
        "lq_horizon_one.toml",
        "two_player_scalar.toml",
    ] {
        let path = fixture(name);
        let algebraic = decoupled_pairs(&path, &[]);
        assert_eq!(algebraic, decoupled_pairs(&path, &["--method", "paths"]), "{name}");
        assert_eq!(algebraic, decoupled_pairs(&path, &["--exact"]), "{name}");
    }
    let out = ddgame(&[
        "analyze",
        &fixture("identity.toml"),
        "--all-pairs",
        "--exact",
        "--method",
        "paths",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn reports_round_trip_through_json() {
    let out = ddgame(&[
        "analyze",
        &fixture("diamond_coupled.toml"),
        "--all-pairs",
        "--format",
        "json",
        "--timing",
    ]);
    let value = json(&out);
    for r in value.as_array().unwrap() {
        assert!(r["runtimeMs"].as_f64().unwrap() >= 0.0);
        assert_eq!(r["method"], "algebraic");
        assert_eq!(r["tolerance"], 1e-9);
    }
    let again: Value = serde_json::from_str(&serde_json::to_string(&value).unwrap()).unwrap();
    assert_eq!(value, again);
}

#[test]
fn build_then_analyze_preserves_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "diamond_decoupled.toml",
        "diamond_coupled.toml",
        "tug_of_war.toml",
        "bilinear_alternating.toml",
        "lq_horizon_one.toml",
        "two_player_scalar.toml",
        "identity.toml",
    ] {
        let out = ddgame(&["build", &fixture(name), "--emit", "game"]);
        assert_eq!(code(&out), 0, "{name}: {}", stderr(&out));
        let emitted = dir.path().join(name);
        fs::write(&emitted, &out.stdout).unwrap();
        let original = decoupled_pairs(&fixture(name), &[]);
        assert_eq!(original, decoupled_pairs(emitted.to_str().unwrap(), &[]), "{name}");
        let doc: toml::Table = stdout(&out).parse().unwrap();
        assert_eq!(doc["kind"].as_str(), Some("quadratic"));
        assert!(doc["gamma"].is_array());
    }
}

#[test]
fn alternating_graph_has_product_block() {
    let out = ddgame(&["build", &fixture("bilinear_alternating.toml")]);
    assert_eq!(code(&out), 0);
    let dump = json(&out);
    let w = matrix(&dump["W"]);
    // I + g1 g2 B A with A = [[1, 0.5], [0, 2]], B = [[-1, 0], [0.25, -1]], g1 g2 = 1/8.
    let ba = [[-1.0, -0.5], [0.25, -1.875]];
    for r in 0..2 {
        for c in 0..2 {
            let id = if r == c { 1.0 } else { 0.0 };
            assert!((w[2 + r][2 + c] - (id + ba[r][c] / 8.0)).abs() <= 1e-15);
        }
    }
    assert_eq!(dump["kind"], "bilinear");
    assert!(dump.get("G").is_none());
}

#[test]
fn horizon_one_lift_exposes_input_matrices() {
    let out = ddgame(&["build", &fixture("lq_horizon_one.toml"), "--emit", "graph"]);
    assert_eq!(code(&out), 0);
    let dump = json(&out);
    let b = [[1.0, 2.0], [0.0, 3.0]];
    for (i, bi) in b.iter().enumerate() {
        let g = matrix(&dump["G"][i]);
        assert_eq!(g, vec![vec![0.0], vec![0.0], vec![bi[0]], vec![bi[1]]]);
    }
    let h = matrix(&dump["H"]);
    assert_eq!(h, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.5], vec![0.0, 1.0]]);
}

#[test]
fn tug_of_war_cross_blocks_are_weighted_grams() {
    let out = ddgame(&["build", &fixture("tug_of_war.toml"), "--emit", "game"]);
    assert_eq!(code(&out), 0);
    let doc: toml::Table = stdout(&out).parse().unwrap();
    let p = doc["P"].as_table().unwrap();
    let block = |key: &str| -> Option<Vec<Vec<f64>>> {
        p.get(key).map(|v| {
            v.as_array()
                .unwrap()
                .iter()
                .map(|row| row.as_array().unwrap().iter().map(|x| x.as_float().unwrap()).collect())
                .collect()
        })
    };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let grams = [("1,2", s), ("1,3", -s), ("2,4", s), ("3,4", s)];
    for (key, gram) in grams {
        let m = block(key).unwrap();
        for (a, row) in m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                // Weight of inputs at steps a and c: remaining steps after the later one.
                let weight = 10.0 - a.max(c) as f64;
                assert!((v - weight * gram).abs() <= 1e-12, "{key}[{a}][{c}]");
            }
        }
        // The trailing 9x9 block carries weights 9 - max(s, t).
        assert!((m[1][1] - 9.0 * gram).abs() <= 1e-12);
        assert!((m[9][9] - gram).abs() <= 1e-12);
    }
    for key in ["1,4", "4,1", "2,3", "3,2"] {
        if let Some(m) = block(key) {
            assert!(m.iter().flatten().all(|v| v.abs() <= 1e-12), "{key}");
        }
    }
    let own = block("1").unwrap();
    assert!((own[0][0] - 20.0).abs() <= 1e-12);
}

#[test]
fn nash_and_stepsize_values() {
    let out = ddgame(&["nash", &fixture("two_player_scalar.toml")]);
    assert_eq!(code(&out), 0);
    let x: Vec<f64> = stdout(&out).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(x.len(), 2);
    for v in x {
        assert!((v + 1.0 / 3.0).abs() <= 1e-15);
    }
    let zero = ddgame(&["nash", &fixture("identity.toml")]);
    assert_eq!(stdout(&zero), "0.0000000000000000e0\n0.0000000000000000e0\n");

    let out = ddgame(&["stepsize", &fixture("identity.toml")]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim().parse::<f64>().unwrap(), 1.0);

    let singular = "kind = \"quadratic\"\ndims = [1, 1]\ngamma = [0.5, 0.5]\n[P]\n\"1\" = [[1.0]]\n\"2\" = [[1.0]]\n\"1,2\" = [[1.0]]\n\"2,1\" = [[1.0]]\n";
    let out = ddgame_stdin(&["nash", "-"], singular.as_bytes());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("singular"));
}

#[test]
fn sweep_leaves_orthogonal_player_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let out = ddgame(&[
        "simulate",
        &fixture("tug_of_war.toml"),
        "--disturb",
        "1",
        "--sweep",
        "1,10,50",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_csv(&out_dir.join("sweep.csv"));
    assert_eq!(rows.len(), 12);
    let mut first_player: Vec<f64> = Vec::new();
    for row in &rows {
        let rel: f64 = row[3].parse().unwrap();
        match row[1].as_str() {
            "4" => assert!(rel <= 1e-8, "{row:?}"),
            "1" => first_player.push(row[2].parse().unwrap()),
            _ => {}
        }
    }
    assert!(first_player[0] > 1e-3);
    assert!(first_player.windows(2).all(|w| w[0] < w[1]));
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("deviation.json")).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 3);
    assert_eq!(report[2]["bound"], 50.0);
    assert_eq!(report[0]["partial"], false);
}

#[test]
fn zero_bound_gives_zero_deviation() {
    for name in ["tug_of_war.toml", "two_player_scalar.toml", "bilinear_alternating.toml"] {
        let out = ddgame(&["simulate", &fixture(name), "--bound", "0", "--steps", "30"]);
        assert_eq!(code(&out), 0);
        let text = stdout(&out);
        let values: Vec<&str> = text
            .lines()
            .skip(2)
            .flat_map(|l| l.split_whitespace().skip(1))
            .collect();
        assert!(!values.is_empty());
        assert!(
            values.iter().all(|v| v.parse::<f64>().unwrap() == 0.0),
            "{name}: {text}"
        );
    }
}

#[test]
fn simulation_files_are_consistent_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let path = dir.path().join(sub);
        let out = ddgame(&[
            "simulate",
            &fixture("two_player_scalar.toml"),
            "--disturb",
            "1",
            "--bound",
            "2",
            "--seed",
            "11",
            "--steps",
            "40",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        (path, out.stdout)
    };
    let (a, stdout_a) = run("a");
    let (b, stdout_b) = run("b");
    assert_eq!(stdout_a, stdout_b);
    for file in ["clean.csv", "corrupted.csv", "costs.csv", "deviation.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let clean = read_csv(&a.join("clean.csv"));
    let corrupted = read_csv(&a.join("corrupted.csv"));
    assert_eq!(clean.len(), 41 * 2);
    // The coupled second player moves; its largest move matches the report.
    let mut max_dev: f64 = 0.0;
    for (c, d) in clean.iter().zip(&corrupted) {
        assert_eq!(c[..3], d[..3]);
        if c[1] == "2" {
            let diff = d[3].parse::<f64>().unwrap() - c[3].parse::<f64>().unwrap();
            max_dev = max_dev.max(diff.abs());
        }
    }
    assert!(max_dev > 1e-6);
    let report: Value = serde_json::from_str(&fs::read_to_string(a.join("deviation.json")).unwrap()).unwrap();
    assert_eq!(report["players"][1]["maxDeviation"].as_f64().unwrap(), max_dev);
    assert_eq!(report["seed"], 11);

    let threads = command()
        .env("DECOUPLING_THREADS", "1")
        .args([
            "simulate",
            &fixture("two_player_scalar.toml"),
            "--bound",
            "2",
            "--seed",
            "11",
            "--steps",
            "40",
        ])
        .output()
        .unwrap();
    assert_eq!(threads.stdout, stdout_a);
    let bad = command()
        .env("DECOUPLING_THREADS", "zero")
        .args(["stepsize", &fixture("identity.toml")])
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn divergence_exits_one_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let doc = "kind = \"quadratic\"\ndims = [1]\nx0 = [1.0]\n\n[P]\n\"1\" = [[-3.0]]\n";
    let out = ddgame_stdin(
        &[
            "simulate",
            "-",
            "--steps",
            "2000",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        doc.as_bytes(),
    );
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("deviation.json")).unwrap()).unwrap();
    assert_eq!(report["partial"], true);
    let step = report["divergedAt"].as_u64().unwrap() as usize;
    assert!(step > 1 && step < 2000);
    assert_eq!(read_csv(&dir.path().join("clean.csv")).len(), step);
}

#[test]
fn simulate_rejects_bad_parameters() {
    let path = fixture("two_player_scalar.toml");
    for args in [
        vec!["simulate", &path, "--steps", "0"],
        vec!["simulate", &path, "--disturb", "3"],
        vec!["simulate", &path, "--bound", "-1"],
        vec!["simulate", &path, "--sweep", "5,1"],
        vec!["simulate", &path, "--sweep", "1,2", "--bound", "3"],
    ] {
        assert_eq!(code(&ddgame(&args)), 2, "{args:?}");
    }
}
