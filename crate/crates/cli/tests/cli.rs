use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impactflow")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, command: &str, scenario: &Path) -> Output {
    run(&[command, "--scenario", scenario.to_str().unwrap(), "--out", dir.to_str().unwrap()])
}

fn scenario_file(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn plastic_ball_mode_flips_at_sqrt_two() {
    let out = TempDir::new().unwrap();
    let status = run_in(out.path(), "simulate", &scenarios().join("ball-plastic.toml"));
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let (header, rows) = read_csv(&out.path().join("trajectory.csv"));
    assert_eq!(header, ["t", "q_1", "v_1", "mode_bitmask"]);
    let flip = rows.iter().position(|r| r[3] == "1").expect("ball comes to rest");
    assert!(rows[..flip].iter().all(|r| r[3] == "0"));
    assert!(rows[flip..].iter().all(|r| r[3] == "1"));
    let t_before: f64 = rows[flip - 1][0].parse().unwrap();
    let t_after: f64 = rows[flip][0].parse().unwrap();
    let landing = 2f64.sqrt();
    assert!((t_before - landing).abs() < 1e-10, "{t_before}");
    assert!(t_after > landing && t_after - landing <= 0.01);

    let word = json(&out.path().join("word.json"));
    assert_eq!(word["signature"], "{} -[{1}]-> {1}");
    assert_eq!(word["modes"][1]["bitmask"], 1);
    assert_eq!(word["events"][0]["kind"], "activation");
    assert!((word["events"][0]["t"].as_f64().unwrap() - landing).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for (command, scenario) in [
        ("simulate", "ball-plastic.toml"),
        ("sweep", "pair-offset.toml"),
        ("sensitivity", "pair-level-sensitivity.toml"),
    ] {
        for dir in [&a, &b] {
            assert!(run_in(dir.path(), command, &scenarios().join(scenario)).status.success());
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for name in names {
        let (x, y) = (std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
        assert_eq!(x, y, "{name:?}");
    }
}

#[test]
fn grazing_exits_with_two() {
    let out = TempDir::new().unwrap();
    let result = run_in(out.path(), "simulate", &scenarios().join("ceiling-graze.toml"));
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("GrazingDetected"));
}

#[test]
fn horizon_at_an_impact_exits_with_two() {
    // Dropped from 1/2 with g = 1 the ball lands at t = 1 exactly.
    let dir = TempDir::new().unwrap();
    let path =
        scenario_file(&dir, "horizon = 1.0\n[model]\nname = \"bouncing-ball\"\n[initial]\nq = [0.5]\nv = [0.0]\n");
    let result = run_in(dir.path(), "sensitivity", &path);
    assert_eq!(result.status.code(), Some(2), "{}", String::from_utf8_lossy(&result.stderr));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let zero_length = "horizon = 1.0\n[model]\nname = \"decoupled-pair\"\n[sweep]\ntarget = \"offset\"\nstart = 0.0\nstop = 0.1\ncount = 0\n";
    let path = scenario_file(&dir, zero_length);
    assert_eq!(run_in(dir.path(), "sweep", &path).status.code(), Some(1));

    let no_sweep = scenario_file(&dir, "horizon = 1.0\n[model]\nname = \"decoupled-pair\"\n");
    assert_eq!(run_in(dir.path(), "sweep", &no_sweep).status.code(), Some(1));

    let bad_family =
        "horizon = 1.0\n[model]\nname = \"decoupled-pair\"\n[sweep]\ntarget = \"pitch\"\nstart = 0.0\nstop = 0.1\ncount = 3\n";
    let path = scenario_file(&dir, bad_family);
    assert_eq!(run_in(dir.path(), "sweep", &path).status.code(), Some(1));

    let ball = scenarios().join("ball-plastic.toml");
    let negative = run(&["simulate", "--scenario", ball.to_str().unwrap(), "--tol-event", "-1"]);
    assert_eq!(negative.status.code(), Some(1));
    assert_eq!(run(&["simulate"]).status.code(), Some(1));
    assert_eq!(run(&["check", "--model", "no-such-model"]).status.code(), Some(1));
}

#[test]
fn sweep_outputs_share_word_ids() {
    let out = TempDir::new().unwrap();
    assert!(run_in(out.path(), "sweep", &scenarios().join("pair-offset.toml")).status.success());
    let (header, rows) = read_csv(&out.path().join("sweep.csv"));
    assert_eq!(header, ["value", "q_1", "q_2", "v_1", "v_2", "mode_bitmask", "word_id"]);
    assert_eq!(rows.len(), 101);
    let values: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(values[0], -0.1);
    assert_eq!(values[100], 0.1);
    assert!(values.windows(2).all(|w| w[0] < w[1]));

    let ids: Vec<usize> = rows.iter().map(|r| r[6].parse().unwrap()).collect();
    let mut seen = 0;
    for &id in &ids {
        assert!(id <= seen);
        seen = seen.max(id + 1);
    }
    let words = json(&out.path().join("words.json"));
    let table = words["words"].as_array().unwrap();
    assert_eq!(table.len(), seen);
    assert!(table.len() >= 3);
    for (k, w) in table.iter().enumerate() {
        assert_eq!(w["id"], k);
        assert_eq!(w["rows"], ids.iter().filter(|&&i| i == k).count());
    }
    assert_eq!(words["target"], "offset");
}

#[test]
fn soft_trot_sweep_has_several_words_without_jumps() {
    let out = TempDir::new().unwrap();
    assert!(run_in(out.path(), "sweep", &scenarios().join("soft-trot-pitch.toml")).status.success());
    let (_, rows) = read_csv(&out.path().join("sweep.csv"));
    let ids: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.last().unwrap().as_str()).collect();
    assert!(ids.len() >= 2);
    let states: Vec<Vec<f64>> = rows.iter().map(|r| r[1..11].iter().map(|x| x.parse().unwrap()).collect()).collect();
    let jump = |k: usize| states[k + 1].iter().zip(&states[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let largest = (0..states.len() - 1).map(jump).fold(0.0, f64::max);
    assert!(
        jump(99).max(jump(100))
            <= 2.0 * (0..states.len() - 1).filter(|&k| k != 99 && k != 100).map(jump).fold(0.0, f64::max)
    );
    assert!(largest < 0.05);
}

#[test]
fn sensitivity_report_agrees_with_its_oracle() {
    let out = TempDir::new().unwrap();
    let result = run_in(out.path(), "sensitivity", &scenarios().join("pair-level-sensitivity.toml"));
    assert!(result.status.success());
    let report = json(&out.path().join("sensitivity.json"));
    assert_eq!(report["signature"], "{} -[{1,2}]-> {}");
    assert_eq!(report["d_phi"].as_array().unwrap().len(), 4);
    assert!(report["finite_difference"]["max_rel_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(report["word_independence"]["pass"], true);
    assert_eq!(report["per_event"][0]["constraints"], serde_json::json!([1, 2]));
    assert!(report["per_event"][0]["form_spread"].as_f64().unwrap() < 1e-10);
}

#[test]
fn check_reports_decoupling_verdicts() {
    let out = TempDir::new().unwrap();
    let dir = out.path().to_str().unwrap();
    assert!(run(&["check", "--model", "decoupled-pair", "--out", dir]).status.success());
    let report = json(&out.path().join("check.json"));
    assert_eq!(report["decoupled"], true);
    assert_eq!(report["decoupling"]["clause1"]["pass"], true);

    let result = run(&["check", "--model", "rigid-trot", "--out", dir]);
    assert!(result.status.success());
    assert!(String::from_utf8_lossy(&result.stdout).contains("FAIL block-diagonal inertia"));
    let report = json(&out.path().join("check.json"));
    assert_eq!(report["decoupled"], false);
    assert_eq!(report["declared_decoupled"], false);
    assert_eq!(report["decoupling"]["clause1"]["pass"], false);

    assert!(run(&["check", "--model", "soft-trot", "--out", dir]).status.success());
    assert_eq!(json(&out.path().join("check.json"))["decoupling"]["clause3"]["pass"], true);
}
