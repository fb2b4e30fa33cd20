use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn plastigen(args: &[&str]) -> Output {
    plastigen_with_env(args, &[])
}

fn plastigen_with_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plastigen"));
    cmd.args(args).env_remove("PLASTIGEN_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_evolve(out: &Path, generations: &str) -> Output {
    plastigen(&[
        "evolve",
        "--family",
        "t0",
        "--seed",
        "1",
        "--generations",
        generations,
        "--k",
        "2",
        "--m",
        "100",
        "--out",
        path_str(out),
    ])
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evolve_writes_one_line_per_generation() {
    let dir = TempDir::new().unwrap();
    let out = small_evolve(dir.path(), "7");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines = fs::read_to_string(dir.path().join("generations.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 7);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["generation"], 1);
    assert_eq!(first["evaluations"], 4);

    let champion = json(&dir.path().join("champion.json"));
    assert!(champion["genome"]["genes"].is_array());
    assert!(champion["expression"].is_string());

    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["master_seed"], 1);
    assert_eq!(manifest["invocation"]["command"], "evolve");
    assert_eq!(manifest["config"]["lambda"], 4);
    assert!(manifest["finished_unix_ms"].is_u64());
}

#[test]
fn evolve_reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&small_evolve(a.path(), "6")), 0);
    assert_eq!(code(&small_evolve(b.path(), "6")), 0);
    for name in ["generations.jsonl", "champion.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let runs: Vec<Vec<u8>> = ["1", "3", "8"]
        .iter()
        .map(|threads| {
            let dir = TempDir::new().unwrap();
            let out = plastigen_with_env(
                &["evolve", "--seed", "4", "--generations", "5", "--k", "3", "--m", "100", "--out", path_str(dir.path())],
                &[("PLASTIGEN_THREADS", threads)],
            );
            assert_eq!(code(&out), 0, "{}", stderr(&out));
            fs::read(dir.path().join("generations.jsonl")).unwrap()
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn bad_thread_setting_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = plastigen_with_env(
        &["gen-data", "--out", path_str(dir.path())],
        &[("PLASTIGEN_THREADS", "many")],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn zero_generations_keeps_initial_champion() {
    let dir = TempDir::new().unwrap();
    let out = small_evolve(dir.path(), "0");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("generations.jsonl")).unwrap(), "");
    let champion = json(&dir.path().join("champion.json"));
    assert!(champion["fitness"].is_f64());
}

#[test]
fn invalid_evolve_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    for bad in [["--mutation-rate", "0"], ["--mu", "0"], ["--m", "0"], ["--family", "t9"]] {
        let out = plastigen(&["evolve", bad[0], bad[1], "--out", path_str(dir.path())]);
        assert_eq!(code(&out), 2, "{bad:?}: {}", stderr(&out));
    }
    assert_eq!(code(&plastigen(&["evolve"])), 2);
}

#[test]
fn unwritable_output_exits_1() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = plastigen(&["gen-data", "--out", path_str(&blocker.join("sub"))]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn eval_expr_matches_builtin() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("scores.csv");
    let out = plastigen(&[
        "eval",
        "--rule",
        "lr2",
        "--rule",
        "expr:2*y*(x - w*y)",
        "--n-eval",
        "4",
        "--m",
        "200",
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for i in 0..4 {
        assert_eq!(rows[i][0], "lr2");
        assert_eq!(rows[i + 4][0], "expr:2*y*(x - w*y)");
        assert_eq!(rows[i][2], rows[i + 4][2]);
        assert_eq!(rows[i][3], rows[i + 4][3]);
    }
    assert!(dir.path().join("scores.csv.manifest.json").exists());
}

#[test]
fn eval_single_dataset_per_rule() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("one.csv");
    let out = plastigen(&["eval", "--rule", "oja", "--rule", "lr3", "--n-eval", "1", "--m", "100", "--out", path_str(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("rule,family,dataset_seed,score\n"));
}

#[test]
fn eval_reports_parse_position() {
    let dir = TempDir::new().unwrap();
    let out = plastigen(&["eval", "--rule", "expr:x - ", "--out", path_str(&dir.path().join("x.csv"))]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("position 4"), "{err}");
    assert!(err.contains("    ^"), "{err}");
    let out = plastigen(&["eval", "--rule", "hebb", "--out", path_str(&dir.path().join("x.csv"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_accepts_champion_files() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&small_evolve(dir.path(), "3")), 0);
    let champion = format!("file:{}", path_str(&dir.path().join("champion.json")));
    let kernel = dir.path().join("kernel.txt");
    fs::write(&kernel, "y*(x - w*y)\n").unwrap();
    let kernel = format!("file:{}", path_str(&kernel));
    let csv = dir.path().join("s.csv");
    let out = plastigen(&[
        "eval", "--rule", &champion, "--rule", &kernel, "--rule", "oja", "--n-eval", "2", "--m", "100", "--out",
        path_str(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let scores: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(scores.len(), 6);
    assert_eq!(scores[2..4], scores[4..6]);
}

#[test]
fn phase_plane_finds_the_lr3_attractor() {
    let dir = TempDir::new().unwrap();
    let out = plastigen(&[
        "phase-plane",
        "--rule",
        "lr3",
        "--var1",
        "1.0",
        "--var2",
        "0.9",
        "--cov",
        "0.3",
        "--trajectory",
        "1,0",
        "--trajectory",
        "-0.5,0.5",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&dir.path().join("fixed_points.json"));
    let stable: Vec<&serde_json::Value> = report["fixed_points"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["stability"] == "stable")
        .collect();
    assert_eq!(stable.len(), 1);
    let loc = stable[0]["location"].as_array().unwrap();
    assert!(loc.iter().all(|v| v.as_f64().unwrap() < 0.0));
    assert_eq!(report["provenance"]["kind"], "closed_form_lr3");

    let field = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    assert_eq!(field.lines().count(), 401);
    for k in 1..=2 {
        let traj = fs::read_to_string(dir.path().join(format!("trajectory_{k}.csv"))).unwrap();
        let last = traj.lines().last().unwrap();
        let w: Vec<f64> = last.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!((w[0] + 0.8787).abs() < 1e-3 && (w[1] + 0.8642).abs() < 1e-3, "{last}");
    }
}

#[test]
fn phase_plane_grid_rows() {
    let dir = TempDir::new().unwrap();
    let out = plastigen(&[
        "phase-plane", "--rule", "lr3", "--var1", "1.0", "--var2", "0.9", "--cov", "0.3", "--grid", "5", "--box",
        "2", "--out", path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let field = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    assert_eq!(field.lines().count(), 26);
    assert!(field.contains("\n0.0,0.0,-1.0,-0.9\n"), "{field}");
}

#[test]
fn phase_plane_rejects_indefinite_covariance() {
    let dir = TempDir::new().unwrap();
    let out = plastigen(&[
        "phase-plane", "--rule", "lr3", "--var1", "1.0", "--var2", "0.9", "--cov", "1.0", "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("covariance not positive definite"));
    assert!(!dir.path().join("field.csv").exists());
}

#[test]
fn phase_plane_monte_carlo_field() {
    let dir = TempDir::new().unwrap();
    let out = plastigen(&[
        "phase-plane", "--rule", "oja", "--var1", "2.0", "--var2", "1.0", "--cov", "0", "--grid", "3", "--box",
        "1.5", "--mc-samples", "20000", "--out", path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&dir.path().join("fixed_points.json"));
    assert_eq!(report["provenance"]["kind"], "monte_carlo");
    assert_eq!(report["provenance"]["samples"], 20000);
}

#[test]
fn gen_data_t2_has_axis_component() {
    let dir = TempDir::new().unwrap();
    let out = plastigen(&["gen-data", "--family", "t2", "--n", "2", "--m", "100", "--seed", "7", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let meta = json(&dir.path().join("meta.json"));
    let nonzero = meta["pc0"].as_array().unwrap().iter().filter(|v| v.as_f64().unwrap() != 0.0).count();
    assert_eq!(nonzero, 1);
    assert_eq!(meta["family"], "t2");
    assert_eq!(meta["M"], 100);
}

#[test]
fn gen_data_is_reproducible_and_sized() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let out = plastigen(&["gen-data", "--m", "1000", "--n", "2", "--seed", "3", "--out", path_str(dir.path())]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for name in ["meta.json", "inputs.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
    let inputs = fs::read_to_string(a.path().join("inputs.csv")).unwrap();
    let mut lines = inputs.lines();
    assert_eq!(lines.next(), Some("x0,x1"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1000);
    assert!(rows.iter().all(|r| r.split(',').count() == 2));
    let loaded = plastigen::tasks::Dataset::load(a.path()).unwrap();
    assert_eq!(loaded.len(), 1000);
}

#[test]
fn replay_reproduces_outputs() {
    let original = TempDir::new().unwrap();
    let replayed = TempDir::new().unwrap();
    assert_eq!(code(&small_evolve(original.path(), "5")), 0);
    let out = plastigen(&[
        "replay",
        path_str(&original.path().join("manifest.json")),
        "--out",
        path_str(replayed.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["generations.jsonl", "champion.json"] {
        assert_eq!(
            fs::read(original.path().join(name)).unwrap(),
            fs::read(replayed.path().join(name)).unwrap()
        );
    }

    let data = TempDir::new().unwrap();
    let again = TempDir::new().unwrap();
    assert_eq!(code(&plastigen(&["gen-data", "--family", "t1", "--m", "50", "--out", path_str(data.path())])), 0);
    let out = plastigen(&["replay", path_str(&data.path().join("manifest.json")), "--out", path_str(again.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read(data.path().join("inputs.csv")).unwrap(),
        fs::read(again.path().join("inputs.csv")).unwrap()
    );
}

#[test]
fn replay_of_missing_manifest_exits_1() {
    let out = plastigen(&["replay", "/nonexistent/manifest.json"]);
    assert_eq!(code(&out), 1);
}
