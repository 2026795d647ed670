use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn etchloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etchloop")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_stats_simulate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let synth = stdout_json(&etchloop(&["synth", "--out", p(&data), "--count", "2", "--size", "96", "--seed", "4"]));
    assert_eq!(synth["mirrors"].as_array().unwrap().len(), 2);

    let stats_file = dir.path().join("stats.json");
    let stats = stdout_json(&etchloop(&["stats", "--dataset", p(&data), "--out", p(&stats_file)]));
    let mu = stats["mu"].as_f64().unwrap();
    let sigma = stats["sigma"].as_f64().unwrap();
    assert!(mu > 3.0 && mu < 9.0, "mu {mu}");
    assert!((stats["conservative_width"].as_f64().unwrap() - (mu - 2.0 * sigma).max(1.0)).abs() < 1e-9);
    assert_eq!(stats["lenient_width"].as_f64().unwrap(), (mu + 2.0 * sigma).round());
    assert_eq!(stats["mirrors"], 2);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&stats_file).unwrap()).unwrap();
    assert_eq!(saved, stats);

    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!("dataset = {:?}\nstats = {:?}\npatch_size = 48\ncap = 6\n", p(&data), p(&stats_file)),
    )
    .unwrap();
    let out = dir.path().join("runs");
    let sim = stdout_json(&etchloop(&[
        "simulate", "--config", p(&config), "--out", p(&out), "--backend", "identity", "--repeats", "2",
    ]));
    assert_eq!(sim["backend"], "identity");
    let mirrors = sim["mirrors"].as_array().unwrap();
    assert_eq!(mirrors.len(), 2);
    for m in mirrors {
        let repeats = m["repeats"].as_array().unwrap();
        assert_eq!(repeats.len(), 2);
        for r in repeats {
            assert!(r["steps"].as_u64().unwrap() <= 6);
            assert!(r["final_pfm"].as_f64().unwrap() >= r["initial_pfm"].as_f64().unwrap());
        }
        let id = m["id"].as_str().unwrap();
        let curve = std::fs::read_to_string(out.join(id).join("repeat_00.csv")).unwrap();
        assert!(curve.starts_with("step,pfm,pfm_composed,pfm_delta,annotated_pixels"));
        assert!(out.join(id).join("final_01.png").is_file());
        assert!(out.join(id).join("average.csv").is_file());
    }
    assert!(out.join("average.csv").is_file());
    assert!(out.join("summary.json").is_file());

    // evaluate the final masks against the ground truth
    let (pred_dir, gt_dir) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    for m in mirrors {
        let id = m["id"].as_str().unwrap();
        std::fs::copy(out.join(id).join("final_00.png"), pred_dir.join(format!("{id}.png"))).unwrap();
        std::fs::copy(data.join(id).join("gt.png"), gt_dir.join(format!("{id}.png"))).unwrap();
    }
    let eval = stdout_json(&etchloop(&["evaluate", "--pred", p(&pred_dir), "--gt", p(&gt_dir)]));
    let files = eval["files"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for (f, m) in files.iter().zip(mirrors) {
        let expected = m["repeats"][0]["final_pfm"].as_f64().unwrap();
        assert!((f["pfm"].as_f64().unwrap() - expected).abs() < 1e-9);
    }
    let same = stdout_json(&etchloop(&["evaluate", "--pred", p(&gt_dir), "--gt", p(&gt_dir)]));
    assert_eq!(same["pooled"]["pfm"], 1.0);
    assert_eq!(same["pooled"]["iou"], 1.0);
}

#[test]
fn usage_errors_exit_two() {
    let out = etchloop(&["stats", "--width-mode", "wide"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["code"], "usage");
    let out = etchloop(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(etchloop(&["--version"]).status.success());
    assert!(etchloop(&["--help"]).status.success());
}

#[test]
fn runtime_errors_exit_one_with_a_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let out = etchloop(&["stats", "--config", p(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "config_error");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "cap = 0\n").unwrap();
    let out = etchloop(&["simulate", "--config", p(&bad), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "config_error");

    let out = etchloop(&["stats", "--dataset", p(&dir.path().join("nothing"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["message"].as_str().is_some());

    let out = etchloop(&["synth", "--out", p(dir.path()), "--count", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "invalid_argument");

    let out = etchloop(&["serve", "--dataset", p(&dir.path().join("nothing")), "--port", "0"]);
    assert_eq!(out.status.code(), Some(1));
}
