use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "[data]\nd = 12\nn = 6\nn_test = 20\n[train]\nm = 3\nepochs = 20\neta = 0.1\nsigma0 = 0.3\nlog_every = 5\nprobe_every = 5\n";

fn expctl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expctl"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("expctl starts")
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    path.display().to_string()
}

#[test]
fn unknown_preset_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = expctl(&["run", "--preset", "nope"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("figure1") && err.contains("Usage"), "{err}");
}

#[test]
fn bad_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[train]\neta = -1.0\n").unwrap();
    let out = expctl(&["run", "--config", path.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta"));
}

#[test]
fn run_writes_traces_summaries_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = expctl(
        &[
            "run",
            "--config",
            &cfg,
            "--mode",
            "multi",
            "--seeds",
            "0,1",
            "--out",
            "res",
            "--threads",
            "2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    for seed in [0, 1] {
        let trace = fs::read_to_string(res.join(format!("trace_multi_{seed}.csv"))).unwrap();
        let lines: Vec<&str> = trace.lines().collect();
        assert!(lines[0].starts_with("step,loss,max_gamma"));
        assert_eq!(lines.len(), 1 + 5);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(res.join(format!("summary_multi_{seed}.json"))).unwrap()).unwrap();
        let obj = summary.as_object().unwrap();
        for key in [
            "final_loss",
            "final_accuracy",
            "max_gamma",
            "max_rho",
            "stage_boundary",
            "assumption_d_over_n_sq",
        ] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert!(
            obj.values().all(|v| !v.is_object() && !v.is_array()),
            "summary must be flat"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(res.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1]));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    let leftovers: Vec<_> = fs::read_dir(&res)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            name.ends_with(".partial") || name.ends_with(".tmp")
        })
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn divergence_fails_and_keeps_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hot.toml");
    fs::write(
        &path,
        TINY.replace("eta = 0.1", "eta = 50.0")
            .replace("sigma0 = 0.3", "sigma0 = 3.0"),
    )
    .unwrap();
    let out = expctl(
        &[
            "run",
            "--config",
            path.to_str().unwrap(),
            "--mode",
            "multi",
            "--seeds",
            "0",
            "--out",
            "res",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("diverged"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let res = dir.path().join("res");
    assert!(res.join("trace_multi_0.csv.partial").exists());
    assert!(!res.join("trace_multi_0.csv").exists());
}

#[test]
fn figure1_panels_share_steps_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let mut panels = Vec::new();
    for out_dir in ["a", "b"] {
        let out = expctl(
            &["figure1", "--config", &cfg, "--seeds", "0..3", "--out", out_dir],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut texts = Vec::new();
        for panel in ["loss", "accuracy", "signal", "noise"] {
            texts.push(fs::read(dir.path().join(out_dir).join(format!("panel_{panel}.csv"))).unwrap());
        }
        panels.push(texts);
    }
    assert_eq!(panels[0], panels[1]);
    let steps = |bytes: &[u8]| -> Vec<String> {
        String::from_utf8_lossy(bytes)
            .lines()
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect()
    };
    let first = steps(&panels[0][0]);
    assert_eq!(first[0], "step");
    assert_eq!(first[1..], ["0", "5", "10", "15", "20"]);
    for p in &panels[0] {
        assert_eq!(steps(p), first);
        let header = String::from_utf8_lossy(p).lines().next().unwrap().to_string();
        assert_eq!(header, "step,single_mean,single_std,multi_mean,multi_std");
    }
}

#[test]
fn verify_warns_on_small_dimension_and_catches_fault() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = expctl(
        &["verify", "--config", &cfg, "--seeds", "0", "--inject-fault"],
        dir.path(),
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!out.status.success());
    assert!(text.contains("warning: assumption d_over_n_sq"), "{text}");
    let fd = text.lines().find(|l| l.contains("gradient finite difference")).unwrap();
    assert!(fd.contains("FAIL"), "{fd}");
    let out = expctl(&["verify", "--config", &cfg, "--seeds", "0"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    let fd = text.lines().find(|l| l.contains("gradient finite difference")).unwrap();
    assert!(fd.contains("PASS"), "{fd}");
}
