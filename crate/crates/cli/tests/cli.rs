use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_markush-gate");

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args)
        .env_remove("MARKUSH_GATE_SEED")
        .env("RUST_LOG", "info");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args, &[]);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_json(path: &Path, v: &Value) -> PathBuf {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

fn synth_config(dir: &Path, name: &str, n: usize, fraction: f64, seed: u64) -> PathBuf {
    write_json(
        &dir.join(name),
        &json!({
            "n_images": n,
            "size_range": [160, 240, 300, 300],
            "indicator_scale_range": [10, 25],
            "markush_fraction": fraction,
            "indicators_per_image": [1, 4],
            "seed": seed,
        }),
    )
}

fn corpus(dir: &Path, n: usize, fraction: f64) -> PathBuf {
    let cfg = synth_config(dir, "synth.json", n, fraction, 11);
    let data = dir.join("data");
    ok(&["synth", "-c", p(&cfg), "-o", p(&data)]);
    data.join("manifest.json")
}

fn orb_config(dir: &Path, manifest: &Path, seed: u64) -> PathBuf {
    write_json(
        &dir.join("orb.json"),
        &json!({
            "dataset": manifest,
            "output_dir": dir.join("runs/orb"),
            "method": "orb",
            "seed": seed,
            "orb": {
                "template_size": 96,
                "grid": {
                    "orb_features": [200],
                    "n_templates": [8],
                    "n_estimators": [20],
                    "max_depth": [3]
                }
            }
        }),
    )
}

fn cnn_config(dir: &Path, manifest: &Path, mode: &str) -> PathBuf {
    write_json(
        &dir.join(format!("cnn_{mode}.json")),
        &json!({
            "dataset": manifest,
            "output_dir": dir.join(format!("runs/cnn_{mode}")),
            "method": "cnn",
            "seed": 4,
            "cnn": {
                "mode": mode,
                "net": {"input_size": 224, "in_channels": 3, "channels": [2, 4]},
                "trials": 2,
                "train": {"max_epochs": 2, "early_stop_patience": 1}
            }
        }),
    )
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn csv_rows(path: &Path) -> usize {
    String::from_utf8(read(path)).unwrap().lines().count() - 1
}

#[test]
fn synth_is_reproducible_and_seed_env_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = synth_config(tmp.path(), "s.json", 6, 0.5, 1);
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    let out = ok(&["synth", "-c", p(&cfg), "-o", p(&a)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 images"));
    ok(&["synth", "-c", p(&cfg), "-o", p(&b)]);
    assert_eq!(
        read(&a.join("manifest.json")),
        read(&b.join("manifest.json"))
    );
    for e in fs::read_dir(a.join("images")).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(
            read(&a.join("images").join(&name)),
            read(&b.join("images").join(&name))
        );
    }

    let env = run(
        &["synth", "-c", p(&cfg), "-o", p(&c)],
        &[("MARKUSH_GATE_SEED", "2")],
    );
    assert!(env.status.success());
    let cfg2 = synth_config(tmp.path(), "s2.json", 6, 0.5, 2);
    let d = tmp.path().join("d");
    ok(&["synth", "-c", p(&cfg2), "-o", p(&d)]);
    assert_eq!(
        read(&c.join("manifest.json")),
        read(&d.join("manifest.json"))
    );
    assert_ne!(
        read(&a.join("manifest.json")),
        read(&c.join("manifest.json"))
    );

    let bad = run(
        &["synth", "-c", p(&cfg), "-o", p(&c)],
        &[("MARKUSH_GATE_SEED", "x")],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    for sub in ["synth", "train-orb", "train-cnn", "repeat"] {
        let mut args = vec![sub, "-c", p(&missing)];
        if sub == "synth" {
            args.extend(["-o", p(tmp.path())]);
        }
        assert_eq!(run(&args, &[]).status.code(), Some(2), "{sub}");
    }
    assert_eq!(run(&["no-such-command"], &[]).status.code(), Some(2));

    let bad = write_json(&tmp.path().join("bad.json"), &json!({"method": "orb"}));
    assert_eq!(
        run(&["train-orb", "-c", p(&bad)], &[]).status.code(),
        Some(2)
    );
    let cfg = orb_config(tmp.path(), &tmp.path().join("missing/manifest.json"), 0);
    let out = run(&["train-orb", "-c", p(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn patches_are_idempotent() {
    let tmp = TempDir::new().unwrap();
    let manifest = corpus(tmp.path(), 5, 0.6);
    let out_dir = tmp.path().join("patches");
    let first = ok(&[
        "patches",
        "-d",
        p(&manifest),
        "-o",
        p(&out_dir),
        "--patch-size",
        "224",
    ]);
    let index = read(&out_dir.join("index.json"));
    let mut files: Vec<_> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    let bytes: Vec<_> = files.iter().map(|f| read(f)).collect();
    let second = ok(&[
        "patches",
        "-d",
        p(&manifest),
        "-o",
        p(&out_dir),
        "--patch-size",
        "224",
    ]);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(index, read(&out_dir.join("index.json")));
    assert_eq!(bytes, files.iter().map(|f| read(f)).collect::<Vec<_>>());
    assert!(String::from_utf8_lossy(&first.stdout).contains("markush"));
}

#[test]
fn unannotated_dataset_gives_negative_patches_and_no_templates() {
    let tmp = TempDir::new().unwrap();
    let manifest = corpus(tmp.path(), 4, 0.0);
    let out_dir = tmp.path().join("patches");
    let out = ok(&["patches", "-d", p(&manifest), "-o", p(&out_dir)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains(" 0 markush"));

    let cfg = orb_config(tmp.path(), &manifest, 0);
    let out = run(&["train-orb", "-c", p(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no templates available"));
}

#[test]
fn orb_train_eval_repeat() {
    let tmp = TempDir::new().unwrap();
    let manifest = corpus(tmp.path(), 20, 0.5);
    let cfg = orb_config(tmp.path(), &manifest, 9);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["train-orb", "-c", p(&cfg), "-o", p(&a)]);
    ok(&["train-orb", "-c", p(&cfg), "-o", p(&b)]);
    assert_eq!(csv_rows(&a.join("search.csv")), 1);
    for f in ["model.json", "search.csv", "train_report.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }

    let model = a.join("model.json");
    let report = tmp.path().join("eval.json");
    let out = ok(&["eval", "-c", p(&cfg), "-m", p(&model), "-o", p(&report)]);
    let v: Value = serde_json::from_slice(&read(&report)).unwrap();
    assert!(v["macro_f1"].as_f64().is_some());
    assert_eq!(
        serde_json::from_slice::<Value>(&out.stdout).unwrap(),
        v,
        "stdout carries the report"
    );
    let patch = run(
        &["eval", "-c", p(&cfg), "-m", p(&model), "--level", "patch"],
        &[],
    );
    assert_eq!(patch.status.code(), Some(2));

    assert_eq!(
        run(&["repeat", "-c", p(&cfg), "-n", "1"], &[])
            .status
            .code(),
        Some(2)
    );
    let rep = tmp.path().join("repeat.json");
    ok(&["repeat", "-c", p(&cfg), "-n", "2", "-o", p(&rep)]);
    let v: Value = serde_json::from_slice(&read(&rep)).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);
    assert!(v["image_summary"]["margin_of_error"].as_f64().unwrap() >= 0.0);
}

#[test]
fn cnn_train_eval_plot_saliency() {
    let tmp = TempDir::new().unwrap();
    let manifest = corpus(tmp.path(), 10, 0.5);
    let cfg = cnn_config(tmp.path(), &manifest, "full_model");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["train-cnn", "-c", p(&cfg), "-o", p(&a)]);
    ok(&["train-cnn", "-c", p(&cfg), "-o", p(&b)]);
    assert_eq!(csv_rows(&a.join("trials.csv")), 2);
    assert!(csv_rows(&a.join("history.csv")) >= 1);
    for f in [
        "model.tcnn",
        "history.csv",
        "trials.csv",
        "train_report.json",
    ] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    assert_eq!(&read(&a.join("model.tcnn"))[..4], b"TCNN");

    let fc = tmp.path().join("fc");
    let out = ok(&[
        "train-cnn",
        "-c",
        p(&cfg),
        "-o",
        p(&fc),
        "--mode",
        "fc-only",
        "--trials",
        "1",
    ]);
    assert_eq!(csv_rows(&fc.join("trials.csv")), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("feature layers verified unchanged"));

    let model = a.join("model.tcnn");
    let mut curves = Vec::new();
    for level in ["patch", "image"] {
        let report = tmp.path().join(format!("{level}.json"));
        let preds = tmp.path().join(format!("{level}.csv"));
        ok(&[
            "eval",
            "-c",
            p(&cfg),
            "-m",
            p(&model),
            "--split",
            "validation",
            "--level",
            level,
            "-o",
            p(&report),
            "--predictions",
            p(&preds),
            "--roc",
            p(&tmp.path().join(format!("{level}.svg"))),
        ]);
        let v: Value = serde_json::from_slice(&read(&report)).unwrap();
        let cm = &v["cm"];
        let total: u64 = ["tp", "fn", "fp", "tn"]
            .iter()
            .map(|k| cm[k].as_u64().unwrap())
            .sum();
        assert_eq!(total as usize, csv_rows(&preds), "{level}");
        curves.push(format!("{level}={}", preds.display()));
    }
    let svg = tmp.path().join("roc.svg");
    ok(&[
        "roc-plot",
        "-c",
        &curves[0],
        "-c",
        &curves[1],
        "-o",
        p(&svg),
    ]);
    assert!(String::from_utf8(read(&svg)).unwrap().contains("<svg"));

    let patches = tmp.path().join("patches");
    ok(&["patches", "-d", p(&manifest), "-o", p(&patches)]);
    let patch = fs::read_dir(&patches)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|f| f.extension().is_some_and(|x| x == "pgm"))
        .unwrap();
    let png = tmp.path().join("sal.png");
    ok(&["saliency", "-m", p(&model), "-p", p(&patch), "-o", p(&png)]);
    assert_eq!(&read(&png)[1..4], b"PNG");
}

#[test]
fn committed_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let synth = fs::read_to_string(root.join("synth.json")).unwrap();
    markush_gate::synth::SynthConfig::from_json(&synth).unwrap();
    let mut n = 0;
    for e in fs::read_dir(root.join("experiments")).unwrap() {
        let path = e.unwrap().path();
        let cfg =
            markush_gate::pipeline::PipelineConfig::from_json(&fs::read_to_string(&path).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(
            cfg.output_dir,
            Path::new("runs").join(path.file_stem().unwrap())
        );
        n += 1;
    }
    assert_eq!(n, 7);
}
