use std::path::Path;
use std::process::{Command, Output};

use crs_core::synth::{seeded_corpus, training_seed};
use crs_core::Engine;
use serde_json::Value;

fn crs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crs"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn analyze_marked() {
    let o = crs(&["analyze", "--text", "you idiot", "--marked"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("you ⟦idiot|Personal⟧\n"), "{out}");
    assert!(out.contains("Suggestions:"));
    assert!(out.contains("[mask] you [MASK]"));
}

#[test]
fn analyze_json_matches_library() {
    let text = "Stop pushing this sh!t, you a$$hole";
    let o = crs(&["analyze", "--text", text, "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let cli: Value = serde_json::from_slice(&o.stdout).unwrap();
    let lib = serde_json::to_value(Engine::builtin().unwrap().analyze(text).unwrap()).unwrap();
    assert_eq!(cli, lib);
}

#[test]
fn analyze_empty_is_clean() {
    let o = crs(&["analyze", "--text", ""]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "clean");
}

#[test]
fn analyze_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_crs"))
        .args(["analyze", "--stdin", "--mode", "strict"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child
        .stdin
        .take()
        .unwrap()
        .write_all("you idiot".as_bytes())
        .unwrap();
    let o = child.wait_with_output().unwrap();
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mode"], "strict");
    assert_eq!(v["matches"][0]["surface"], "idiot");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(
        crs(&["analyze", "--text", "x", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(crs(&["analyze"]).status.code(), Some(1));
    assert_eq!(crs(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        crs(&["analyze", "--text", "x", "--mode", "loose"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(crs(&["--help"]).status.code(), Some(0));
}

#[test]
fn scan_seeded_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = seeded_corpus(1_000, 10, 0.7, 4);
    let input = dir.path().join("dump.jsonl");
    let lines: String = corpus
        .records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    std::fs::write(&input, format!("{lines}not json\n")).unwrap();
    let (stats, off) = (dir.path().join("stats.json"), dir.path().join("off.jsonl"));
    let o = crs(&[
        "scan",
        "--input",
        p(&input),
        "--mode",
        "strict",
        "--fraction",
        "1.0",
        "--out-stats",
        p(&stats),
        "--out-offensive",
        p(&off),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(s["total"], 1_000);
    assert_eq!(s["offensive"], 10);
    assert_eq!(s["skipped"], 1);
    assert_eq!(s["rate"], 1.0);
    let ids: std::collections::BTreeSet<String> = std::fs::read_to_string(&off)
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(ids, corpus.offensive_ids);
    assert!(stdout(&o).lines().next().unwrap().starts_with("platform"));

    let o = crs(&[
        "scan",
        "--input",
        p(&input),
        "--fraction",
        "0.5",
        "--seed",
        "1",
        "--from",
        "2021-11-01",
        "--to",
        "2021-11-30",
        "--out-stats",
        p(&stats),
        "--out-offensive",
        p(&off),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    let total = s["total"].as_u64().unwrap();
    assert!(total > 300 && total < 700, "{total}");
}

#[test]
fn scan_missing_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = crs(&[
        "scan",
        "--input",
        "/nonexistent.jsonl",
        "--out-stats",
        p(&dir.path().join("s")),
        "--out-offensive",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_toy_corpus_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let off = dir.path().join("off.txt");
    let clean = dir.path().join("clean.txt");
    std::fs::write(&off, "you idiot, fix the build\n").unwrap();
    std::fs::write(&clean, "please fix the failing build\n").unwrap();
    let out = dir.path().join("m.json");
    let o = crs(&[
        "train",
        "--offensive",
        p(&off),
        "--clean",
        p(&clean),
        "--out",
        p(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    assert!(
        text.contains("4 examples (1 offensive / 3 non-offensive)"),
        "{text}"
    );
    assert!(text.contains("final training loss:"), "{text}");
}

#[test]
fn train_eval_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let (offensive, clean) = training_seed(60, 3);
    let off = dir.path().join("off.jsonl");
    let cl = dir.path().join("clean.txt");
    std::fs::write(
        &off,
        offensive
            .iter()
            .map(|d| serde_json::json!({"text": d.text, "classes": d.classes}).to_string() + "\n")
            .collect::<String>(),
    )
    .unwrap();
    std::fs::write(&cl, clean.join("\n")).unwrap();
    let (m, ml) = (dir.path().join("m.json"), dir.path().join("ml.json"));
    for (out, extra) in [(&m, None), (&ml, Some("--multilabel"))] {
        let mut args = vec![
            "train",
            "--offensive",
            p(&off),
            "--clean",
            p(&cl),
            "--out",
            p(out),
            "--seed",
            "7",
        ];
        args.extend(extra);
        let o = crs(&args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }

    let data = dir.path().join("data.jsonl");
    let mut lines = String::new();
    for d in &offensive {
        lines += &(serde_json::to_string(d).unwrap() + "\n");
    }
    for c in &clean {
        lines += &(serde_json::json!({"text": c, "label": false}).to_string() + "\n");
    }
    std::fs::write(&data, lines).unwrap();
    let o = crs(&["eval", "--model", p(&m), "--data", p(&data)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["accuracy"], 1.0, "{v}");

    let o = crs(&[
        "analyze",
        "--text",
        "you idiot",
        "--model",
        p(&m),
        "--multilabel-model",
        p(&ml),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "offensive");

    let o = crs(&[
        "analyze",
        "--text",
        "x",
        "--model",
        p(&ml),
        "--multilabel-model",
        p(&m),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn kappa_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    std::fs::write(
        &a,
        "{\"id\":\"1\",\"labels\":[\"Personal\"]}\n{\"id\":\"2\",\"labels\":[]}\n",
    )
    .unwrap();
    let o = crs(&["kappa", "--a", p(&a), "--b", p(&a)]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kappa"], 1.0);
    assert!(stdout(&o).contains("\"kappa\": 1.0"));

    let o = crs(&["kappa", "--a", p(&a), "--b", "/nonexistent.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn augment_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(
        &input,
        "please fix the failing build quickly\nthe test is broken\n",
    )
    .unwrap();
    let run = |seed: &str| {
        stdout(&crs(&[
            "augment",
            "--in",
            p(&input),
            "--k",
            "2",
            "--seed",
            seed,
        ]))
    };
    let a = run("5");
    assert_eq!(a, run("5"));
    assert_eq!(a.lines().count(), 2);
    assert_ne!(
        a.lines().next().unwrap(),
        "please fix the failing build quickly"
    );
}

#[test]
fn paraphrase_command() {
    let o = crs(&["paraphrase", "--text", "you idiot"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["suggestions"].as_array().unwrap().len(), 3);
    assert_eq!(
        crs(&["paraphrase", "--text", "all good"]).status.code(),
        Some(2)
    );
}

#[test]
fn serve_fails_fast_on_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("crs.toml");
    std::fs::write(
        &cfg,
        "addr = \"127.0.0.1:0\"\n[artifacts]\nruleset = \"/nonexistent/rules.json\"\n",
    )
    .unwrap();
    let o = crs(&["serve", "--config", p(&cfg)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ruleset artifact"));
}
