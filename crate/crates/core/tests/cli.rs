use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pbnco::cli::run_from;

const TINY: &[&str] = &[
    "--set", "episodes=3", "--set", "layers=1", "--set", "d_model=8", "--set", "heads=2",
    "--set", "d_ff=16", "--set", "n_min=8", "--set", "n_max=10", "--set", "batch_instances=1",
    "--set", "population=2", "--set", "candidates=2", "--set", "validate_every=3",
    "--set", "validation_instances=1",
];

fn run(args: &[&str]) -> pbnco::Result<()> {
    run_from(std::iter::once("pbnco").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_instances(dir: &Path, n: &str, p: &str, count: &str) -> PathBuf {
    let out = dir.join("inst");
    run(&["gen", "--family", "er", "--nodes", n, "--p", p, "--count", count, "--out", s(&out)]).unwrap();
    out
}

fn train(dir: &Path, kind: &str, problem: &str) -> PathBuf {
    let out = dir.join(format!("{kind}-{problem}"));
    let mut args = vec!["train", kind, "--problem", problem, "--out", s(&out)];
    args.extend_from_slice(TINY);
    run(&args).unwrap();
    out
}

#[test]
fn gen_writes_named_instances() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instances(dir.path(), "9", "0.4", "3");
    let names = pbnco::cli::list_instances(&inst).unwrap();
    assert_eq!(names.len(), 3);
    assert_eq!(names[0].0, "er-n9-p0.4-s0");
    let rb = dir.path().join("rb");
    run(&["gen", "--family", "rb", "--groups", "4", "--group-size", "3", "--out", s(&rb)]).unwrap();
    let g = pbnco::graphs::GraphInstance::parse(&fs::read(rb.join("rb-g4x3-s0.graph")).unwrap()).unwrap();
    assert_eq!(g.node_count(), 12);
}

#[test]
fn oracle_bounds_greedy_and_summary_has_mean_row() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instances(dir.path(), "10", "0.3", "4");
    let refs = dir.path().join("opt.csv");
    run(&["oracle", "--instances", s(&inst), "--problem", "mis", "--out", s(&refs)]).unwrap();
    let out = dir.path().join("greedy");
    run(&[
        "solve", "--instances", s(&inst), "--problem", "mis", "--mode", "greedy", "--reference", s(&refs),
        "--out", s(&out),
    ])
    .unwrap();
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "instance,objective,reference,ratio,runtime_seconds");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("mean,"));
    for l in &lines[1..5] {
        let f: Vec<&str> = l.split(',').collect();
        let ratio: f64 = f[3].parse().unwrap();
        assert!(ratio > 0.0 && ratio <= 1.0, "{l}");
        assert_eq!(f[4], "", "no timing under a step budget");
    }
    assert!(out.join("traces/er-n10-p0.3-s2.csv").exists());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["instances"].as_array().unwrap().len(), 4);
}

#[test]
fn train_and_solve_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cni = train(dir.path(), "cni", "mc");
    let cnc = train(dir.path(), "cnc", "mc");
    for f in ["policy.ckpt", "metrics.jsonl", "manifest.json"] {
        assert!(cnc.join(f).exists(), "{f}");
    }
    let again = dir.path().join("again");
    let mut args = vec!["train", "cnc", "--out", s(&again)];
    args.extend_from_slice(TINY);
    run(&args).unwrap();
    assert_eq!(fs::read(cnc.join("policy.ckpt")).unwrap(), fs::read(again.join("policy.ckpt")).unwrap());
    assert_eq!(fs::read(cnc.join("metrics.jsonl")).unwrap(), fs::read(again.join("metrics.jsonl")).unwrap());
    assert_eq!(fs::read_to_string(cnc.join("metrics.jsonl")).unwrap().lines().count(), 3);

    let inst = gen_instances(dir.path(), "10", "0.3", "2");
    let cni_ckpt = cni.join("policy.ckpt");
    let cnc_ckpt = cnc.join("policy.ckpt");
    let solve = |out: &Path, workers: &str| {
        run(&[
            "solve", "--instances", s(&inst), "--cni", s(&cni_ckpt), "--cnc", s(&cnc_ckpt), "--budget-steps", "6",
            "--set", "population=3", "--set", "patience=2", "--seed", "4", "--workers", workers, "--out", s(out),
        ])
        .unwrap();
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    solve(&a, "1");
    solve(&b, "2");
    for f in ["summary.csv", "traces/er-n10-p0.3-s0.csv", "traces/er-n10-p0.3-s1.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let trace = fs::read_to_string(a.join("traces/er-n10-p0.3-s0.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 7);

    for mode in ["cni_only", "level1_mem", "random_restarts", "cnc_pop", "cnc_greedy", "ga", "pso", "random_walk"] {
        let out = dir.path().join(mode);
        run(&[
            "solve", "--instances", s(&inst), "--mode", mode, "--cni", s(&cni_ckpt), "--cnc", s(&cnc_ckpt),
            "--budget-steps", "4", "--out", s(&out),
        ])
        .unwrap_or_else(|e| panic!("{mode}: {e}"));
    }
}

#[test]
fn diversity_and_pareto_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cnc = train(dir.path(), "cnc", "mc").join("policy.ckpt");
    let inst = gen_instances(dir.path(), "10", "0.3", "2");
    let div = dir.path().join("div.csv");
    run(&[
        "diversity", "--instances", s(&inst), "--cnc", s(&cnc), "--omega", "0.1,0.9", "--unconditioned",
        "--initial", "3", "--generated", "4", "--out", s(&div),
    ])
    .unwrap();
    let text = fs::read_to_string(&div).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 7);
    assert!(text.contains(",unconditioned,6,"));
    let par = dir.path().join("pareto.csv");
    run(&["pareto", "--instances", s(&inst), "--cnc", s(&cnc), "--k", "3", "--out", s(&par)]).unwrap();
    assert_eq!(fs::read_to_string(&par).unwrap().lines().count(), 6);
}

#[test]
fn errors_are_actionable() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instances(dir.path(), "8", "0.3", "1");
    let out = dir.path().join("x");
    let e = run(&["solve", "--instances", s(&inst), "--out", s(&out)]).unwrap_err().to_string();
    assert!(e.contains("--cni"), "{e}");
    let e = run(&["solve", "--instances", s(&inst), "--mode", "greedy", "--set", "popsize=3", "--out", s(&out)])
        .unwrap_err()
        .to_string();
    assert!(e.contains("popsize"), "{e}");
    let e = run(&["solve", "--instances", s(&inst), "--mode", "ga", "--budget-seconds", "0", "--out", s(&out)])
        .unwrap_err()
        .to_string();
    assert!(e.contains("budget"), "{e}");
    let cni = train(dir.path(), "cni", "mc").join("policy.ckpt");
    let e = run(&["solve", "--instances", s(&inst), "--mode", "cni_only", "--cni", s(&cni), "--problem", "mis", "--out", s(&out)])
        .unwrap_err()
        .to_string();
    assert!(e.contains("policy.ckpt"), "{e}");
    assert!(run(&["solve", "--mode", "annealing", "--instances", s(&inst), "--out", s(&out)]).is_err());

    let status = Command::new(env!("CARGO_BIN_EXE_pbnco"))
        .args(["solve", "--instances", "/nonexistent", "--mode", "greedy", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(!status.success());
    let ok = Command::new(env!("CARGO_BIN_EXE_pbnco")).args(["solve", "--print-defaults"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8(ok.stdout).unwrap().contains("ga_population = 20"));
}
