use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn recfuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recfuse"))
        .current_dir(dir)
        .env_remove("RECFUSE_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = recfuse(dir, args);
    assert!(
        out.status.success(),
        "recfuse {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn json(p: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&read(p)).unwrap()
}

/// A small benchmark in `dir/b`, returning the directory.
fn small_bench(dir: &Path, clusters: usize) -> PathBuf {
    ok(
        dir,
        &[
            "bench",
            "--out",
            "b",
            "--seed",
            "5",
            "--set",
            &format!("benchmark.clusters={clusters}"),
            "--set",
            "benchmark.clusters_per_key=5",
        ],
    );
    dir.join("b")
}

const FAST: [&str; 4] = ["--stages", "1", "--epochs", "20"];

#[test]
fn ingest_summarizes_a_valid_file() {
    let t = TempDir::new().unwrap();
    std::fs::write(
        t.path().join("d.csv"),
        "__cluster_id,Name,City\na,Acme,Oslo\na,Acme,Bergen\nb,Bolt,Oslo\nc,Core,Rome\nc,Core,Rome\n",
    )
    .unwrap();
    let out = ok(t.path(), &["ingest", "--data", "d.csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("clusters     3"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("City") && l.trim_end().ends_with('2')));
}

#[test]
fn ingest_reports_bad_row_line() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("d.csv"), "__cluster_id,Name,City\na,Acme,Oslo\nb,Bolt\n").unwrap();
    let out = recfuse(t.path(), &["ingest", "--data", "d.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains('3'), "line number missing: {err}");
}

#[test]
fn ingest_rejects_labels_for_unknown_cluster() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("d.csv"), "__cluster_id,Name\na,Acme\n").unwrap();
    std::fs::write(t.path().join("l.csv"), "cluster_id,attribute,value\nzz,Name,Acme\n").unwrap();
    let out = recfuse(t.path(), &["ingest", "--data", "d.csv", "--labels", "l.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("zz"));
}

#[test]
fn ingest_rejects_truth_outside_candidates() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("d.csv"), "__cluster_id,Name\na,Acme\na,Acme Inc\n").unwrap();
    std::fs::write(t.path().join("l.csv"), "cluster_id,attribute,value\na,Name,ACME\n").unwrap();
    let out = recfuse(t.path(), &["ingest", "--data", "d.csv", "--labels", "l.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("`a`") && err.contains("Name"), "{err}");
}

#[test]
fn single_attribute_zero_stages_gives_one_stage_model() {
    let t = TempDir::new().unwrap();
    std::fs::write(
        t.path().join("d.csv"),
        "__cluster_id,City\na,Oslo\na,Oslo\na,0slo\nb,Rome\nb,Roma\n",
    )
    .unwrap();
    std::fs::write(t.path().join("l.csv"), "cluster_id,attribute,value\na,City,Oslo\n").unwrap();
    ok(
        t.path(),
        &["train", "--data", "d.csv", "--labels", "l.csv", "--out", "m", "--stages", "0", "--epochs", "5"],
    );
    let files: Vec<_> = std::fs::read_dir(t.path().join("m"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|f| f.starts_with("attr-"))
        .collect();
    assert_eq!(files, vec!["attr-000.json"]);
    let m = json(t.path().join("m/attr-000.json"));
    assert_eq!(m["stages"].as_array().unwrap().len(), 1);
}

#[test]
fn training_twice_is_byte_identical() {
    let t = TempDir::new().unwrap();
    let b = small_bench(t.path(), 40);
    let args = |out: &'static str| -> Vec<String> {
        let mut v: Vec<String> = ["train", "--data", "b/data.csv", "--labels", "b/truth.csv", "--out", out]
            .map(String::from)
            .to_vec();
        v.extend(["--constraints".into(), b.join("constraints.txt").display().to_string()]);
        v.extend(FAST.map(String::from));
        v
    };
    for out in ["m1", "m2"] {
        let a = args(out);
        ok(t.path(), &a.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let names: Vec<_> = std::fs::read_dir(t.path().join("m1"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert!(names.len() >= 7);
    for n in names {
        let a = std::fs::read(t.path().join("m1").join(&n)).unwrap();
        let b = std::fs::read(t.path().join("m2").join(&n)).unwrap();
        if n == "manifest.json" {
            // Output directory differs by design; the hashes of the model files must not.
            let (ma, mb) = (json(t.path().join("m1/manifest.json")), json(t.path().join("m2/manifest.json")));
            assert_eq!(ma["outputs"], mb["outputs"]);
            continue;
        }
        assert_eq!(a, b, "{n:?} differs");
    }
}

#[test]
fn disabled_model_is_recorded_and_shrinks_features() {
    let t = TempDir::new().unwrap();
    small_bench(t.path(), 30);
    let base = ["train", "--data", "b/data.csv", "--labels", "b/truth.csv"];
    ok(t.path(), &[&base[..], &["--out", "full"], &FAST[..]].concat());
    ok(
        t.path(),
        &[&base[..], &["--out", "nocooc", "--disable", "co-occurrence"], &FAST[..]].concat(),
    );
    let man = json(t.path().join("nocooc/manifest.json"));
    assert_eq!(man["config"]["features"]["cooccurrence"], false);
    let b_full = json(t.path().join("full/attr-001.json"))["b"].as_u64().unwrap();
    let b_cut = json(t.path().join("nocooc/attr-001.json"))["b"].as_u64().unwrap();
    // c − 1 = 4 co-occurrence coordinates disappear.
    assert_eq!(b_full - b_cut, 4);
}

#[test]
fn fuse_unanimous_dataset_returns_input() {
    let t = TempDir::new().unwrap();
    std::fs::write(
        t.path().join("d.csv"),
        "__cluster_id,Name,City\na,Acme,Oslo\na,Acme,Oslo\nb,Bolt,Rome\nc,Core,Lima\nc,Core,Lima\n",
    )
    .unwrap();
    std::fs::write(t.path().join("l.csv"), "cluster_id,attribute,value\na,Name,Acme\na,City,Oslo\n").unwrap();
    ok(t.path(), &["train", "--data", "d.csv", "--labels", "l.csv", "--out", "m", "--stages", "1", "--epochs", "5"]);
    ok(t.path(), &["fuse", "--model", "m", "--data", "d.csv", "--out", "f", "--no-confidence"]);
    assert_eq!(
        read(t.path().join("f/fused.csv")),
        "__cluster_id,Name,City\na,Acme,Oslo\nb,Bolt,Rome\nc,Core,Lima\n"
    );
}

#[test]
fn fused_values_come_from_candidate_sets() {
    let t = TempDir::new().unwrap();
    small_bench(t.path(), 40);
    ok(
        t.path(),
        &[&["train", "--data", "b/data.csv", "--labels", "b/truth.csv", "--out", "m"][..], &FAST[..]].concat(),
    );
    ok(t.path(), &["fuse", "--model", "m", "--data", "b/data.csv", "--out", "f"]);
    let data = read(t.path().join("b/data.csv"));
    let claimed: HashSet<(String, usize, String)> = data
        .lines()
        .skip(1)
        .flat_map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            (1..cells.len()).map(move |j| (cells[0].to_string(), j, cells[j].to_string())).collect::<Vec<_>>()
        })
        .collect();
    let fused = read(t.path().join("f/fused.csv"));
    let mut lines = fused.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[2], "Zip__confidence");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 40);
    for l in rows {
        let cells: Vec<&str> = l.split(',').collect();
        for j in 1..=5 {
            let v = cells[2 * j - 1];
            assert!(claimed.contains(&(cells[0].to_string(), j, v.to_string())), "{v} not claimed in {}", cells[0]);
            let conf: f64 = cells[2 * j].parse().unwrap();
            assert!((0.0..=1.0).contains(&conf));
        }
    }
}

#[test]
fn augment_emits_ten_percent_aug_clusters() {
    let t = TempDir::new().unwrap();
    small_bench(t.path(), 50);
    ok(t.path(), &["augment", "--data", "b/data.csv", "--labels", "b/truth.csv", "--out", "a", "--ratio", "0.1"]);
    let rows = read(t.path().join("a/augmented.csv"));
    let ids: HashSet<&str> = rows.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 5);
    assert!(ids.iter().all(|id| id.starts_with("aug_")));
    assert!(rows.starts_with("__cluster_id,Zip,City"));
    let labels = read(t.path().join("a/augmented_labels.csv"));
    assert_eq!(labels.lines().count(), 1 + 5 * 5);
}

#[test]
fn evaluate_one_seed_gives_one_line_and_is_reproducible() {
    let t = TempDir::new().unwrap();
    small_bench(t.path(), 60);
    let run = |out: &str| {
        ok(
            t.path(),
            &[
                &[
                    "evaluate", "--data", "b/data.csv", "--labels", "b/truth.csv", "--constraints",
                    "b/constraints.txt", "--out", out, "--seeds", "1",
                ][..],
                &["--set", "experiment.train_fraction=0.2"][..],
                &FAST[..],
            ]
            .concat(),
        );
    };
    run("e1");
    run("e2");
    let r1 = read(t.path().join("e1/report.jsonl"));
    assert_eq!(r1.lines().count(), 1);
    let rec: serde_json::Value = serde_json::from_str(r1.trim()).unwrap();
    assert!(rec["baselines"]["majority-vote"].is_f64());
    assert_eq!(r1, read(t.path().join("e2/report.jsonl")));
    assert_eq!(read(t.path().join("e1/report.txt")), read(t.path().join("e2/report.txt")));
}

#[test]
fn evaluate_ablate_lists_every_model_with_delta() {
    let t = TempDir::new().unwrap();
    small_bench(t.path(), 40);
    ok(
        t.path(),
        &[
            &[
                "evaluate", "--data", "b/data.csv", "--labels", "b/truth.csv", "--constraints",
                "b/constraints.txt", "--out", "e", "--seeds", "2", "--ablate", "--ratio", "0",
            ][..],
            &["--set", "experiment.train_fraction=0.25"][..],
            &FAST[..],
        ]
        .concat(),
    );
    let table = read(t.path().join("e/report.txt"));
    assert!(table.lines().next().unwrap().contains("delta"));
    for m in ["-format", "-running-value", "-attr-embedding", "-co-occurrence", "-vote", "-neighborhood", "-constraints"] {
        assert!(table.lines().any(|l| l.starts_with(m)), "{m} missing:\n{table}");
    }
    // No sources in this benchmark, so the source model is not ablated.
    assert!(!table.contains("-source"));
    assert_eq!(read(t.path().join("e/report.jsonl")).lines().count(), 2 * 8);
}

#[test]
fn env_seed_overrides_config_and_flag_overrides_env() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("c.toml"), "seed = 1\n[benchmark]\nclusters = 16\nclusters_per_key = 4\n").unwrap();
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_recfuse"));
        cmd.current_dir(t.path()).env_remove("RECFUSE_SEED");
        if let Some(v) = env {
            cmd.env("RECFUSE_SEED", v);
        }
        let out = cmd.args(["bench", "-c", "c.toml", "--out", "o"]).args(extra).output().unwrap();
        assert!(out.status.success());
        json(t.path().join("o/manifest.json"))["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, &[]), 1);
    assert_eq!(run(Some("7"), &[]), 7);
    assert_eq!(run(Some("7"), &["--seed", "9"]), 9);
}

#[test]
fn usage_and_config_errors_exit_nonzero() {
    let t = TempDir::new().unwrap();
    assert_eq!(recfuse(t.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(recfuse(t.path(), &["train", "--disable", "nonsense"]).status.code(), Some(2));
    std::fs::write(t.path().join("c.toml"), "[train]\nstagez = 3\n").unwrap();
    let out = recfuse(t.path(), &["bench", "-c", "c.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("stagez"));
    let out = recfuse(t.path(), &["train", "--out", "m"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}
