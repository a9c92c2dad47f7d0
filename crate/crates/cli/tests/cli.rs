use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use einconv_core::graph::{make_named, ConvGeometry, NamedKind};
use einconv_core::search::{Objectives, SearchState};

fn einconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_einconv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = einconv(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fashion-mnist-subset")
}

fn field<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}\t")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
}

fn assert_header(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let first = text.lines().next().unwrap_or("");
    assert!(
        first.starts_with(&format!("# einconv {} ", env!("CARGO_PKG_VERSION"))),
        "{}: {first}",
        path.display()
    );
}

fn error_json(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(err.lines().last().unwrap_or("")).unwrap_or_else(|_| panic!("stderr not JSON: {err}"))
}

#[test]
fn analyze_standard_counts() {
    let out = ok(&["analyze", "--named", "standard", "--geometry", "32x32,3x3,64,64"]);
    assert_eq!(field(&out, "params"), "36864");
    assert_eq!(field(&out, "flops"), (2u64 * 3 * 3 * 64 * 32 * 32 * 64).to_string());
    assert_eq!(field(&out, "redundant"), "false");
    assert_eq!(field(&out, "canonical_hash").len(), 16);
}

#[test]
fn analyze_redundant_graph_prints_trace() {
    let dir = tempfile::tempdir().unwrap();
    let geom = ConvGeometry::same(&[8, 8], &[3, 3], 4, 4);
    let g = make_named(NamedKind::Cp, &geom, &[("Gamma".to_string(), 1)].into_iter().collect()).unwrap();
    let path = dir.path().join("g.json");
    fs::write(&path, g.to_json()).unwrap();
    let out = ok(&["analyze", "--graph", p(&path)]);
    assert_eq!(field(&out, "redundant"), "true");
    assert!(out.lines().filter(|l| l.starts_with("step\t")).count() >= 1);

    let reduced = dir.path().join("r.json");
    ok(&["reduce", "--graph", p(&path), "--out", p(&reduced)]);
    assert_header(&reduced);
    let again = ok(&["analyze", "--graph", p(&reduced)]);
    assert_eq!(field(&again, "redundant"), "false");
    assert_eq!(field(&again, "canonical_hash"), field(&out, "reduced_hash"));
}

#[test]
fn analyze_rejects_bad_geometry() {
    let o = einconv(&["analyze", "--named", "standard", "--geometry", "8x8,4x4,2,2"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["exit_code"], 2);
}

#[test]
fn enumerate_pointwise_is_single_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "enumerate",
        "--dims",
        "2",
        "--filter",
        "1x1",
        "--max-rank-indices",
        "0",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.trim(), "1");
    assert_header(&dir.path().join("graphs.jsonl"));
    assert_header(&dir.path().join("summary.csv"));
}

#[test]
fn enumerate_files_agree_with_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "--jobs",
        "2",
        "enumerate",
        "--dims",
        "2",
        "--filter",
        "3x3",
        "--max-rank-indices",
        "1",
        "--out",
        p(dir.path()),
    ]);
    let n: usize = out.trim().parse().unwrap();
    let jsonl = fs::read_to_string(dir.path().join("graphs.jsonl")).unwrap();
    let graphs: Vec<&str> = jsonl.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(graphs.len(), n);
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), n);
    let mut hashes: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    hashes.sort();
    hashes.dedup();
    assert_eq!(hashes.len(), n);
    // the low-rank layer at rank 2 is among them
    let geom = ConvGeometry::same(&[16, 16], &[3, 3], 16, 16);
    let lr = make_named(NamedKind::LowRank, &geom, &[("R".to_string(), 2)].into_iter().collect()).unwrap();
    assert!(hashes.contains(&einconv_core::graph::canonical_hash(&lr).as_str()));
}

#[test]
fn enumerate_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = einconv(&["enumerate", "--dims", "2", "--cap", "10", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "cap_exceeded");
}

fn history_rows(dir: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.join("history.csv")).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("epoch,loss,train_acc,test_acc,seconds"));
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn train_separable_reaches_full_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["train", "--net", "separable", "--epochs", "50", "--lr", "0.01", "--out", p(dir.path())]);
    assert_header(&dir.path().join("history.csv"));
    let rows = history_rows(dir.path());
    assert_eq!(rows.len(), 50);
    assert_eq!(rows.last().unwrap()[2].parse::<f64>().unwrap(), 1.0);
    let net = einconv_core::train::Network::<f64>::load(&dir.path().join("checkpoint")).unwrap();
    assert_eq!(net.classes(), 2);
}

#[test]
fn train_zero_epochs_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["train", "--net", "separable", "--epochs", "0", "--out", p(dir.path())]);
    assert!(history_rows(dir.path()).is_empty());
}

#[test]
fn train_reads_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "optimizer = \"momentum-sgd\"\nlearning_rate = 0.05\nepochs = 3\nbatch_size = 8\n").unwrap();
    ok(&["train", "--net", "separable", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(history_rows(dir.path()).len(), 3);

    fs::write(&cfg, "epochs = \"three\"\n").unwrap();
    let o = einconv(&["train", "--net", "separable", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_missing_data_is_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let o = einconv(&["train", "--net", "lenet-mini", "--data", p(&missing), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"], "io");
    assert!(e["message"].as_str().unwrap().contains("nope"));
}

#[test]
fn train_divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = einconv(&[
        "train", "--net", "separable", "--epochs", "3", "--lr", "1e300", "--optimizer", "sgd", "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_json(&o)["error"], "divergence");
}

#[test]
fn train_lenet_mini_on_subset() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "train",
        "--net",
        "lenet-mini",
        "--layer",
        "cp",
        "--ranks",
        "Gamma=4",
        "--data",
        p(&data_dir()),
        "--epochs",
        "1",
        "--out",
        p(dir.path()),
    ]);
    let rows = history_rows(dir.path());
    assert_eq!(rows.len(), 1);
    assert!(!rows[0][3].is_empty(), "test accuracy recorded");
}

fn surrogate_search(dir: &Path, generations: &str) -> String {
    ok(&[
        "search",
        "--surrogate",
        "--pop",
        "12",
        "--generations",
        generations,
        "--seed",
        "5",
        "--out",
        p(dir),
    ])
}

fn archive_rows(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("archive.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(String::from)
        .collect()
}

fn state(dir: &Path) -> SearchState {
    serde_json::from_str(&fs::read_to_string(dir.join("state.json")).unwrap()).unwrap()
}

#[test]
fn search_zero_generations_is_initial_population() {
    let dir = tempfile::tempdir().unwrap();
    surrogate_search(dir.path(), "0");
    let s = state(dir.path());
    assert_eq!(s.archive.len(), 12);
    assert!(s.archive.iter().all(|i| i.generation == 0));
    assert_eq!(archive_rows(dir.path()).len(), 12);
    assert_header(&dir.path().join("archive.csv"));
    assert_header(&dir.path().join("front.jsonl"));
}

#[test]
fn search_is_reproducible_and_resumable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    surrogate_search(a.path(), "4");
    surrogate_search(b.path(), "2");
    surrogate_search(b.path(), "4");
    assert_eq!(archive_rows(a.path()), archive_rows(b.path()));
    let (sa, sb) = (state(a.path()), state(b.path()));
    assert_eq!(sa.archive, sb.archive);
    assert_eq!(sa.population, sb.population);
    assert_eq!(sa.generation, sb.generation);
}

#[test]
fn search_front_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    surrogate_search(dir.path(), "3");
    let s = state(dir.path());
    let objs: Vec<Objectives> = s.archive.iter().map(|i| i.objectives).collect();
    let brute: Vec<String> = (0..objs.len())
        .filter(|&k| !objs.iter().any(|o| o.dominates(&objs[k])))
        .map(|k| s.archive[k].hash.clone())
        .collect();
    let front_text = fs::read_to_string(dir.path().join("front.jsonl")).unwrap();
    let front: Vec<String> = front_text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["canonical_hash"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(front, brute);
}

#[test]
fn search_with_training_objective() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "search",
        "--pop",
        "4",
        "--generations",
        "1",
        "--data",
        p(&data_dir()),
        "--train-subset",
        "40",
        "--valid-subset",
        "40",
        "--out",
        p(dir.path()),
    ]);
    let s = state(dir.path());
    assert!(s.archive.len() >= 4);
    assert!(s.archive.iter().all(|i| (0.0..=1.0).contains(&i.objectives.accuracy)));
}

fn write_archive(dir: &Path, rows: &[(u64, f64)]) -> PathBuf {
    let mut text = String::from("# test archive\ncanonical_hash,params,flops,accuracy,generation,front_rank\n");
    for (k, (params, acc)) in rows.iter().enumerate() {
        text.push_str(&format!("h{k},{params},0,{acc},0,1\n"));
    }
    let path = dir.join("archive.csv");
    fs::write(&path, text).unwrap();
    path
}

fn pareto_rows(out: &str) -> Vec<String> {
    out.lines().filter(|l| !l.starts_with('#')).skip(1).map(String::from).collect()
}

#[test]
fn pareto_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_archive(dir.path(), &[(100, 0.9), (50, 0.8), (200, 0.7)]);
    let rows = pareto_rows(&ok(&["pareto", "--archive", p(&path)]));
    assert_eq!(rows, vec!["h1,50,0,0.8,0,1", "h0,100,0,0.9,0,1"]);

    let out = dir.path().join("out");
    ok(&["pareto", "--archive", p(&path), "--out", p(&out)]);
    assert_header(&out.join("pareto.tsv"));
    let tsv = fs::read_to_string(out.join("pareto.tsv")).unwrap();
    let data: Vec<&str> = tsv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data, vec!["50\t0.8", "100\t0.9"]);
}

#[test]
fn pareto_single_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_archive(dir.path(), &[(10, 0.5)]);
    assert_eq!(pareto_rows(&ok(&["pareto", "--archive", p(&path)])), vec!["h0,10,0,0.5,0,1"]);
    let path = write_archive(dir.path(), &[]);
    assert!(pareto_rows(&ok(&["pareto", "--archive", p(&path)])).is_empty());
}

#[test]
fn pareto_reads_search_archive() {
    let dir = tempfile::tempdir().unwrap();
    surrogate_search(dir.path(), "2");
    let out = ok(&["pareto", "--archive", p(&dir.path().join("archive.csv"))]);
    assert_eq!(pareto_rows(&out).len(), state(dir.path()).front().len());
}
