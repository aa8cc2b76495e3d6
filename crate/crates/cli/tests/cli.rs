use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use errslice_core::io::write_tuple;
use errslice_core::model::{ExplanationMessage, ExplanationTuple, SizeMode};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/reviews200.jsonl")
}

fn errslice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_errslice"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("ERRSLICE_LLM_ENDPOINT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn pipeline_prints_table_and_writes_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = errslice(&["pipeline", "--data", fixture().to_str().unwrap(), "--q", "0.75", "--k", "4", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    let header: Vec<&str> = lines[0].split_whitespace().collect();
    assert_eq!(header, ["label", "size", "accuracy"]);
    let sizes: usize = lines[1..5]
        .iter()
        .map(|l| {
            let cols: Vec<&str> = l.split_whitespace().collect();
            assert!(cols.last().unwrap().ends_with("%)"), "{l}");
            cols[cols.len() - 3].parse::<usize>().unwrap()
        })
        .sum();
    assert_eq!(sizes, 50);
    assert!(lines[5].starts_with("overall accuracy "));
    let run_dirs: Vec<_> = fs::read_dir(tmp.path()).unwrap().collect();
    assert_eq!(run_dirs.len(), 1);
    let dir = run_dirs[0].as_ref().unwrap().path();
    for f in ["manifest.json", "clusterings.json", "tuples.json", "labels.json", "table.txt"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read_to_string(dir.join("table.txt")).unwrap(), lines[..6].join("\n") + "\n");
}

#[test]
fn pipeline_json_output() {
    let tmp = tempfile::tempdir().unwrap();
    let o = errslice(&[
        "--json", "pipeline", "--data", fixture().to_str().unwrap(), "--q", "0.9", "--subcluster",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["slice_size"], 20);
    assert!(v["run_id"].as_str().unwrap().starts_with("pipeline-"));
    assert!(v["groups"].as_array().unwrap().iter().all(|g| g["size"].as_u64().unwrap() < 25));
}

#[test]
fn rerun_into_same_store_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = fixture();
    let args = ["pipeline", "--data", data.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()];
    assert!(errslice(&args).status.success());
    assert_eq!(errslice(&args).status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let data = fixture();
    let data = data.to_str().unwrap();
    assert_eq!(errslice(&["pipeline", "--data", data, "--q", "1.0"]).status.code(), Some(2));
    assert_eq!(errslice(&["pipeline", "--data", data, "--k", "zero"]).status.code(), Some(2));
    assert_eq!(errslice(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(errslice(&["pipeline", "--data", "/nonexistent.jsonl", "--out", out]).status.code(), Some(3));
    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{\"num_classes\":2,\"embedding_dim\":1}\n{\"id\":\"a\"}\n").unwrap();
    let o = errslice(&["pipeline", "--data", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = errslice(&["pipeline", "--data", data, "--label", "remote", "--out", out]);
    assert_eq!(o.status.code(), Some(4));
    let o = errslice(&["stability", "--dist", "donut", "--ns", "16", "--trials", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

fn tuple(vectors: &[[f64; 2]]) -> ExplanationTuple {
    ExplanationTuple {
        messages: vectors
            .iter()
            .map(|w| ExplanationMessage {
                sentence_vector: w.to_vec(),
                size: 10,
                size_fraction: 0.5,
                accuracy: 0.5,
                label_text: None,
            })
            .collect(),
        source_clustering_id: "t".into(),
        size_mode: SizeMode::Count,
    }
}

#[test]
fn dmax_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    let c = tmp.path().join("c.json");
    write_tuple(&a, &tuple(&[[0.0, 0.0], [1.0, 0.0]])).unwrap();
    write_tuple(&b, &tuple(&[[0.0, 0.0], [1.0, 3.0]])).unwrap();
    write_tuple(&c, &tuple(&[[0.0, 0.0]])).unwrap();
    let o = errslice(&["dmax", "--tuple-a", a.to_str().unwrap(), "--tuple-b", a.to_str().unwrap()]);
    assert_eq!(stdout(&o).trim(), "0");
    // i = 1: j = 0 gives 1 + sqrt(10), j = 1 gives 3 + 3
    let o = errslice(&["--json", "dmax", "--tuple-a", a.to_str().unwrap(), "--tuple-b", b.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["dmax"].as_f64().unwrap() - (1.0 + 10f64.sqrt())).abs() < 1e-12);
    let o = errslice(&["dmax", "--tuple-a", a.to_str().unwrap(), "--tuple-b", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn stability_writes_csv_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = errslice(&[
        "stability", "--ns", "32,64", "--trials", "2", "--restarts", "2", "--out", tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("bound violation rate"));
    let csv = fs::read_to_string(tmp.path().join("stability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["per_n"].as_array().unwrap().len(), 2);
}
