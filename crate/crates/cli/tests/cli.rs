use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn stcausal(out: &Path, threads: usize, args: &[&str]) -> Run {
    let Output { status, stdout, stderr } = Command::new(env!("CARGO_BIN_EXE_stcausal"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("STCAUSAL_THREADS", threads.to_string())
        .output()
        .unwrap();
    Run {
        code: status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

fn ok(out: &Path, threads: usize, args: &[&str]) -> Run {
    let r = stcausal(out, threads, args);
    assert_eq!(r.code, 0, "stcausal {args:?}: {}", r.stderr);
    r
}

/// Synthesizes inputs under `out/input` and ingests them. Returns the input dir.
fn ingested(out: &Path, threads: usize, extra: &[&str]) -> std::path::PathBuf {
    let input = out.join("input");
    let r = ok(&input, threads, &["synth-data", "--days", "90", "-s", "noise_sensors=2"]);
    let grid = r.stdout.lines().find_map(|l| l.strip_prefix("grid = ")).unwrap().replace(' ', "");
    let p = |f: &str| input.join(f).display().to_string();
    let mut args = vec!["ingest", "--aq"];
    let (aq, meta, meteo, grid) = (p("aq.csv"), p("meta.csv"), p("meteo.csv"), format!("grid={grid}"));
    args.extend([aq.as_str(), "--meta", meta.as_str(), "--meteo", meteo.as_str(), "-s", grid.as_str()]);
    args.extend(extra);
    ok(out, threads, &args);
    input
}

fn contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = stcausal(dir.path(), 1, &["mine"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("dataset.json"), "{}", r.stderr);
}

#[test]
fn unknown_setting_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let r = stcausal(dir.path(), 1, &["mine", "-s", "colour=red"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("colour"));
}

#[test]
fn empty_database_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let input = ingested(dir.path(), 1, &[]);
    let aq = std::fs::read_to_string(input.join("aq.csv")).unwrap();
    std::fs::write(input.join("aq.csv"), format!("{}\n", aq.lines().next().unwrap())).unwrap();
    let p = |f: &str| input.join(f).display().to_string();
    ok(dir.path(), 1, &["ingest", "--aq", &p("aq.csv"), "--meta", &p("meta.csv")]);
    let r = stcausal(dir.path(), 1, &["mine"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn training_without_candidates_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    ingested(dir.path(), 1, &[]);
    ok(dir.path(), 1, &["mine"]);
    let r = stcausal(dir.path(), 1, &["train", "--target", "PM25@T"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("candidates"), "{}", r.stderr);
}

#[test]
fn empty_test_window_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    ingested(dir.path(), 1, &[]);
    for cmd in ["mine", "candidates"] {
        ok(dir.path(), 1, &[cmd]);
    }
    ok(dir.path(), 1, &["train", "--target", "PM25@T"]);
    let r = stcausal(dir.path(), 1, &["evaluate", "--target", "PM25@T", "-s", "test_days=0"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn no_confounders_gives_single_cluster_models() {
    let dir = tempfile::tempdir().unwrap();
    ingested(dir.path(), 1, &[]);
    for cmd in ["mine", "candidates"] {
        ok(dir.path(), 1, &[cmd]);
    }
    ok(dir.path(), 1, &["train", "--no-confounders"]);
    let models = std::fs::read_dir(dir.path().join("models")).unwrap().count();
    assert!(models > 0);
    for e in std::fs::read_dir(dir.path().join("models")).unwrap() {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(e.unwrap().path()).unwrap()).unwrap();
        assert_eq!(v["k"], 1);
        assert_eq!(v["clusters"].as_array().unwrap().len(), 1);
    }
}

#[test]
fn trained_target_finds_its_causer() {
    let dir = tempfile::tempdir().unwrap();
    ingested(dir.path(), 1, &[]);
    for cmd in ["mine", "candidates"] {
        ok(dir.path(), 1, &[cmd]);
    }
    ok(dir.path(), 1, &["train", "--target", "PM25@T"]);
    ok(dir.path(), 1, &["evaluate", "--target", "PM25@T"]);
    ok(dir.path(), 1, &["pathway", "--root", "PM25@T", "--hops", "1"]);
    let dot = std::fs::read_to_string(dir.path().join("pathway.dot")).unwrap();
    assert!(dot.contains("\"PM25@C\" -> \"PM25@T\""), "{dot}");
    let csv = std::fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
    assert!(csv.starts_with("target,season,rows,accuracy"));
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let runs: Vec<_> = [1, 4]
        .into_iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            ingested(dir.path(), threads, &[]);
            for cmd in ["mine", "candidates", "train", "evaluate"] {
                ok(dir.path(), threads, &[cmd]);
            }
            let files = contents(dir.path());
            (dir, files)
        })
        .collect();
    assert!(runs[0].1.contains_key("accuracy.csv"));
    assert_eq!(runs[0].1, runs[1].1);
}
