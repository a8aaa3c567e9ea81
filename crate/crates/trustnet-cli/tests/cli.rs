//! End-to-end tests of the `trustnet` binary: plumbing, precedence, exit
//! codes, and determinism of reports across reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_trustnet")
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin()).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Two camps of 14: positive inside, negative across, deterministic edge
/// selection so every test sees the same file.
fn write_camps(dir: &Path) -> PathBuf {
    let mut lines = String::new();
    for s in 0..28u32 {
        for d in 0..28u32 {
            if s == d || (3 * s + 5 * d) % 4 == 0 {
                continue;
            }
            let same = (s < 14) == (d < 14);
            lines.push_str(&format!("{s} {d} {}\n", if same { 1 } else { -1 }));
        }
    }
    let path = dir.join("camps.txt");
    std::fs::write(&path, lines).unwrap();
    path
}

#[test]
fn help_lists_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--help"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    for sub in ["ingest", "stats", "preprocess", "train", "eval", "reproduce"] {
        assert!(text.contains(sub), "help should list {sub}");
    }
}

#[test]
fn ingest_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.txt"), "0 1 1\n1 2 -1\n2 0 1\n").unwrap();
    let out = run(&["ingest", "tiny.txt", "--data-dir", "."], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let row: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(row["nodes"], 3);
    assert_eq!(row["edges"], 3);
    assert_eq!(row["positive_edges"], 2);
    assert_eq!(row["negative_edges"], 1);
}

#[test]
fn stats_prints_ratio_table() {
    let dir = tempfile::tempdir().unwrap();
    // one all-positive triangle
    std::fs::write(dir.path().join("tri.txt"), "0 1 1\n1 2 1\n2 0 1\n").unwrap();
    let out = run(&["stats", "tri.txt", "--data-dir", "."], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let row: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let t = &row["triads"];
    assert_eq!(t["count_+++"], 1);
    assert_eq!(t["r_+++"], 1.0);
    assert_eq!(t["balanced_+++"], true);
    assert_eq!(t["balanced_++-"], false);
    // no mixed or negative triangles: those ratios are defaulted
    assert_eq!(t["defaulted_--"], true);
}

#[test]
fn train_eval_roundtrip_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_camps(dir.path());
    let args = [
        "train",
        "camps.txt",
        "--data-dir",
        ".",
        "--workspace",
        "ws",
        "--d",
        "8",
        "--epochs",
        "5",
        "--beta",
        "1",
        "--gamma",
        "10",
        "--seed",
        "3",
        "--out",
        "report.json",
    ];
    let first = run(&args, dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    let row: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert!(row["micro_f1"].is_f64());
    assert_eq!(row["config"]["seed"], "3");
    // --out mirrors stdout
    let mirrored = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(mirrored.trim_end(), stdout(&first).trim_end());
    // artifacts on disk
    let outs: Vec<_> = std::fs::read_dir(dir.path().join("ws/out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(outs.iter().any(|f| f.contains("embeddings")), "{outs:?}");
    assert!(outs.iter().any(|f| f.contains("checkpoint")), "{outs:?}");

    // identical invocation reproduces the report verbatim (wall time aside)
    let second = run(&args, dir.path());
    let row2: serde_json::Value = serde_json::from_str(&stdout(&second)).unwrap();
    assert_eq!(row["micro_f1"], row2["micro_f1"]);
    assert_eq!(row["macro_f1"], row2["macro_f1"]);
    assert_eq!(row["auc"], row2["auc"]);
    assert_eq!(row["final_loss"], row2["final_loss"]);

    // eval re-scores the stored embeddings to the same metrics
    let ev = run(
        &[
            "eval", "camps.txt", "--data-dir", ".", "--workspace", "ws", "--d", "8", "--beta",
            "1", "--gamma", "10", "--seed", "3",
        ],
        dir.path(),
    );
    assert!(ev.status.success(), "{}", stderr(&ev));
    let ev_row: serde_json::Value = serde_json::from_str(&stdout(&ev)).unwrap();
    assert_eq!(ev_row["micro_f1"], row["micro_f1"]);
    assert_eq!(ev_row["macro_f1"], row["macro_f1"]);
    assert_eq!(ev_row["auc"], row["auc"]);
}

#[test]
fn config_file_yields_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    write_camps(dir.path());
    std::fs::write(
        dir.path().join("run.conf"),
        "dataset = camps.txt\nseed = 5\nd = 8\nepochs = 2\nbeta = 1\ngamma = 6 # capped\n",
    )
    .unwrap();
    let out = run(
        &["train", "--config", "run.conf", "--seed", "7", "--data-dir", ".", "--workspace", "ws"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    // flag wins over file; file fills the rest
    let row: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(row["seed"], 7);
    assert_eq!(row["config"]["epochs"], "2");
    assert_eq!(row["config"]["gamma"], "6");
    // effective config is echoed at startup
    let log = stderr(&out);
    assert!(log.contains("effective config:"), "{log}");
    assert!(log.contains("seed = 7"), "{log}");
}

#[test]
fn preprocess_is_idempotent_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    write_camps(dir.path());
    let args =
        ["preprocess", "camps.txt", "--data-dir", ".", "--workspace", "ws", "--beta", "1"];
    let first = run(&args, dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    let row: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
    for (label, outcome) in row["artifacts"].as_object().unwrap() {
        assert_eq!(outcome, "Created", "{label}");
    }
    let again = run(&args, dir.path());
    let row2: serde_json::Value = serde_json::from_str(&stdout(&again)).unwrap();
    for (label, outcome) in row2["artifacts"].as_object().unwrap() {
        assert_eq!(outcome, "Unchanged", "{label}");
    }
}

#[test]
fn errors_map_to_exit_categories() {
    let dir = tempfile::tempdir().unwrap();
    write_camps(dir.path());
    // empty test split → evaluation error
    let out = run(
        &["train", "camps.txt", "--data-dir", ".", "--x", "100", "--d", "4", "--epochs", "1",
          "--beta", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(7), "{}", stderr(&out));

    // unreadable dataset → invalid argument
    let out = run(&["ingest", "missing.txt", "--data-dir", "."], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    // unknown config key → invalid argument
    std::fs::write(dir.path().join("bad.conf"), "dataset = camps.txt\nwidgets = 9\n").unwrap();
    let out = run(&["train", "--config", "bad.conf", "--data-dir", "."], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    // malformed config line → parse error
    std::fs::write(dir.path().join("noeq.conf"), "just words\n").unwrap();
    let out = run(&["stats", "--config", "noeq.conf", "--data-dir", "."], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    // eval before train → invalid argument with guidance
    let out = run(
        &["eval", "camps.txt", "--data-dir", ".", "--workspace", "fresh", "--beta", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("trustnet train"), "{}", stderr(&out));
}

#[test]
fn reproduce_grid_reports_cells_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    write_camps(dir.path());
    let out = run(
        &["reproduce", "--datasets", "camps.txt,absent.txt", "--seeds", "0,1", "--data-dir", "."],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("camps.txt"), "{table}");
    // the missing dataset's failures are listed per seed, grid continues
    assert!(table.contains("seed 0 failed"), "{table}");
    assert!(table.contains("seed 1 failed"), "{table}");
}
