//! End-to-end tests of the installed binary: process exit codes, report
//! files on disk, environment/flag precedence, and cross-command flows.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

/// A command for the compiled binary with any ambient `MIGSIM_*` settings
/// scrubbed, so each test controls exactly what the process sees.
fn migsim() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_migsim"));
    for (key, _) in std::env::vars_os() {
        if key.to_string_lossy().starts_with("MIGSIM_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes an 8x8 two-entries-per-row matrix the tests multiply.
fn write_small_matrix(dir: &Path) -> PathBuf {
    let mut text = String::from("%%MatrixMarket matrix coordinate real general\n8 8 16\n");
    for r in 0..8usize {
        text.push_str(&format!("{} {} {}\n", r + 1, r + 1, 1.0 + r as f64 * 0.5));
        text.push_str(&format!("{} {} {}\n", r + 1, (r + 3) % 8 + 1, 0.25));
    }
    let path = dir.join("m.mtx");
    fs::write(&path, text).unwrap();
    path
}

fn record_json(out_dir: &Path, stem: &str) -> Value {
    let text = fs::read_to_string(out_dir.join(format!("{stem}.record.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// One run must leave exactly the advertised files behind and summarize
/// itself on stdout.
#[test]
fn run_writes_the_three_reports_and_prints_a_summary() {
    let dir = TempDir::new().unwrap();
    let matrix = write_small_matrix(dir.path());
    let out_dir = dir.path().join("results");

    let out = migsim()
        .args(["run", "--matrix"])
        .arg(&matrix)
        .args(["--nodelets", "4", "--threads", "2", "--trials", "2", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let stem = "m_none_block_block_row_n4_t2";
    for suffix in ["record.json", "summary.csv", "occupancy.csv"] {
        let path = out_dir.join(format!("{stem}.{suffix}"));
        assert!(path.exists(), "missing {}", path.display());
    }
    let text = stdout(&out);
    assert_eq!(text.matches("wrote ").count(), 3, "stdout: {text}");
    assert!(text.contains("8 rows, 16 nnz"), "stdout: {text}");

    let record = record_json(&out_dir, stem);
    assert_eq!(record["num_rows"], 8);
    assert_eq!(record["trials"], 2);
    assert_eq!(record["reorder"], "none");
}

/// Two identical invocations must produce byte-identical CSVs and records
/// that differ only in their timestamps.
#[test]
fn reruns_are_byte_identical_apart_from_the_timestamp() {
    let dir = TempDir::new().unwrap();
    let matrix = write_small_matrix(dir.path());

    let run = |out_dir: &Path| {
        let out = migsim()
            .args(["run", "--matrix"])
            .arg(&matrix)
            .args(["--nodelets", "2", "--threads", "2", "--trials", "3", "--out"])
            .arg(out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    };
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    run(&first);
    run(&second);

    let stem = "m_none_block_block_row_n2_t2";
    for suffix in ["summary.csv", "occupancy.csv"] {
        let a = fs::read(first.join(format!("{stem}.{suffix}"))).unwrap();
        let b = fs::read(second.join(format!("{stem}.{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix} differs between reruns");
    }
    let mut a = record_json(&first, stem);
    let mut b = record_json(&second, stem);
    a.as_object_mut().unwrap().remove("timestamp");
    b.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(a, b, "records differ beyond the timestamp");
}

/// Forgetting the matrix source is a runtime error: exit code 1 and a
/// diagnostic naming both ways to supply one.
#[test]
fn missing_matrix_source_is_reported_on_stderr() {
    let out = migsim().arg("run").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = stderr(&out);
    assert!(text.contains("no matrix source"), "stderr: {text}");
    assert!(text.contains("--rmat"), "stderr: {text}");
}

/// A bad value for a validated flag is a usage error: clap's exit code 2
/// and a message listing the accepted names.
#[test]
fn unknown_layout_name_is_a_usage_error() {
    let out = migsim()
        .args(["run", "--matrix", "m.mtx", "--x-layout", "diagonal"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cyclic or block"), "stderr: {}", stderr(&out));
}

/// Settings layer as documented: an environment variable beats the default,
/// and the flag beats the environment variable.
#[test]
fn a_flag_overrides_the_matching_environment_variable() {
    let dir = TempDir::new().unwrap();
    let matrix = write_small_matrix(dir.path());

    let out_env = dir.path().join("env");
    let out = migsim()
        .env("MIGSIM_NODELETS", "2")
        .args(["run", "--matrix"])
        .arg(&matrix)
        .args(["--threads", "2", "--trials", "1", "--out"])
        .arg(&out_env)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let record = record_json(&out_env, "m_none_block_block_row_n2_t2");
    assert_eq!(record["sim_config"]["nodelets"], 2, "environment beats default");

    let out_flag = dir.path().join("flag");
    let out = migsim()
        .env("MIGSIM_NODELETS", "2")
        .args(["run", "--matrix"])
        .arg(&matrix)
        .args(["--nodelets", "4", "--threads", "2", "--trials", "1", "--out"])
        .arg(&out_flag)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let record = record_json(&out_flag, "m_none_block_block_row_n4_t2");
    assert_eq!(record["sim_config"]["nodelets"], 4, "flag beats environment");
}

/// A permutation written by `perm` must feed straight back into a run via
/// `--reorder file:PATH` and show up in the record's reorder label.
#[test]
fn generated_permutation_file_feeds_a_reordered_run() {
    let dir = TempDir::new().unwrap();
    let matrix = write_small_matrix(dir.path());
    let perm = dir.path().join("rows.perm");

    let out = migsim()
        .args(["perm", "--kind", "random:7", "--size", "8", "--out"])
        .arg(&perm)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("8 rows"));

    let out_dir = dir.path().join("results");
    let out = migsim()
        .args(["run", "--matrix"])
        .arg(&matrix)
        .arg("--reorder")
        .arg(format!("file:{}", perm.display()))
        .args(["--nodelets", "2", "--threads", "2", "--trials", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let record_path = fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(Result::ok)
        .map(|e| e.path())
        .find(|p| p.to_string_lossy().ends_with(".record.json"))
        .expect("a record was written");
    let record: Value =
        serde_json::from_str(&fs::read_to_string(record_path).unwrap()).unwrap();
    let label = record["reorder"].as_str().unwrap();
    assert!(label.starts_with("file:"), "reorder label: {label}");
}

/// A sweep produces one combined CSV with a row per crossed setting and
/// names each run on stdout.
#[test]
fn sweep_crosses_axes_into_one_combined_csv() {
    let dir = TempDir::new().unwrap();
    let matrix = write_small_matrix(dir.path());
    let out_dir = dir.path().join("results");

    let out = migsim()
        .args(["sweep", "--matrix"])
        .arg(&matrix)
        .args(["--reorders", "none,bfs:0", "--dists", "row,nnz"])
        .args(["--nodelets", "2", "--threads", "2", "--trials", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let sweep = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5, "header plus four crossed runs:\n{sweep}");
    assert!(
        sweep.lines().next().unwrap().starts_with("schema_version,matrix,reorder"),
        "header:\n{sweep}"
    );
    let text = stdout(&out);
    assert!(text.contains("bfs:0") && text.contains("nnz"), "stdout: {text}");
}
