//! End-to-end runs of the `socioscope` binary on a small generated data set.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_socioscope"))
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Writes a small synthetic data set under `root/data` and returns its directory.
fn synth(root: &Path) -> PathBuf {
    let spec = root.join("spec.json");
    fs::write(
        &spec,
        r#"{"n_users": 1500, "tx_per_user": 12, "homophily_strength": 0.8}"#,
    )
    .unwrap();
    let data = root.join("data");
    run(bin().args(["synth", "--spec"]).arg(&spec).arg("--out").arg(&data));
    data
}

fn config(root: &Path, data: &Path, extra: &str) -> PathBuf {
    let path = root.join("run.toml");
    let text = format!(
        "events = {:?}\ntransactions = {:?}\ndemographics = {:?}\noutput = {:?}\n\
         ensemble_size = 5\nmin_purchases = 20\nsupport_min = 50\nkmeans_max = 8\n\
         gap_references = 5\nkmeans_restarts = 3\nremoval_repeats = 2\n{extra}",
        data.join("events.csv"),
        data.join("transactions.csv"),
        data.join("demographics.csv"),
        root.join("out"),
    );
    fs::write(&path, text).unwrap();
    path
}

fn statuses(out: &Path) -> Vec<(String, String)> {
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    m["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| {
            (
                s["name"].as_str().unwrap().to_string(),
                s["status"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

fn report_json(out: &Path) -> Value {
    let o = run(bin().arg("report").arg(out).arg("--json"));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn second_run_reuses_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let cfg = config(tmp.path(), &data, "");
    run(bin().args(["run", "--config"]).arg(&cfg));
    assert!(statuses(&tmp.path().join("out")).iter().all(|(_, s)| s == "ran"));
    run(bin().args(["run", "--config"]).arg(&cfg));
    for (name, s) in statuses(&tmp.path().join("out")) {
        assert_eq!(s, "cached", "stage {name}");
    }
}

#[test]
fn ensemble_change_reruns_only_null_dependent_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let cfg = config(tmp.path(), &data, "");
    run(bin().args(["run", "--config"]).arg(&cfg));
    run(bin().args(["run", "--ensemble", "6", "--config"]).arg(&cfg));
    for (name, s) in statuses(&tmp.path().join("out")) {
        let want = if name == "nullmodel" || name == "dynamics" {
            "ran"
        } else {
            "cached"
        };
        assert_eq!(s, want, "stage {name}");
    }
}

#[test]
fn missing_transactions_file_is_named_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    fs::remove_file(data.join("transactions.csv")).unwrap();
    let cfg = config(tmp.path(), &data, "");
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("missing input file") && err.contains("transactions.csv"),
        "stderr: {err}"
    );
    assert!(!tmp.path().join("out").join("manifest.json").exists());
}

#[test]
fn full_run_reports_all_six_stages_and_the_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let cfg = config(tmp.path(), &data, "");
    let o = run(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--oracle")
        .arg(data.join("ground_truth.json")));
    let text = String::from_utf8_lossy(&o.stdout);
    for section in [
        "[ingest]",
        "[classes]",
        "[spending]",
        "[nullmodel]",
        "[catnet]",
        "[dynamics]",
        "[oracle]",
    ] {
        assert!(text.contains(section), "missing {section} in\n{text}");
    }
    let r = report_json(&tmp.path().join("out"));
    assert_eq!(r["partial"], Value::Bool(false));
    for key in [
        "ingest",
        "classes",
        "spending",
        "nullmodel",
        "catnet",
        "dynamics",
        "oracle",
    ] {
        assert!(!r[key].is_null(), "report lacks {key}");
    }
    assert_eq!(r["stages"].as_array().unwrap().len(), 6);
    let printed = run(bin().arg("report").arg(tmp.path().join("out")));
    assert!(String::from_utf8_lossy(&printed.stdout).contains("[oracle]"));
}

#[test]
fn skipping_the_null_model_drops_ratio_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let cfg = config(tmp.path(), &data, "skip_nullmodel = true\n");
    let o = run(bin().args(["run", "--config"]).arg(&cfg));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        !text.contains("[nullmodel]") && !text.contains("L_SV") && !text.contains("Lambda_"),
        "{text}"
    );
    let st = statuses(&tmp.path().join("out"));
    assert!(st.contains(&("nullmodel".to_string(), "skipped".to_string())));
    let r = report_json(&tmp.path().join("out"));
    assert!(r["nullmodel"].is_null());
    assert!(!r["dynamics"].is_null());
}

#[test]
fn stage_commands_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let work = tmp.path().join("work");
    run(bin()
        .arg("ingest")
        .arg("--events")
        .arg(data.join("events.csv"))
        .arg("--transactions")
        .arg(data.join("transactions.csv"))
        .arg("--demographics")
        .arg(data.join("demographics.csv"))
        .arg("--out")
        .arg(&work));
    let profiles = work.join("profiles.jsonl");
    let partition = work.join("partition.csv");
    let o = run(bin()
        .arg("classes")
        .arg("--input")
        .arg(&profiles)
        .arg("--out")
        .arg(&partition));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Gini"));
    assert!(fs::read_to_string(&partition).unwrap().lines().count() > 1);
    run(bin()
        .arg("spending")
        .arg("--profiles")
        .arg(&profiles)
        .arg("--partition")
        .arg(&partition)
        .arg("--out-matrices")
        .arg(work.join("m")));
    assert!(work.join("m").join("d_sv.csv").is_file());
    run(bin()
        .arg("nullmodel")
        .arg("--graph")
        .arg(work.join("graph.csv"))
        .arg("--profiles")
        .arg(&profiles)
        .arg("--partition")
        .arg(&partition)
        .args(["--ensemble", "3", "--out"])
        .arg(work.join("null")));
    assert!(work.join("null").join("L.csv").is_file());
    let o = run(bin()
        .arg("dynamics")
        .arg("--profiles")
        .arg(&profiles)
        .arg("--partition")
        .arg(&partition));
    let csv = String::from_utf8_lossy(&o.stdout);
    assert!(csv.lines().count() >= 10, "{csv}");
}
