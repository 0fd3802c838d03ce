use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use arsched::metrics::{AxisValue, RunRecord};
use arsched::{Policy, RunSummary};
use arsched_cli::{emit_plots, write_outputs, ExperimentConfig, PlotError};

fn arsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arsched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

fn manifest_files(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["files"].clone()
}

#[test]
fn reduced_sweep_writes_runs_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = arsched(&[
        "sweep", "--policies", "ff", "--seeds", "1", "--no-ci", "--jobs", "100", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    let rows: Vec<&str> = runs.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.contains(",ff,1,")));
    assert!(!out.join("sweep.csv").exists());
    assert!(!out.join("acceptance_rate.svg").exists());
    let files = manifest_files(&out);
    assert_eq!(files.as_object().unwrap().len(), 1);
}

#[test]
fn default_shape_and_rerun_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = arsched(&["sweep", "--jobs", "150", "--seeds", "3", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let sweep = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 5 * 7 * 2);
    assert!(a.join("acceptance_rate.svg").exists());
    assert!(a.join("avg_slowdown.svg").exists());

    let b = run("b");
    assert_eq!(manifest_files(&a), manifest_files(&b));
    assert_eq!(manifest_files(&a).as_object().unwrap().len(), 4);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([1, 2, 3]));
    assert_eq!(manifest["config"]["workload"]["job_count"], 150);
    assert_eq!(manifest["workload_fingerprints"].as_object().unwrap().len(), 15);
}

#[test]
fn config_file_and_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("flex");
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        format!(
            "[cluster]\nn_pes = 512\n[workload]\njob_count = 80\nu_hi = 9\n[sweep]\naxis = \"flexibility\"\n\
             flexibility = [[1, 1], [2, 3]]\npolicies = [\"pe_w\", \"ff\"]\nseeds = [7, 8]\n\
             [output]\ndir = {:?}\nplots = false\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = arsched(&["sweep", "--config", cfg.to_str().unwrap(), "--jobs", "60"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    let lines: Vec<&str> = runs.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[1].starts_with("1/1,ff,7,"));
    assert_eq!(lines[1].split(',').nth(5), Some("60"));
    assert!(lines[8].starts_with("2/3,pe_w,8,"));
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let o = arsched(&["sweep", "--policies", "ff,best", "--jobs", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.policies"));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[workload]\nu_med = 12\n").unwrap();
    let o = arsched(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("u_med"));

    let o = arsched(&["sweep", "--axis", "speed"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.axis"));
}

#[test]
fn gen_then_replay_matches_direct_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let tsv = tmp.path().join("w.tsv");
    let o = arsched(&["gen", "--jobs", "300", "--seed", "9", "--out", tsv.to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(&tsv).unwrap();
    assert!(text.starts_with("id\tt_a\tt_r\tt_du\tt_dl\tn_pe\n"));
    assert_eq!(text.lines().count(), 301);

    let direct = arsched(&["simulate", "--jobs", "300", "--seed", "9", "--policy", "pedu_b"]);
    let replay = arsched(&["simulate", "--workload", tsv.to_str().unwrap(), "--policy", "pedu_b"]);
    assert!(direct.status.success() && replay.status.success());
    assert_eq!(stdout(&direct), stdout(&replay));
    assert!(stdout(&direct).contains("acceptance_rate\t"));
}

#[test]
fn simulate_outcomes_and_calendar_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let outcomes = tmp.path().join("o.tsv");
    let o = arsched(&[
        "simulate", "--jobs", "200", "--dump-calendar", "20000", "--outcomes", outcomes.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("# calendar at t="), "{out}");
    let text = fs::read_to_string(&outcomes).unwrap();
    assert!(text.starts_with("id\taccepted\tstart\twait\tslowdown\n"));
    assert_eq!(text.lines().count(), 201);
}

#[test]
fn swf_trace_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("t.swf");
    fs::write(
        &trace,
        "; tiny trace\n1 0 5 100 64 -1 -1 64 100 -1 1 1 1 1 1 -1 -1 -1\n\
         2 30 0 50 2048 -1 -1 64 100 -1 1 1 1 1 1 -1 -1 -1\n\
         3 60 0 200 128 -1 -1 64 100 -1 1 1 1 1 1 -1 -1 -1\n",
    )
    .unwrap();
    let o = arsched(&["simulate", "--swf", trace.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("jobs\t2\n"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1 records skipped"));
}

#[test]
fn validate_command_passes() {
    let o = arsched(&["validate", "--cases", "30"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("ok\t")).count(), 8);
}

fn golden(name: &str, actual: &str) {
    let path = data("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "{name} differs from golden file");
}

#[test]
fn plots_match_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let written = emit_plots(&data("data").join("sweep_umed.csv"), tmp.path(), Some("UMed")).unwrap();
    assert_eq!(written.len(), 2);
    for path in written {
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        golden(&name, &fs::read_to_string(&path).unwrap());
    }
    // Legend lists series in canonical order regardless of CSV order.
    let svg = fs::read_to_string(tmp.path().join("acceptance_rate.svg")).unwrap();
    let pos = |p: &str| svg.find(&format!("data-policy=\"{p}\"")).unwrap();
    assert!(pos("ff") < pos("pe_w") && pos("pe_w") < pos("pedu_w"));
}

#[test]
fn plots_reject_empty_and_malformed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("sweep.csv");
    let out = tmp.path().join("plots");
    fs::create_dir(&out).unwrap();

    fs::write(&csv, "axis,policy,metric,mean,ci95\n").unwrap();
    assert!(matches!(emit_plots(&csv, &out, None), Err(PlotError::Empty)));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);

    fs::write(&csv, "axis,policy,metric,mean,ci95\n5,ff,acceptance_rate,0.5,0.1\n5,ff,avg_slowdown,x,\n").unwrap();
    match emit_plots(&csv, &out, None) {
        Err(PlotError::Malformed { row: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn failed_write_removes_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::default();
    config.output.dir = tmp.path().to_path_buf();
    // One seed per cell cannot produce intervals; runs.csv is written first.
    let records = vec![RunRecord {
        axis: AxisValue::UMed(5.0),
        policy: Policy::FirstFit,
        seed: 1,
        summary: RunSummary {
            acceptance_rate: 1.0,
            avg_slowdown: Some(1.0),
            n_jobs: 1,
            n_accepted: 1,
        },
    }];
    assert!(write_outputs(&config, &records).is_err());
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}
