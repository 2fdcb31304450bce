use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY_BEAM: &str = r#"
problem = "beam"
label = "tiny"

[network]
hidden_width = 6
hidden_layers = 2

[collocation]
total = 200

[train]
epochs = 2
batch_size = 40

[eval]
grid_resolution = 5

[warm_start]
total = 260
epochs = 1
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_elastic-pinn"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_every_artifact_into_a_new_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "beam.toml", TINY_BEAM);
    let out = tmp.path().join("nested/out");
    let o = run(&["run", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["points.csv", "loss_history.csv", "fields.csv", "errors.csv", "report.json", "checkpoint.ckpt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let fields = fs::read_to_string(out.join("fields.csv")).unwrap();
    let header: Vec<&str> = fields.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 2 + 3 * 8);
    assert_eq!(header[2], "u_x");
    assert_eq!(header[10], "u_x_exact");
    assert_eq!(header[18], "u_x_abs_error");
    assert_eq!(fields.lines().count(), 1 + 25);
    // Two recorded epochs plus the final evaluation.
    assert_eq!(fs::read_to_string(out.join("loss_history.csv")).unwrap().lines().count(), 1 + 3);
    assert_eq!(fs::read_to_string(out.join("points.csv")).unwrap().lines().count(), 1 + 200);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["train"]["beta2"], 0.999);
    assert_eq!(report["config"]["beam"]["length"], 3.0);
    assert_eq!(report["field_errors"].as_array().unwrap().len(), 8);
    // No temporary files are left behind.
    assert_eq!(fs::read_dir(&out).unwrap().count(), 6);
}

#[test]
fn unknown_key_exits_2_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &TINY_BEAM.replace("batch_size = 40", "batch_sise = 40"));
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 14") && err.contains("batch_sise"), "{err}");
    assert!(!out.exists());
}

#[test]
fn invalid_value_is_reported_at_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &TINY_BEAM.replace("batch_size = 40", "batch_size = 400"));
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 14"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn deterministic_runs_are_byte_identical_and_the_report_reproduces_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "beam.toml", TINY_BEAM);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run(&["run", "--config", s(&cfg), "--out-dir", s(dir), "--deterministic", "--seed", "7"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let history = |d: &Path| fs::read(d.join("loss_history.csv")).unwrap();
    assert_eq!(history(&a), history(&b));
    assert_eq!(fs::read(a.join("checkpoint.ckpt")).unwrap(), fs::read(b.join("checkpoint.ckpt")).unwrap());

    // The echoed configuration alone reproduces the run.
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    let mut echoed = report["config"].clone();
    let c = tmp.path().join("c");
    echoed["out_dir"] = serde_json::Value::String(s(&c).to_string());
    let text = toml::to_string(&echoed).unwrap();
    let cfg2 = write_config(tmp.path(), "echo.toml", &text);
    let o = run(&["run", "--config", s(&cfg2)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(history(&a), history(&c));
}

#[test]
fn numeric_abort_exits_3_and_keeps_the_last_finite_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "hot.toml",
        &TINY_BEAM.replace("batch_size = 40", "batch_size = 40\nlearning_rate = 1e300"),
    );
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
    assert!(out.join("checkpoint.ckpt").is_file());
    assert!(!out.join("report.json").exists());
}

#[test]
fn eval_and_warm_start_use_a_saved_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "beam.toml", TINY_BEAM);
    let first = tmp.path().join("first");
    assert!(run(&["run", "--config", s(&cfg), "--out-dir", s(&first)]).status.success());
    let ckpt = first.join("checkpoint.ckpt");

    let ev = tmp.path().join("eval");
    let o = run(&["eval", "--config", s(&cfg), "--out-dir", s(&ev), "--checkpoint", s(&ckpt)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(ev.join("errors.csv")).unwrap(), fs::read(first.join("errors.csv")).unwrap());

    let ws = tmp.path().join("warm");
    let o = run(&["warm-start", "--config", s(&cfg), "--out-dir", s(&ws), "--checkpoint", s(&ckpt)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(ws.join("points.csv")).unwrap().lines().count(), 1 + 260);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(ws.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "warm-start");

    let wide = write_config(tmp.path(), "wide.toml", &TINY_BEAM.replace("hidden_width = 6", "hidden_width = 7"));
    let o = run(&["warm-start", "--config", s(&wide), "--out-dir", s(&tmp.path().join("x")), "--checkpoint", s(&ckpt)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_raw_and_median_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "beam.toml", &TINY_BEAM.replace("epochs = 2", "epochs = 1"));
    let out = tmp.path().join("sweep");
    let o = run(&[
        "sweep",
        "--config",
        s(&cfg),
        "--out-dir",
        s(&out),
        "--axis",
        "activation",
        "--values",
        "tanh,sigmoid",
        "--seeds",
        "1,2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 1 + 2 * 3, "{summary}");
    assert_eq!(rows[0].split(',').count(), 3 + 8 + 2);
    assert!(rows[3].starts_with("tanh,median,ok (2 of 2)"), "{}", rows[3]);
    assert!(out.join("tiny-sigmoid-s2/report.json").is_file());
}

#[test]
fn sweep_records_failed_runs_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "beam.toml", &TINY_BEAM.replace("epochs = 2", "epochs = 1"));
    let out = tmp.path().join("sweep");
    let o = run(&["sweep", "--config", s(&cfg), "--out-dir", s(&out), "--axis", "architecture", "--values", "0x2,6x1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0x2,0,configuration error"), "{}", rows[1]);
    assert!(rows[2].starts_with("6x1,0,ok"), "{}", rows[2]);
}

#[test]
fn verify_oracle_passes_defaults_and_catches_a_wrong_rigidity() {
    let o = run(&["verify-oracle", "--problem", "plate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("navier biharmonic") && !stdout.contains("FAIL"), "{stdout}");
    assert!(run(&["verify-oracle", "--problem", "beam"]).status.success());

    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "plate.toml", "problem = \"plate\"\n[plate]\nrigidity = 18136.57\n");
    let o = run(&["verify-oracle", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["beam.toml", "plate.toml"] {
        let o = run(&["verify-oracle", "--config", s(&dir.join(name))]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}
