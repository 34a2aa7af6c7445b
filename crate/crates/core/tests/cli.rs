//! The command-line surface and its exit codes.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

fn brokered() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brokered"))
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn bad_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let broken = write(dir.path(), "broken.json", "{ not json");
    let unknown = write(dir.path(), "unknown.json", r#"{"scenario": "convergence", "bogus": 1}"#);
    for cfg in [&broken, &unknown, &dir.path().join("missing.json")] {
        let status = brokered()
            .args(["experiment", "run", "--config"])
            .arg(cfg)
            .arg("--out")
            .arg(dir.path().join("out"))
            .stderr(Stdio::null())
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(2), "{}", cfg.display());
    }
    let status = brokered().args(["experiment", "run"]).stderr(Stdio::null()).status().unwrap();
    assert_eq!(status.code(), Some(2), "missing arguments");
}

#[test]
fn unreachable_broker_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", "1,2,0\n3,4,1\n");
    // bind then drop to get a port nothing listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = write(
        dir.path(),
        "client.json",
        &format!(
            r#"{{"broker_addr": "127.0.0.1:{port}", "model_id": "m", "data_csv": "{}", "connect_retries": 1, "retry_ms": 1}}"#,
            data.display()
        ),
    );
    let status = brokered().args(["client", "run", "--config"]).arg(&cfg).stderr(Stdio::null()).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn experiment_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.json",
        r#"{
            "scenario": "convergence",
            "dataset": {"synthetic": {"d": 5, "n": 1000, "separation": 6.0}},
            "max_iterations": 200,
            "groups": [{"role": "honest", "count": 2}],
            "seed": 3
        }"#,
    );
    let out = dir.path().join("out");
    let output = brokered().args(["experiment", "run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for f in ["metrics.csv", "summary.json", "model.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(summary["iterations"], 200);
    let disk: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, disk);
}

#[test]
fn figures_writes_one_csv_per_figure() {
    let dir = tempfile::tempdir().unwrap();
    let status = brokered()
        .args(["experiment", "figures", "--seeds", "1", "--out"])
        .arg(dir.path())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["convergence", "scaling", "inversion", "bystanders", "poisoning", "threshold", "false_positives"] {
        let text = std::fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        assert!(text.starts_with("series,x,seed,value\n"), "{name}");
        assert!(text.lines().count() > 1, "{name} is empty");
    }
}

#[test]
fn broker_and_client_processes_train_together() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::new();
    for i in 0..400 {
        let y = i % 2;
        let x = if y == 1 { 2.0 } else { -2.0 } + ((i * 37 % 17) as f64 - 8.0) / 10.0;
        rows.push_str(&format!("{x},{},{y}\n", (i % 7) as f64 / 7.0));
    }
    let data = write(dir.path(), "data.csv", &rows);
    let out = dir.path().join("broker_out");
    let broker_cfg = write(
        dir.path(),
        "broker.json",
        &format!(
            r#"{{"listen": "127.0.0.1:0", "broker": {{"admission_difficulty": 2}}, "grace_ms": 300,
                "task": {{"model_id": "m", "min_clients": 2, "max_clients": 2, "max_iterations": 100, "validation_csv": "{}"}},
                "out": "{}"}}"#,
            data.display(),
            out.display()
        ),
    );
    let mut broker = brokered()
        .args(["broker", "serve", "--config"])
        .arg(&broker_cfg)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(broker.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_owned();

    let clients: Vec<_> = (0..2)
        .map(|i| {
            let cfg = write(
                dir.path(),
                &format!("client{i}.json"),
                &format!(r#"{{"broker_addr": "{addr}", "model_id": "m", "data_csv": "{}", "k": 2, "seed": {i}}}"#, data.display()),
            );
            brokered().args(["client", "run", "--config"]).arg(cfg).stdout(Stdio::piped()).spawn().unwrap()
        })
        .collect();
    for c in clients {
        let output = c.wait_with_output().unwrap();
        assert!(output.status.success());
        let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
        assert_eq!(report["outcome"], "complete");
    }
    let output = broker.wait_with_output().unwrap();
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["iteration"], 100);
    assert!(out.join("model.json").is_file());
    std::io::stdout().flush().unwrap();
}
