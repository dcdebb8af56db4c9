use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use riarit_core::exercise::Catalog;
use riarit_core::session::{Session, SessionEvent};
use riarit_core::Scenario;

fn riarit() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_riarit"));
    cmd.env_remove("RIARIT_SCENARIO").env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    riarit().args(args).output().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("exp.json");
    std::fs::write(
        &path,
        r#"{
  "population": "builtin:q",
  "teacher": "riarit",
  "n_students": 30,
  "n_steps": 25,
  "n_runs": 2,
  "seed": 1
}
"#,
    )
    .unwrap();
    path
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if path.is_dir() {
            out.extend(files(&path).into_iter().map(|(n, b)| (format!("{name}/{n}"), b)));
        } else if name != "run_manifest.json" {
            out.push((name, std::fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_deterministic_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let outs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("out{i}"))).collect();
    for (out, workers) in outs.iter().zip(["1", "1", "3"]) {
        let o = run(&["simulate", "--config", cfg, "--seed", "7", "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("run_manifest.json").is_file());
    }
    let a = files(&outs[0]);
    assert!(a.iter().any(|(n, _)| n == "trace.csv"));
    assert_eq!(a, files(&outs[1]));
    assert_eq!(a, files(&outs[2]));

    let other = dir.path().join("other");
    run(&["simulate", "--config", cfg, "--seed", "8", "--out", other.to_str().unwrap()]);
    assert_ne!(a, files(&other));
}

#[test]
fn one_student_one_step_gives_one_trace_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["simulate", "--students", "1", "--steps", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn both_teachers_give_one_comparison_row_per_kc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--both", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let kcs = Scenario::default_scenario().kc_count();
    assert_eq!(cmp.lines().count(), kcs + 1);
    assert!(cmp.lines().next().unwrap().starts_with("metric,kc,"));
    assert!(out.join("riarit").join("trace.csv").is_file());
    assert!(out.join("predefined").join("trace.csv").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).contains("riarit - predefined"));
}

#[test]
fn validate_accepts_shipped_files() {
    let o = run(&["validate"]);
    assert!(o.status.success());
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let o = run(&["validate", "--config", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
    }
}

fn broken_scenario(dir: &Path, from: &str, to: &str) -> PathBuf {
    let text = Scenario::default_json();
    assert!(text.contains(from));
    let path = dir.join("scenario.json");
    std::fs::write(&path, text.replacen(from, to, 1)).unwrap();
    path
}

#[test]
fn validate_names_an_out_of_range_q_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = broken_scenario(
        dir.path(),
        r#""ExerciseType": [0.7, 0.7, 0.7, 1.0, 1.0, 1.0]"#,
        r#""ExerciseType": [0.7, 0.7, 1.2, 1.0, 1.0, 1.0]"#,
    );
    let o = run(&["validate", "--scenario", path.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("KnowMoney") && err.contains("ExerciseType") && err.contains("1.2"), "{err}");
    assert!(err.contains("line "), "{err}");
}

#[test]
fn validate_rejects_a_constrained_first_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = broken_scenario(
        dir.path(),
        r#""value": "2", "requires""#,
        r#""value": "1", "requires""#,
    );
    let o = riarit()
        .args(["validate"])
        .env("RIARIT_SCENARIO", &path)
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("must stay unconstrained"));
}

#[test]
fn config_syntax_errors_carry_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"population\": \"builtin:q\",\n  \"teacher\": riarit\n}\n").unwrap();
    let o = run(&["simulate", "--config", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn unknown_teacher_flag_is_rejected() {
    let o = run(&["simulate", "--teacher", "oracle"]);
    assert!(!o.status.success());
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    let status = resp[9..12].parse().unwrap();
    let body = resp.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
    }
}

fn start_server(port: u16, data: &Path, extra: &[&str]) -> Server {
    let child = riarit()
        .args(["serve", "--port", &port.to_string(), "--data-dir", data.to_str().unwrap()])
        .args(extra)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let server = Server(child);
    let deadline = Instant::now() + Duration::from_secs(20);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    server
}

#[cfg(unix)]
#[test]
fn serve_survives_sigterm_during_an_open_round() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let mut server = start_server(port, dir.path(), &["--teacher", "predefined"]);

    let (status, body) = http(port, "GET", "/api/health", "");
    assert_eq!(status, 200);
    assert!(body.contains("money-game"));

    let (status, body) = http(port, "POST", "/api/sessions", r#"{"seed": 4}"#);
    assert_eq!(status, 201, "{body}");
    let created: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(created["teacher"], "predefined");
    let id = created["session_id"].as_str().unwrap().to_string();
    let (status, _) = http(port, "GET", &format!("/api/sessions/{id}/next"), "");
    assert_eq!(status, 200);
    let (status, _) = http(port, "POST", &format!("/api/sessions/{id}/answer"), r#"{"items": [], "trial": 1}"#);
    assert_eq!(status, 200);

    let kill = Command::new("kill")
        .args(["-TERM", &server.0.id().to_string()])
        .status()
        .unwrap();
    assert!(kill.success());
    let exit = server.0.wait().unwrap();
    assert!(exit.success(), "{exit:?}");

    let log = std::fs::read_to_string(dir.path().join("sessions").join(&id).join("events.jsonl")).unwrap();
    assert!(log.ends_with('\n'));
    let events: Vec<SessionEvent> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.len(), 3);
    let session = Session::replay(
        Arc::new(Scenario::default_scenario()),
        Arc::new(Catalog::default_catalog()),
        &events,
    )
    .unwrap();
    assert!(session.current().is_some());

    // The restarted server picks the open round back up.
    let port = free_port();
    let _server = start_server(port, dir.path(), &[]);
    let (status, body) = http(port, "POST", &format!("/api/sessions/{id}/answer"), r#"{"items": [], "trial": 2}"#);
    assert_eq!(status, 200, "{body}");
}
