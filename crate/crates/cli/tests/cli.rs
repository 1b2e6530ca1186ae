use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_outlying"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Three timesteps of a 7x7 lattice plus one far instance at the middle step.
fn write_dataset(dir: &Path) -> PathBuf {
    let mut csv = String::from("instance,time,x,y\n");
    for t in 0..3 {
        for k in 0..49 {
            let (x, y) = (10.0 + (k % 7) as f64, 20.0 + (k / 7) as f64 + 0.1 * t as f64);
            csv.push_str(&format!("p{k:02},{},{x},{y}\n", 2000 + t));
        }
    }
    csv.push_str("far,2001,40,45\n");
    let path = dir.join("data.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn compute_is_byte_identical_across_runs_and_workers() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(dir.path());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let first = run(&["compute", "--input", s(&input), "--output", s(&a), "--workers", "1"]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let second = run(&["compute", "--input", s(&input), "--output", s(&b), "--workers", "3"]);
    assert_eq!(code(&second), 0);
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let doc: serde_json::Value = serde_json::from_slice(&ta).unwrap();
    assert_eq!(doc["timesteps"].as_array().unwrap().len(), 3);
    assert!(doc["timings"].is_null());
    assert_eq!(doc["config"]["bin_max"], 250);
}

#[test]
fn compute_writes_results_to_stdout_and_logs_to_stderr() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(dir.path());
    let out = bin()
        .args(["compute", "--input", s(&input), "--timings", "--workers", "2"])
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["timings"]["workers"], 2);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("worker pool size"), "{log}");
}

#[test]
fn missing_input_exits_with_io_code() {
    let out = run(&["compute", "--input", "/nonexistent/data.csv", "--output", "/tmp/unused.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/data.csv"));
    assert!(out.stdout.is_empty());
}

#[test]
fn duplicate_rows_exit_with_validation_code_naming_the_pair() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("dup.csv");
    std::fs::write(&input, "instance,time,x,y\nA,1,0,0\nB,1,1,1\nC,1,2,0\nA,1,5,5\n").unwrap();
    let out = run(&["compute", "--input", s(&input)]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`A`") && err.contains("`1`"), "{err}");
}

#[test]
fn invalid_parameters_exit_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(dir.path());
    for extra in [
        &["--bin-min", "300"][..],
        &["--iqr-factor", "-1"][..],
        &["--rank-agg", "mean"][..],
        &["--no-such-flag"][..],
    ] {
        let mut args = vec!["compute", "--input", s(&input)];
        args.extend_from_slice(extra);
        assert_eq!(code(&run(&args)), 3, "{extra:?}");
    }
}

#[test]
fn wide_json_input_is_accepted() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("wide.json");
    std::fs::write(
        &input,
        r#"{"axes":["gdp","life"],"timesteps":["a","b"],"instances":[
            {"id":"u","values":[[0,0],[1,1]]},{"id":"v","values":[[1,0],null]},
            {"id":"w","values":[[0,1],[2,2]]},{"id":"z","values":[[5,5],[0,3]]}]}"#,
    )
    .unwrap();
    let out = run(&["compute", "--input", s(&input)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["dataset"]["axes"], serde_json::json!(["gdp", "life"]));
}

#[test]
fn bench_writes_csv_and_json_reports() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(dir.path());
    let stem = dir.path().join("report");
    let out = run(&["bench", "--input", s(&input), "--workers", "1,2", "--repeats", "2", "--output", s(&stem)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "workers,mean_ms,speedup");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[1].ends_with(",1.000000"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["repeats"], 2);
    assert_eq!(json["hashes_match"], true);
    assert_eq!(code(&run(&["bench", "--input", s(&input), "--repeats", "0"])), 3);
}

#[test]
fn serve_reports_bind_failure() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(dir.path());
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = run(&["serve", "--input", s(&input), "--port", &port]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot bind"));
    assert_eq!(code(&run(&["serve", "--input", s(&input), "--port", "70000"])), 3);
}

#[test]
fn serve_rejects_results_from_another_dataset() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(dir.path());
    let other = dir.path().join("other.csv");
    std::fs::write(&other, "instance,time,x,y\na,1,0,0\nb,1,1,1\nc,1,2,0\n").unwrap();
    let results = dir.path().join("other.json");
    assert_eq!(code(&run(&["compute", "--input", s(&other), "--output", s(&results)])), 0);
    let out = run(&["serve", "--input", s(&input), "--results", s(&results), "--port", "0"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hashes to"));
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    Some(response)
}

#[test]
fn serve_precomputed_results() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(dir.path());
    let results = dir.path().join("results.json");
    assert_eq!(code(&run(&["compute", "--input", s(&input), "--output", s(&results)])), 0);
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = bin()
        .args(["serve", "--input", s(&input), "--results", s(&results), "--port", &port.to_string()])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let response = loop {
        if let Some(r) = http_get(port, "/api/timesteps") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let body = &response[response.find("\r\n\r\n").unwrap() + 4..];
    let served: serde_json::Value = serde_json::from_str(body).unwrap();
    let stored: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&results).unwrap()).unwrap();
    for (entry, r) in served.as_array().unwrap().iter().zip(stored["timesteps"].as_array().unwrap()) {
        assert_eq!(entry["score"], r["original"]["score"]);
    }
    assert!(served[1]["score"].as_f64().unwrap() > 0.0);
}
