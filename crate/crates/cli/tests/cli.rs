use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn microsteer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microsteer")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_then_replay_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let record = dir.path().join("run.jsonl");
    let csv = dir.path().join("run.csv");
    let path = scenario("point_to_point.cfg");
    let out = microsteer(&[
        "run",
        path.to_str().unwrap(),
        "--seed",
        "5",
        "--duration",
        "12",
        "--out",
        record.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(metrics["time_to_target"].is_number(), "{metrics}");

    let text = std::fs::read_to_string(&record).unwrap();
    assert_eq!(text.lines().count(), 1 + 240);
    assert!(text.lines().next().unwrap().contains("\"seed\":5"));
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("time,x_true,y_true,x_tracked,y_tracked,field_dir,field_mag,node_index\n"));

    let replay = microsteer(&["replay", record.to_str().unwrap()]);
    assert!(replay.status.success());
    assert!(stdout(&replay).contains("identical: 240 frames"));

    let again = microsteer(&["metrics", record.to_str().unwrap()]);
    assert!(again.status.success());
    let recomputed: serde_json::Value = serde_json::from_str(&stdout(&again)).unwrap();
    assert_eq!(recomputed, metrics);

    // a tampered record no longer reproduces
    let tampered = dir.path().join("tampered.jsonl");
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[100] = lines[100].replacen("\"frame\":100", "\"frame\":100,\"log\":[\"edited\"]", 1);
    std::fs::write(&tampered, lines.join("\n")).unwrap();
    let replay = microsteer(&["replay", tampered.to_str().unwrap()]);
    assert_eq!(replay.status.code(), Some(1));
    assert!(stdout(&replay).contains("diverged at frame 100"), "{}", stdout(&replay));
}

#[test]
fn set_overrides_and_errors() {
    let path = scenario("noise_free.cfg");
    let out = microsteer(&["run", path.to_str().unwrap(), "--set", "sim.offset_delta=-30deg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let bad = microsteer(&["run", path.to_str().unwrap(), "--set", "ctrl.bogus=1"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ctrl.bogus"));

    let missing = microsteer(&["metrics", "/nonexistent/record.jsonl"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn serve_accepts_remote_clients() {
    use std::io::{BufRead, BufReader};
    use std::process::Stdio;

    let live = scenario("live.cfg");
    let mut child = Command::new(env!("CARGO_BIN_EXE_microsteer"))
        .args(["serve", live.to_str().unwrap(), "--port", "0", "--speed", "20"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("serving on ").expect("address line").to_string();

    let path = scenario("noise_free.cfg");
    let out = microsteer(&["--server", &url, "run", path.to_str().unwrap(), "--duration", "2"]);
    child.kill().unwrap();
    let _ = child.wait();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("\"nodes_total\": 1"));
}
