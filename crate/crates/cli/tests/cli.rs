//! Runs the built binary end to end.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nversion"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn nversion")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn cost_matches_formula() {
    let base = ["cost", "--c0", "10", "--c1", "1", "--c2", "5", "--c3", "2", "--n", "100", "--mode"];
    let out = run(bin().args(base).arg("tamper-each"));
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "610");
    let out = run(bin().args(base).arg("gene-extraction"));
    assert_eq!(stdout(&out).trim(), "310");
    let out = run(bin().args(base).arg("sideways"));
    assert!(!out.status.success());
}

#[test]
fn negative_cost_is_refused() {
    let out = run(bin().args(["cost", "--c0=-1", "--c1", "1", "--c2", "1", "--c3", "1", "--n", "1", "--mode", "tamper-each"]));
    assert!(!out.status.success());
}

#[test]
fn canonical_digest_is_sha1() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("abc");
    std::fs::write(&input, "abc").unwrap();
    let out = run(bin().args(["digest", "--canonical", "--input"]).arg(&input));
    assert_eq!(stdout(&out).trim(), "a9993e364706816aba3e25717850c26c9cd0d89d");
}

#[test]
fn guard_scan_exit_codes() {
    let dict = fixture("meituan.dict");
    let clean = run(bin().args(["guard-scan", "--maps"]).arg(fixture("clean.maps")).arg("--dict").arg(&dict));
    assert!(clean.status.success());
    assert_eq!(stdout(&clean).trim(), "clean");

    let bad = run(bin().args(["guard-scan", "--maps"]).arg(fixture("lbe_injected.maps")).arg("--dict").arg(&dict));
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("unknown-segment"));

    let tampered = run(bin().args(["guard-scan", "--maps"]).arg(fixture("size_tampered.maps")).arg("--dict").arg(&dict));
    assert_eq!(tampered.status.code(), Some(1));
    assert!(stdout(&tampered).contains("size-mismatch"));
}

#[test]
fn recorded_dictionary_accepts_its_source() {
    let dir = tempfile::tempdir().unwrap();
    let dict = dir.path().join("rec.dict");
    let out = run(bin().args(["guard-scan", "--maps"]).arg(fixture("clean.maps")).arg("--record").arg(&dict));
    assert!(out.status.success());
    let sorted = |path: &Path| {
        let mut lines: Vec<String> = std::fs::read_to_string(path).unwrap().lines().map(String::from).collect();
        lines.sort();
        lines
    };
    assert_eq!(sorted(&dict), sorted(&fixture("meituan.dict")));
    let check = run(bin().args(["guard-scan", "--maps"]).arg(fixture("clean.maps")).arg("--dict").arg(&dict));
    assert!(check.status.success());
}

#[test]
fn simulations_are_reproducible() {
    let args = ["simulate", "divergence", "--pairs", "50", "--seed", "9", "--format", "records"];
    let a = run(bin().args(args));
    let b = run(bin().args(args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 51);

    let r = run(bin().args(["simulate", "replication", "--clients", "4", "--seed", "2"]));
    let text = stdout(&r);
    assert!(text.contains("accepted     1"), "{text}");
    assert!(text.contains("rejected     3"), "{text}");
}

struct ServeGuard(Child);

impl Drop for ServeGuard {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// Starts `serve` on a free port and returns its base URL.
fn serve(dir: &Path) -> (ServeGuard, String) {
    let mut child = bin()
        .current_dir(dir)
        .args(["serve", "--listen", "127.0.0.1:0", "--pool-size", "4", "--seed", "3", "--unique"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let stderr = child.stderr.take().unwrap();
    let mut lines = BufReader::new(stderr).lines();
    let url = loop {
        let line = lines.next().expect("server exited early").unwrap();
        if let Some(url) = line.strip_prefix("listening on ") {
            break url.to_string();
        }
    };
    // keep draining so the server never blocks on a full pipe
    std::thread::spawn(move || lines.for_each(drop));
    (ServeGuard(child), url)
}

#[test]
fn register_then_send() {
    let dir = tempfile::tempdir().unwrap();
    let (_server, url) = serve(dir.path());
    let variants = dir.path().join("variants");

    let out = run(bin().args(["register", "--server", &url, "--id", "alice", "--variant-dir"]).arg(&variants));
    assert!(out.status.success(), "{out:?}");
    let source = stdout(&out).lines().find_map(|l| l.strip_prefix("source  ").map(PathBuf::from)).unwrap();
    assert!(source.exists());

    let again = run(bin().args(["register", "--server", &url, "--id", "alice", "--variant-dir"]).arg(&variants));
    assert!(!again.status.success());

    let payload = dir.path().join("payload");
    std::fs::write(&payload, b"GET /orders").unwrap();
    let send = |id: &str, extra: &[&Path]| {
        let mut cmd = bin();
        cmd.args(["send", "--server", &url, "--id", id, "--payload"]).arg(&payload).arg("--variant").arg(&source);
        for (flag, value) in ["--maps", "--dict"].iter().zip(extra) {
            cmd.arg(flag).arg(value);
        }
        run(&mut cmd)
    };

    let ok = send("alice", &[&fixture("clean.maps"), &fixture("meituan.dict")]);
    assert_eq!(stdout(&ok).trim(), "accepted");
    let stranger = send("mallory", &[]);
    assert_eq!(stranger.status.code(), Some(1));
    assert_eq!(stdout(&stranger).trim(), "rejected unknown-client");
    let injected = send("alice", &[&fixture("lbe_injected.maps"), &fixture("meituan.dict")]);
    assert_eq!(injected.status.code(), Some(2));

    let db = std::fs::read_to_string(dir.path().join("nversion.db")).unwrap();
    assert!(db.starts_with("alice\t"));
    assert!(dir.path().join("pool/pool.tsv").exists());
}
