use std::io::Write;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_namegrounder"));
    c.env_remove("NAMEGROUNDER_MEMORY");
    c
}

fn run_with_stdin(mut cmd: Command, input: &str) -> Output {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn gen_writes_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["gen", "--scenes", "20", "--per-scene", "15", "--seed", "7", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scenes = std::fs::read_to_string(dir.path().join("scenes.jsonl")).unwrap();
    let instrs = std::fs::read_to_string(dir.path().join("instructions.jsonl")).unwrap();
    assert_eq!(scenes.lines().count(), 20);
    assert_eq!(instrs.lines().count(), 300);
}

#[test]
fn usage_errors_exit_with_2() {
    let out = bin().args(["gen", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = bin().arg("fly").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["eval", "--config", "/nonexistent/c.toml", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn eval_writes_reports_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "n_scenes = 4\nper_scene = 10\n\n[seeds]\ndataset = 1\nepisodes = 2\n").unwrap();
    let out_dir = dir.path().join("r");
    let out = bin().args(["eval", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report_wo.json", "report_w.json", "manifest.json", "report.txt"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("w/o naming") || stdout.contains("SR"), "{stdout}");
}

#[test]
fn repl_persists_memory_through_the_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("memory.txt");
    let mut first = bin();
    first.args(["repl", "--scene-seed", "3", "--objects", "1"]).env("NAMEGROUNDER_MEMORY", &store);
    let out = run_with_stdin(first, "the name of this is Kaki Shoyu\n");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&store).unwrap().contains("Kaki Shoyu"));

    let mut second = bin();
    second.args(["repl", "--scene-seed", "5", "--objects", "7", "--memory"]).arg(&store);
    let out = run_with_stdin(second, ":memory\npick Kaki Shoyu up and place it on the box\n");
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["records"][0]["name"], "Kaki Shoyu");
    assert_eq!(lines[1]["chosen_src"]["via"], "name");
}
