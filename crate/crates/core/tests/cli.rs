use std::path::{Path, PathBuf};
use std::process::Command;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn hallucheck(args: &[&str], out: &Path) -> (i32, String, String) {
    let o =
        Command::new(env!("CARGO_BIN_EXE_hallucheck")).args(args).arg("--out").arg(out).output().expect("binary runs");
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

#[test]
fn detect_eliminate_report_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("run.toml");
    let cfg = cfg.to_str().unwrap();
    let (code, stdout, _) = hallucheck(&["detect", "--config", cfg], dir.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("flagged=15"), "{stdout}");
    for cmd in ["eliminate", "expand", "sweep", "chair", "report"] {
        let (code, _, stderr) = hallucheck(&[cmd, "--config", cfg], dir.path());
        assert_eq!(code, 0, "{cmd}: {stderr}");
    }
    let report = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(report.contains("| rectified | sentence | 0.0 | 0.0 | 0.0 |"), "{report}");
}

#[test]
fn missing_annotations_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let corpus = fixtures().join("corpus.jsonl");
    let (code, _, stderr) = hallucheck(
        &["chair", "--corpus", corpus.to_str().unwrap(), "--annotations", missing.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code, 1);
    assert!(stderr.contains("nope.json"), "{stderr}");
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "thresold = 0.5\n").unwrap();
    let (code, _, _) = hallucheck(&["chair", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code, 1);
}

#[test]
fn total_expert_outage_is_degraded() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("down.json"), r#"{"__default__": "__timeout__"}"#).unwrap();
    std::fs::write(
        dir.path().join("experts.json"),
        r#"[{"expert_id": "down", "endpoint": "mock:down.json", "max_retries": 0}]"#,
    )
    .unwrap();
    let cfg = fixtures().join("run.toml");
    let experts = dir.path().join("experts.json");
    let out = dir.path().join("out");
    let (code, stdout, stderr) =
        hallucheck(&["detect", "--config", cfg.to_str().unwrap(), "--experts", experts.to_str().unwrap()], &out);
    assert_eq!(code, 2, "{stdout}{stderr}");
    assert!(stdout.contains("flagged=0"), "{stdout}");
    // unverifiable chunks are never removed
    let (code, _, _) = hallucheck(&["eliminate", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read_to_string(out.join("rectified.jsonl")).unwrap(),
        hallucheck::corpus::load_corpus(fixtures().join("corpus.jsonl")).unwrap().to_jsonl()
    );
}

#[test]
fn threshold_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("run.toml");
    let (code, stdout, _) = hallucheck(&["detect", "--config", cfg.to_str().unwrap(), "--threshold", "0"], dir.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("flagged=0"), "{stdout}");
    let (code, _, _) = hallucheck(&["detect", "--config", cfg.to_str().unwrap(), "--threshold", "1.5"], dir.path());
    assert_eq!(code, 1);
}
