#![cfg(feature = "cli")]

use std::process::{Command, Output};

fn storystage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storystage"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn replay_writes_the_same_bytes_twice() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = storystage(&["replay", "robinhood_workflow", "--out", dir.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "frames.json",
        "marbles.json",
        "synopsis.txt",
        "screenplay.fountain",
        "session.json",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
        assert!(!x.is_empty(), "{f}");
    }
    let marbles: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("marbles.json")).unwrap()).unwrap();
    assert_eq!(marbles.as_array().unwrap().len(), 4);
}

#[test]
fn replay_of_a_saved_document_matches_the_bundled_one() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = storystage(&["replay", "robinhood_full", "--out", first.to_str().unwrap()]);
    assert!(o.status.success());
    let second = dir.path().join("second");
    let saved = first.join("session.json");
    let o = storystage(&["replay", saved.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["frames.json", "marbles.json", "screenplay.fountain"] {
        assert_eq!(
            std::fs::read(first.join(f)).unwrap(),
            std::fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn export_prints_the_requested_format() {
    let o = storystage(&["export", "robinhood_workflow", "--format", "screenplay"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("EXT. ") || text.contains("INT. "), "{text}");
    let o = storystage(&["export", "robinhood_workflow", "--format", "summary"]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("INT. ") && !stdout(&o).trim().is_empty());
}

#[test]
fn corrupt_documents_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"session_id":"x","scene_id":"robinhood","events":[{"event_id":0,"t":"soon"}]}"#,
    )
    .unwrap();
    let o = storystage(&[
        "replay",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("SchemaViolation") || err.contains("schema"), "{err}");
    assert!(!dir.path().join("out").join("frames.json").exists());
}

#[test]
fn fixtures_lists_scenes_and_logs() {
    let o = storystage(&["fixtures"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("robinhood\t")));
    assert!(text.contains("robinhood_export"));
}

#[test]
fn config_file_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "token_budget = 100\n").unwrap();
    let o = storystage(&["--config", cfg.to_str().unwrap(), "fixtures"]);
    assert!(!o.status.success());
    let good = dir.path().join("good.toml");
    std::fs::write(&good, "token_budget = 600\nN_commit = 3\n").unwrap();
    let o = storystage(&[
        "--config",
        good.to_str().unwrap(),
        "export",
        "robinhood_workflow",
        "--format",
        "summary",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
