use std::path::Path;
use std::process::{Command, Output};

fn chatabl(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_chatabl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CHATABL_API_KEY")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "chatabl {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn commands_chain_on_a_small_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("gen.json"), r#"{"min_length": 5, "max_length": 7, "per_length": 20}"#).unwrap();
    std::fs::write(
        root.join("loop.json"),
        r#"{"rounds": 1, "pretrain_steps": 20, "steps_per_round": 10}"#,
    )
    .unwrap();

    chatabl(&["gen-data", "--config", "gen.json", "--seed", "3", "--labeled-frac", "0.5", "--out", "data"], root);
    for f in ["manifest.jsonl", "glyphs.bin", "answers.jsonl", "meta.json"] {
        assert!(root.join("data").join(f).exists(), "{f}");
    }

    chatabl(&["train", "--data", "data", "--steps", "20", "--out", "trained"], root);
    assert!(root.join("trained/model.ckpt").exists());

    let out = chatabl(&["abduce", "--data", "data", "--model", "trained/model.ckpt", "--out", "abduced"], root);
    assert!(String::from_utf8_lossy(&out.stdout).contains("surviving operations"));
    let dump = std::fs::read_to_string(root.join("abduced/hypotheses.txt")).unwrap();
    assert!(dump.lines().all(|l| l.len() == 4 && u16::from_str_radix(l, 16).is_ok()));
    assert_eq!(
        std::fs::read_to_string(root.join("abduced/revisions.jsonl")).unwrap().lines().count(),
        30
    );

    chatabl(&["loop", "--data", "data", "--config", "loop.json", "--reasoner", "mock", "--out", "looped"], root);
    let stats = std::fs::read_to_string(root.join("looped/stats.csv")).unwrap();
    assert!(stats.starts_with("round,glyph_acc,eqn_acc,surviving_count,mean_edits"));
    assert_eq!(stats.lines().count(), 3);
    assert!(std::fs::read_to_string(root.join("looped/transcripts.jsonl")).unwrap().lines().count() > 0);

    let out = chatabl(
        &["eval", "--data", "data", "--model", "looped/model.ckpt", "--hypotheses", "looped/hypotheses.txt", "--out", "e"],
        root,
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("equation accuracy"));
    assert!(text.contains("f1"));
}

#[test]
fn live_reasoner_without_key_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("gen.json"), r#"{"min_length": 5, "max_length": 6, "per_length": 10}"#).unwrap();
    chatabl(&["gen-data", "--config", "gen.json", "--labeled-frac", "0.5", "--out", "data"], root);
    let out = Command::new(env!("CARGO_BIN_EXE_chatabl"))
        .args(["loop", "--data", "data", "--reasoner", "live", "--out", "x"])
        .current_dir(root)
        .env_remove("CHATABL_API_KEY")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("CHATABL_API_KEY"));
}

#[test]
fn unknown_reasoner_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_chatabl"))
        .args(["experiment", "--reasoner", "gpt"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
