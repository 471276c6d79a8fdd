use std::path::Path;
use std::process::{Command, Output};

use stgru::rules::{label_texts_tsv, Gazetteer};

fn stgru(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stgru")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stgru(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(stgru(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(stgru(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(stgru(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(stgru(dir.path(), &["train"]).status.code(), Some(1));
}

#[test]
fn missing_inputs_exit_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = stgru(dir.path(), &["eval", "--model", "nope.st", "--dataset", "nope.tsv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.st"));
}

#[test]
fn bad_configuration_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out-dir", "d"]);
    let out = stgru(dir.path(), &["train", "--train", "d/source_train.tsv", "--lr", "-1", "--runs", "1", "--out", "m.st"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("m.st").exists());

    let out = stgru(
        dir.path(),
        &["transfer", "--method", "magic", "--source", "m.st", "--target", "d/target_train.tsv", "--out", "t.st"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rules_label_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let gaz = Gazetteer::from_words(&["good", "so good"], &["bad"], &["not"]).unwrap();
    gaz.save(dir.path().join("g.gaz")).unwrap();
    let texts = ["so good", "not bad, bad", "", "meh"];
    std::fs::write(dir.path().join("in.txt"), texts.join("\n")).unwrap();
    ok(dir.path(), &["rules", "label", "--gazetteer", "g.gaz", "--in", "in.txt", "--out", "out.tsv"]);
    let written = std::fs::read_to_string(dir.path().join("out.tsv")).unwrap();
    // Blank input lines are skipped.
    assert_eq!(written, label_texts_tsv(&["so good", "not bad, bad", "meh"], &gaz));
}

#[test]
fn train_then_eval_reports_same_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--seed", "3", "--out-dir", "d"]);
    ok(
        dir.path(),
        &["train", "--train", "d/source_train.tsv", "--val", "d/source_val.tsv", "--runs", "2", "--epochs", "2", "--hidden", "8", "--out", "m.st"],
    );
    let a = ok(dir.path(), &["eval", "--model", "m.st", "--dataset", "d/source_val.tsv"]);
    let b = ok(dir.path(), &["eval", "--model", "m.st", "--dataset", "d/source_val.tsv", "--head", "target"]);
    assert_eq!(a, b);
    assert!(a.contains("accuracy"), "{a}");
}
