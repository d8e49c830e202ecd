//! End-to-end tests of the binary: exit codes, output shapes, and the
//! solve/evaluate value round trip, all through real process invocations.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_icldt"))
}

fn testdata(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../testdata").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn path_str(p: &PathBuf) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_the_shipped_theories() {
    for name in ["two_sensor.icl", "fully_observable.icl"] {
        let out = run(&["validate", &path_str(&testdata(name))]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(stdout(&out).contains("0 error(s), 0 warning(s)"));
    }
}

#[test]
fn validate_accepts_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.icl");
    std::fs::write(&path, "").unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("0 error(s)"));
}

#[test]
fn validate_flags_bad_probabilities_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.icl");
    std::fs::write(&path, "nature n { x: 0.5, y: 0.7 }.\nutility(1) <- x.\nutility(0) <- y.\n")
        .unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("PROB_SUM"));
}

#[test]
fn parse_errors_exit_two_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.icl");
    std::fs::write(&path, "nature n { x: }.").unwrap();
    let out = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).is_empty());
    assert!(stderr(&out).contains("error:"));
}

#[test]
fn solve_prints_the_known_policy_table() {
    let out = run(&["solve", &path_str(&testdata("fully_observable.icl"))]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    for needle in [
        "<d1, {a1}, 7>",
        "<d1, {a2, e1, c1}, 7>",
        "<d2, {a2, e1, c2}, 6>",
        "<d2, {a2, e2, c1}, 9>",
        "indifferent on {a2, e2, c2} (utility 4)",
        "value: 6.75",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in {text}");
    }
}

#[test]
fn solve_json_is_stable_across_runs() {
    let file = path_str(&testdata("two_sensor.icl"));
    let first = run(&["solve", &file, "--format", "json"]);
    let second = run(&["solve", &file, "--format", "json"]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("\"value\":8.51"));
}

#[test]
fn emitted_strategy_evaluates_to_the_reported_value() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["two_sensor.icl", "fully_observable.icl"] {
        let file = path_str(&testdata(name));
        let strategy = dir.path().join(format!("{name}.strategy"));
        let solved = run(&[
            "solve",
            &file,
            "--format",
            "json",
            "--emit-strategy",
            strategy.to_str().unwrap(),
        ]);
        assert_eq!(solved.status.code(), Some(0), "{}", stderr(&solved));
        let solved_json: serde_json::Value =
            serde_json::from_str(&stdout(&solved)).unwrap();

        let evaluated = run(&[
            "evaluate",
            &file,
            "--strategy",
            strategy.to_str().unwrap(),
            "--format",
            "json",
        ]);
        assert_eq!(evaluated.status.code(), Some(0), "{}", stderr(&evaluated));
        let evaluated_json: serde_json::Value =
            serde_json::from_str(&stdout(&evaluated)).unwrap();

        assert_eq!(solved_json["value"], evaluated_json["value"], "{name}");
    }
}

#[test]
fn oracle_agrees_with_solve_on_the_sensor_theory() {
    let out = run(&[
        "oracle",
        &path_str(&testdata("two_sensor.icl")),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["value"], serde_json::json!(8.51));
}

#[test]
fn oracle_respects_the_strategy_bound_with_exit_three() {
    let out = run(&[
        "oracle",
        &path_str(&testdata("two_sensor.icl")),
        "--max-strategies",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("10"));
}

#[test]
fn explain_lists_explanations_and_probability() {
    let out = run(&[
        "explain",
        &path_str(&testdata("two_sensor.icl")),
        "--query",
        "bs(pos)",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("{b(pos), true_pos}"));
    assert!(text.contains("{b(neg), false_pos}"));
    assert!(text.contains("probability: 0.59"));
}

#[test]
fn explain_rejects_malformed_queries_with_exit_two() {
    let out = run(&[
        "explain",
        &path_str(&testdata("two_sensor.icl")),
        "--query",
        "bs(pos) &",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_rejects_malformed_strategy_files_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.strategy");
    std::fs::write(&path, "d: nonsense").unwrap();
    let out = run(&[
        "evaluate",
        &path_str(&testdata("two_sensor.icl")),
        "--strategy",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 1"));
}
