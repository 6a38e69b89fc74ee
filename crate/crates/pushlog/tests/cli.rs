//! End-to-end tests of the command-line interface: exit codes, CSV output,
//! stats JSON, tabling overrides, and the differential `test` subcommand.

use std::fs;
use std::path::Path;
use std::process::Command;

fn pushlog() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pushlog"))
}

const TC: &str = "\
.edb e(int, int)
p(X, Y) :- e(X, Y).
p(X, Z) :- p(X, Y), e(Y, Z).
answer(X, Y) :- p(X, Y).
";

fn write_case(dir: &Path, program: &str, csvs: &[(&str, &str)]) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("program.dl"), program).unwrap();
    for (name, content) in csvs {
        fs::write(dir.join(format!("{name}.csv")), content).unwrap();
    }
}

#[test]
fn run_both_engines_agree_and_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    write_case(tmp.path(), TC, &[("e", "1,2\n2,3\n3,1\n")]);
    let out_path = tmp.path().join("answers.csv");

    let output = pushlog()
        .args(["run"])
        .arg(tmp.path().join("program.dl"))
        .arg("--data")
        .arg(tmp.path())
        .args(["--engine", "both", "--stats", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");

    let answers = fs::read_to_string(&out_path).unwrap();
    let mut lines: Vec<&str> = answers.lines().collect();
    lines.sort();
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[0], "1,1");

    let stderr = String::from_utf8_lossy(&output.stderr);
    let stats: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(stats["derivations"].as_u64().unwrap() > 0);
    assert!(stats["cursor_opens"]["e"].as_u64().unwrap() >= 1);
}

#[test]
fn missing_csv_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    write_case(tmp.path(), TC, &[]);
    let output = pushlog()
        .args(["run"])
        .arg(tmp.path().join("program.dl"))
        .arg("--data")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("e.csv"), "stderr: {stderr}");
}

#[test]
fn uncovered_tabling_override_exits_2_with_cycle_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    write_case(tmp.path(), TC, &[("e", "1,2\n")]);
    let output = pushlog()
        .args(["run"])
        .arg(tmp.path().join("program.dl"))
        .arg("--data")
        .arg(tmp.path())
        .args(["--table", "answer"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("cycle") && stderr.contains("p"),
        "stderr: {stderr}"
    );
}

#[test]
fn valid_tabling_override_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    write_case(tmp.path(), TC, &[("e", "1,2\n2,1\n")]);
    let output = pushlog()
        .args(["run"])
        .arg(tmp.path().join("program.dl"))
        .arg("--data")
        .arg(tmp.path())
        .args(["--engine", "both", "--table", "p"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
}

#[test]
fn parse_error_reports_position_and_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    write_case(tmp.path(), "p(X) :- .\n", &[]);
    let output = pushlog()
        .args(["run"])
        .arg(tmp.path().join("program.dl"))
        .arg("--data")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("1:9"), "stderr: {stderr}");
}

#[test]
fn validation_errors_list_all_violations() {
    let tmp = tempfile::tempdir().unwrap();
    write_case(tmp.path(), ".edb e(int)\np(X, Y) :- e(X).\ne(X) :- p(X, X).\n", &[]);
    let output = pushlog()
        .args(["run"])
        .arg(tmp.path().join("program.dl"))
        .arg("--data")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("head variable Y"), "stderr: {stderr}");
    assert!(stderr.contains("EDB predicate e"), "stderr: {stderr}");
}

#[test]
fn inspect_writes_dot_and_source() {
    let tmp = tempfile::tempdir().unwrap();
    write_case(tmp.path(), TC, &[]);
    let dot = tmp.path().join("graph.dot");
    let src = tmp.path().join("plan.txt");
    let output = pushlog()
        .args(["inspect"])
        .arg(tmp.path().join("program.dl"))
        .arg("--dump-graph")
        .arg(&dot)
        .arg("--emit-source")
        .arg(&src)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    assert!(fs::read_to_string(&dot).unwrap().starts_with("digraph"));
    assert!(fs::read_to_string(&src).unwrap().contains("backtrack_stack"));
}

#[test]
fn test_subcommand_runs_case_directories() {
    let tmp = tempfile::tempdir().unwrap();
    write_case(&tmp.path().join("tc"), TC, &[("e", "1,2\n2,3\n3,1\n")]);
    write_case(
        &tmp.path().join("empty"),
        TC,
        &[("e", "")],
    );
    let output = pushlog().args(["test"]).arg(tmp.path()).output().unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("case empty: ok"));
    assert!(stdout.contains("case tc: ok"));
}

#[test]
fn multiset_answers_flag_changes_cardinality() {
    let program = "\
.edb e(int)
answer(X) :- p(X).
answer(X) :- q(X).
p(X) :- e(X).
q(X) :- e(X).
";
    let tmp = tempfile::tempdir().unwrap();
    write_case(tmp.path(), program, &[("e", "4\n")]);
    let run = |extra: &[&str]| {
        let output = pushlog()
            .args(["run"])
            .arg(tmp.path().join("program.dl"))
            .arg("--data")
            .arg(tmp.path())
            .args(extra)
            .output()
            .unwrap();
        assert!(output.status.success());
        String::from_utf8_lossy(&output.stdout).lines().count()
    };
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["--multiset-answers"]), 2);
}
