use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use spinparity_cli::document::scenario_block;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests")
}

fn data(name: &str) -> String {
    root().join("data").join(name).display().to_string()
}

fn spinparity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinparity")).args(args).output().expect("failed to spawn binary")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

/// Runs the binary and compares stdout with `golden/<name>`. Set
/// `UPDATE_GOLDEN=1` to rewrite the file instead.
fn assert_golden(name: &str, args: &[&str]) -> String {
    let out = spinparity(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let path = root().join("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, &text).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(text, expected, "output of {args:?} differs from {name}");
    text
}

#[test]
fn table1_golden() {
    let text = assert_golden("table1.txt", &["table1", "--trials", "1000"]);
    let table: Vec<&str> = text.lines().skip_while(|l| *l != "[table1]").skip(1).take(3).collect();
    let cells: Vec<Vec<&str>> = table.iter().map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(cells[0], ["detectors", "PsiPlus", "PsiMinus", "PhiPlus", "PhiMinus"]);
    assert_eq!(cells[1], ["D(t)", "01", "01", "10", "10"]);
    assert_eq!(cells[2], ["D(2t)", "01", "10", "10", "01"]);
}

#[test]
fn table1_exact_golden() {
    let text = assert_golden("table1_exact.txt", &["table1", "--trials", "0"]);
    assert!(text.contains("mode=exact"));
    assert!(text.contains("PsiMinus,01/10,1.000000000,"));
}

#[test]
fn bell_qnd_golden() {
    let text = assert_golden("bell_qnd_psi_minus.txt", &["run", &data("bell_qnd_psi_minus.scn")]);
    assert!(text.contains("PsiMinus,2000,1.000000000,"));
    assert!(text.contains("anticorrelation_violations=0"));
}

#[test]
fn merge_exact_golden() {
    let text = assert_golden("ghz_merge_8.txt", &["run", &data("ghz_merge_8.scn")]);
    assert!(text.contains("success_probability=0.125000000"));
}

#[test]
fn bell_gen_golden() {
    let text = assert_golden("bell_gen_psi_minus.txt", &["run", &data("bell_gen_psi_minus.scn")]);
    assert!(text.contains("PsiMinus,1000,1.000000000,"));
}

#[test]
fn born_csv_golden() {
    let text = assert_golden("bell_gen_born.csv", &["run", &data("bell_gen_born.scn")]);
    assert_eq!(text.lines().next(), Some("outcome,count,frequency,ci99_low,ci99_high"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn ghz3_golden() {
    assert_golden("ghz3_m2.txt", &["run", &data("ghz3_m2.scn")]);
}

#[test]
fn sequential_golden_and_exact_command() {
    assert_golden("sequential_5.txt", &["run", &data("sequential_5.scn")]);
    let text = assert_golden("sequential_5_exact.txt", &["exact", &data("sequential_5.scn")]);
    // each of the three growth steps succeeds with 1 - 1/4
    assert!(text.contains("success_probability=0.421875000"), "{text}");
}

#[test]
fn flags_override_file() {
    let text = stdout(&spinparity(&[
        "run",
        &data("bell_qnd_psi_minus.scn"),
        "--trials",
        "10",
        "--seed",
        "5",
        "--format",
        "csv",
    ]));
    assert_eq!(text, "outcome,count,frequency,ci99_low,ci99_high\nPsiMinus,10,1.000000000,0.950000000,1.000000000\n");
    let off = stdout(&spinparity(&["run", &data("ghz3_m2.scn"), "--force-swap", "off", "--trials", "50"]));
    assert!(off.contains("force_swap=off"));
}

#[test]
fn echoed_scenario_reproduces_the_document() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run".to_string(), data("ghz3_m2.scn")],
        vec!["run".to_string(), data("unnormalized.scn")],
        vec!["exact".to_string(), data("sequential_5.scn")],
        vec!["run".to_string(), data("bell_qnd_psi_minus.scn"), "--seed".into(), "99".into()],
    ] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = stdout(&spinparity(&args));
        let echo = dir.path().join("echo.scn");
        fs::write(&echo, scenario_block(&first).expect("scenario block")).unwrap();
        let second = stdout(&spinparity(&["run", echo.to_str().unwrap()]));
        assert_eq!(first, second, "echo of {args:?} did not reproduce");
    }
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("result.txt");
    let out = spinparity(&["run", &data("ghz_merge_8.scn"), "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let golden = fs::read_to_string(root().join("golden/ghz_merge_8.txt")).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), golden);
}

#[test]
fn renormalization_warns_on_stderr() {
    let out = spinparity(&["run", &data("unnormalized.scn")]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("warning") && err.contains("amplitudes"), "{err}");
    assert!(stdout(&out).contains("amplitudes=0.7071067811865475,0,0,0.7071067811865475"));
}

#[test]
fn exit_codes() {
    let parse = spinparity(&["run", &data("bad_n.scn")]);
    assert_eq!(parse.status.code(), Some(1));
    let err = String::from_utf8_lossy(&parse.stderr);
    assert!(err.contains("line 3") && err.contains("`n`"), "{err}");

    assert_eq!(spinparity(&["run", &data("does_not_exist.scn")]).status.code(), Some(1));
    assert_eq!(spinparity(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(spinparity(&["table1", "--format", "xml"]).status.code(), Some(1));

    let runtime = spinparity(&["run", &data("impossible.scn")]);
    assert_eq!(runtime.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&runtime.stderr).contains("antiparallel"));

    assert_eq!(spinparity(&["--help"]).status.code(), Some(0));
}
