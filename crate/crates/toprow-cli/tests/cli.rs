use std::fs;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_toprow");

const SMALL_CIRCUIT: &str = "qubits 3\ngate H 1\ngate CNOT 1 2\n";

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().expect("spawn toprow");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn params_reports_derivation() {
    let (code, stdout, _) = run(&["params", "-n", "3", "-T", "2"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("K   = 1/80"));
    assert!(stdout.contains("m   = 120"));
    assert!(stdout.contains("p   = 191 bits"));
    assert!(stdout.contains("transcript bit cap"));
}

#[test]
fn params_refuses_huge_depth() {
    let (code, stdout, _) = run(&["params", "-n", "4", "-T", "200"]);
    assert_eq!(code, 1);
    assert!(stdout.contains("refused"));
}

#[test]
fn run_honest_accepts_and_writes_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let circ = dir.path().join("c.txt");
    fs::write(&circ, SMALL_CIRCUIT).unwrap();
    let transcript = dir.path().join("t.jsonl");
    let (code, stdout, _) = run(&[
        "run",
        "--circuit",
        circ.to_str().unwrap(),
        "--seed",
        "7",
        "--transcript",
        transcript.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("accept"));

    let text = fs::read_to_string(&transcript).unwrap();
    let mut lines = text.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["seed"], 7);
    assert!(header["total_bits"].as_u64().unwrap() > 0);
    for line in lines {
        let msg: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["round", "from", "kind", "bits"] {
            assert!(msg.get(key).is_some(), "missing {key} in {line}");
        }
    }
}

#[test]
fn run_cheater_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let circ = dir.path().join("c.txt");
    fs::write(&circ, SMALL_CIRCUIT).unwrap();
    let (code, stdout, _) = run(&[
        "run",
        "--circuit",
        circ.to_str().unwrap(),
        "--claim",
        "offset-k",
        "--strategy",
        "spread-error",
        "--seed",
        "7",
    ]);
    assert_eq!(code, 1);
    assert!(stdout.contains("reject"));
}

#[test]
fn two_process_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let circ = dir.path().join("c.txt");
    fs::write(&circ, SMALL_CIRCUIT).unwrap();
    let local = dir.path().join("local.jsonl");
    let remote = dir.path().join("remote.jsonl");
    let base = ["run", "--circuit", circ.to_str().unwrap(), "--seed", "11"];

    let mut args = base.to_vec();
    args.extend(["--transcript", local.to_str().unwrap()]);
    let (code, _, _) = run(&args);
    assert_eq!(code, 0);

    let mut args = base.to_vec();
    args.extend(["--transcript", remote.to_str().unwrap(), "--two-process"]);
    let (code, _, _) = run(&args);
    assert_eq!(code, 0);

    assert_eq!(
        fs::read_to_string(&local).unwrap(),
        fs::read_to_string(&remote).unwrap()
    );
}

#[test]
fn reduce_qcircuit_output_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let circ = dir.path().join("c.txt");
    fs::write(&circ, SMALL_CIRCUIT).unwrap();
    let out = dir.path().join("cq.txt");
    let (code, stdout, _) = run(&[
        "reduce",
        "qcircuit",
        "--input",
        circ.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("wrote"));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("qubits 4\n"));
    // The reduced circuit must itself be a valid run input.
    let (code, stdout, _) = run(&["run", "--circuit", out.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(code, 0, "reduced circuit run failed: {stdout}");
}

#[test]
fn reduce_postbqp_writes_pair() {
    let dir = tempfile::tempdir().unwrap();
    let circ = dir.path().join("c.txt");
    fs::write(&circ, SMALL_CIRCUIT).unwrap();
    let out_y = dir.path().join("cy.txt");
    let out_z = dir.path().join("cz.txt");
    let (code, _, _) = run(&[
        "reduce",
        "postbqp",
        "--input",
        circ.to_str().unwrap(),
        "--out-y",
        out_y.to_str().unwrap(),
        "--out-z",
        out_z.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(fs::read_to_string(&out_y).unwrap().starts_with("qubits 5\n"));
    assert!(fs::read_to_string(&out_z).unwrap().starts_with("qubits 4\n"));
}

#[test]
fn reduce_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let circ = dir.path().join("bad.txt");
    fs::write(&circ, "qubits 3\ngate FROB 1\n").unwrap();
    let out = dir.path().join("cq.txt");
    let (code, _, stderr) = run(&[
        "reduce",
        "qcircuit",
        "--input",
        circ.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("line 2"));
}

#[test]
fn experiment_inline_spec_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    let (code, stdout, _) = run(&[
        "experiment",
        "--spec",
        r#"{"kind":"completeness","n":3,"t":1,"trials":5,"seed":1}"#,
        "--json",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("-> ok"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    let csv_text = fs::read_to_string(&csv).unwrap();
    assert!(csv_text.lines().count() >= 2);
}

#[test]
fn experiment_spec_file_soundness() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"kind":"soundness","n":3,"t":1,"trials":30,"seed":2,"strategy":"spread_error"}"#,
    )
    .unwrap();
    let (code, stdout, _) = run(&["experiment", "--spec-file", spec.to_str().unwrap()]);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("-> ok"));
}

#[test]
fn selftest_passes() {
    let (code, stdout, _) = run(&["selftest"]);
    assert_eq!(code, 0);
    assert_eq!(stdout.matches(": pass").count(), 5);
    assert!(!stdout.contains("FAIL"));
}
