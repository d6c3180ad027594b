use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fusesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusesim")).args(args).output().expect("binary runs")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario_files() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(scenarios())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "conf"))
        .collect();
    files.sort();
    files
}

#[test]
fn run_matches_golden_traces() {
    let files = scenario_files();
    assert!(!files.is_empty());
    for conf in files {
        let out = fusesim(&["run", conf.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", conf.display(), String::from_utf8_lossy(&out.stderr));
        let golden = fs::read_to_string(conf.with_extension("trace")).unwrap();
        assert_eq!(String::from_utf8(out.stdout).unwrap(), golden, "{}", conf.display());
    }
}

#[test]
fn trace_files_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = scenarios().join("newscs_open_abort.conf");
    let paths = [dir.path().join("one.trace"), dir.path().join("two.trace")];
    for p in &paths {
        let out = fusesim(&["run", conf.to_str().unwrap(), "--trace", p.to_str().unwrap()]);
        assert!(out.status.success());
        assert!(out.stdout.is_empty());
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("verdict punished-deviator"));
    }
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());
}

#[test]
fn seed_override_and_text_format() {
    let conf = scenarios().join("newscs_honest.conf");
    let out = fusesim(&["run", conf.to_str().unwrap(), "--seed", "42"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# seed 42\n"));
    let out = fusesim(&["run", conf.to_str().unwrap(), "--format", "text"]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("newscs d=10 t=12 max_bb=2 seed=1"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "protocol = cs\nparams.t = 2\n").unwrap();
    let out = fusesim(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params"));

    let missing = fusesim(&["run", dir.path().join("nope.conf").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let too_wide = fusesim(&["matrix", "newscs", "--max-bb", "3", "--t", "20"]);
    assert_eq!(too_wide.status.code(), Some(2));
}

#[test]
fn matrices_meet_expectations() {
    for protocol in ["cs", "deposit_refund", "newscs", "scs_legacy"] {
        for m in ["1", "2"] {
            let out = fusesim(&["matrix", protocol, "--max-bb", m]);
            let text = String::from_utf8(out.stdout).unwrap();
            assert_eq!(out.status.code(), Some(0), "{protocol} m={m}\n{text}");
            assert!(text.trim_end().ends_with("as expected"));
            let clean = text.contains("stuck-funds=0") && text.contains("violation=0");
            assert_eq!(clean, protocol != "scs_legacy", "{protocol} m={m}");
        }
    }
}

#[test]
fn matrix_records_are_deterministic() {
    let a = fusesim(&["matrix", "newscs", "--max-bb", "2", "--format", "records"]);
    let b = fusesim(&["matrix", "newscs", "--max-bb", "2", "--format", "records"]);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 144);
}
