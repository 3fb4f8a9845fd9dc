//! End-to-end checks of the `orvicon` binary: exit codes, file outputs,
//! and the store admin verbs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn orvicon(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orvicon"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn run_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let reference = scenario("reference.toml");

    let run = orvicon(
        &[
            "run",
            "--scenario",
            reference.to_str().unwrap(),
            "--out",
            "report.json",
        ],
        dir.path(),
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("report.json.audit.jsonl").exists());

    let verify = orvicon(
        &[
            "verify",
            "--report",
            "report.json",
            "--audit",
            "report.json.audit.jsonl",
        ],
        dir.path(),
    );
    assert!(
        verify.status.success(),
        "{}",
        String::from_utf8_lossy(&verify.stderr)
    );
    assert!(String::from_utf8_lossy(&verify.stdout).contains("ok"));
}

#[test]
fn tampered_report_fails_verification_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let reference = scenario("reference.toml");
    orvicon(
        &[
            "run",
            "--scenario",
            reference.to_str().unwrap(),
            "--out",
            "report.json",
        ],
        dir.path(),
    );
    let path = dir.path().join("report.json");
    let edited = std::fs::read_to_string(&path)
        .unwrap()
        .replace("\"seed\":20260810", "\"seed\":20260811");
    std::fs::write(&path, edited).unwrap();

    let verify = orvicon(
        &[
            "verify",
            "--report",
            "report.json",
            "--audit",
            "report.json.audit.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(verify.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&verify.stderr).contains("digest"));
}

#[test]
fn invalid_config_exits_2_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenario("reference.toml"))
        .unwrap()
        .replace("end_s = 7200", "end_s = 0");
    std::fs::write(&bad, text).unwrap();

    let run = orvicon(
        &[
            "run",
            "--scenario",
            bad.to_str().unwrap(),
            "--out",
            "report.json",
        ],
        dir.path(),
    );
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("start_s"));
}

#[test]
fn seed_override_changes_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let reference = scenario("reference.toml");
    orvicon(
        &[
            "run",
            "--scenario",
            reference.to_str().unwrap(),
            "--out",
            "a.json",
        ],
        dir.path(),
    );
    orvicon(
        &[
            "run",
            "--scenario",
            reference.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            "b.json",
        ],
        dir.path(),
    );
    let a = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.json")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn store_admin_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let store_arg = store.to_str().unwrap();

    let register = orvicon(
        &[
            "register-sensor",
            "--store",
            store_arg,
            "--device-id",
            "7",
            "--lat",
            "47.5",
            "--lon",
            "16.4",
            "--elevation-m",
            "230",
            "--label",
            "s7",
            "--field-id",
            "field-a",
        ],
        dir.path(),
    );
    assert!(
        register.status.success(),
        "{}",
        String::from_utf8_lossy(&register.stderr)
    );

    let list = orvicon(&["list-datasets", "--store", store_arg], dir.path());
    let stdout = String::from_utf8_lossy(&list.stdout);
    assert!(stdout.contains("ds-field-a"), "{stdout}");
    assert!(stdout.contains("empty"), "{stdout}");

    let inspect = orvicon(&["inspect-store", store_arg], dir.path());
    let stdout = String::from_utf8_lossy(&inspect.stdout);
    assert!(stdout.contains("registrations: 1"), "{stdout}");

    let reconcile = orvicon(&["reconcile-quarantine", "--store", store_arg], dir.path());
    let stdout = String::from_utf8_lossy(&reconcile.stdout);
    assert!(stdout.contains("0 moved"), "{stdout}");

    // duplicate registration with different coordinates is refused
    let conflict = orvicon(
        &[
            "register-sensor",
            "--store",
            store_arg,
            "--device-id",
            "7",
            "--lat",
            "48.0",
            "--lon",
            "16.4",
            "--elevation-m",
            "230",
            "--label",
            "s7",
            "--field-id",
            "field-a",
        ],
        dir.path(),
    );
    assert_eq!(conflict.status.code(), Some(1));
}

#[test]
fn net_mode_and_exports_work_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corner = scenario("corner_frost.toml");
    let run = orvicon(
        &[
            "run",
            "--scenario",
            corner.to_str().unwrap(),
            "--net",
            "--out",
            "report.json",
            "--snapshot-csv",
            "snapshot.csv",
            "--print-zones",
        ],
        dir.path(),
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("snapshot.csv")).unwrap();
    assert!(csv.starts_with("row,col,temp_c\n"));
    assert_eq!(csv.lines().count(), 1 + 12 * 12);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains('0'), "zone map printed: {stdout}");
}

#[test]
fn persistent_store_quarantine_lifecycle() {
    // run with a persistent store; the rogue sensor 209 is quarantined, a
    // late registration plus reconcile moves its readings into the dataset
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let text = std::fs::read_to_string(scenario("reference.toml"))
        .unwrap()
        .replace(
            "[provider]\nmember_id = \"provider-1\"",
            &format!(
                "[provider]\nmember_id = \"provider-1\"\nstore_dir = \"{}\"",
                store.display()
            ),
        );
    let modified = dir.path().join("persistent.toml");
    std::fs::write(&modified, text).unwrap();

    let run = orvicon(
        &[
            "run",
            "--scenario",
            modified.to_str().unwrap(),
            "--out",
            "report.json",
        ],
        dir.path(),
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );

    let inspect = orvicon(&["inspect-store", store.to_str().unwrap()], dir.path());
    let stdout = String::from_utf8_lossy(&inspect.stdout);
    assert!(stdout.contains("quarantined readings: 13"), "{stdout}");

    // device 209 sits at cell (6, 6) of the reference field; the exact
    // coordinates don't matter for the move, only that it is registered
    let register = orvicon(
        &[
            "register-sensor",
            "--store",
            store.to_str().unwrap(),
            "--device-id",
            "209",
            "--lat",
            "47.5",
            "--lon",
            "16.4",
            "--elevation-m",
            "209.75",
            "--label",
            "se-rogue",
            "--field-id",
            "field-a",
        ],
        dir.path(),
    );
    assert!(
        register.status.success(),
        "{}",
        String::from_utf8_lossy(&register.stderr)
    );

    let reconcile = orvicon(
        &["reconcile-quarantine", "--store", store.to_str().unwrap()],
        dir.path(),
    );
    let stdout = String::from_utf8_lossy(&reconcile.stdout);
    assert!(stdout.contains("13 moved"), "{stdout}");
    assert!(stdout.contains("0 still quarantined"), "{stdout}");

    let inspect = orvicon(&["inspect-store", store.to_str().unwrap()], dir.path());
    let stdout = String::from_utf8_lossy(&inspect.stdout);
    assert!(stdout.contains("quarantined readings: 0"), "{stdout}");
    // 104 stored during the run + 13 reconciled
    assert!(stdout.contains("117 records"), "{stdout}");
}
