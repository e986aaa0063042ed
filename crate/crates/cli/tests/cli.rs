use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tlg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlg")).current_dir(dir).args(args).output().expect("spawn tlg")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn demo_netlist() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../netlists/demo_3x4.net")
}

#[test]
fn calibration_file_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let first = tlg(dir.path(), &["calibrate", "--out-dir", "a"]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(code(&tlg(dir.path(), &["calibrate", "--out-dir", "b"])), 0);
    let a = std::fs::read(dir.path().join("a/calibration.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/calibration.json")).unwrap();
    assert_eq!(a, b);
    assert!(stdout(&first).contains("noise margin"));
}

#[test]
fn truth_table_needs_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlg(dir.path(), &["truth-table", "NAND"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("calibrate"));
}

#[test]
fn nand_truth_table_after_calibration() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tlg(dir.path(), &["calibrate"])), 0);
    let o = tlg(dir.path(), &["truth-table", "nand"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("rc1=r_on rc2=r_off vc=0.8"), "{text}");
    let rows: Vec<&str> = text.lines().filter(|l| l.contains('|') && !l.starts_with('a')).collect();
    assert_eq!(rows, ["0 0 | 1", "0 1 | 1", "1 0 | 1", "1 1 | 0"]);
}

#[test]
fn manual_calibration_from_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "v_th1 = 0.6333333333333333V\nv_th2 = 0.5841431645934871\ng_x = 30.628128992384996uS\n",
    )
    .unwrap();
    let o = tlg(dir.path(), &["truth-table", "XNOR", "--variant", "reduced", "--config", "run.cfg"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("1 1 | 1"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tlg(dir.path(), &["truth-table", "XOR"])), 2);
    assert_eq!(code(&tlg(dir.path(), &["frobnicate"])), 2);
    std::fs::write(dir.path().join("bad.cfg"), "rows = 3\nnot_a_key = 1\n").unwrap();
    let o = tlg(dir.path(), &["calibrate", "--config", "bad.cfg"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(code(&tlg(dir.path(), &["map-run"])), 2);
}

#[test]
fn over_capacity_netlist_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("input a\ninput b\n");
    for i in 0..13 {
        text.push_str(&format!("g{i} = NAND(a, b)\noutput g{i}\n"));
    }
    std::fs::write(dir.path().join("big.net"), text).unwrap();
    let o = tlg(dir.path(), &["map-run", "--netlist", "big.net"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("place:"));
}

#[test]
fn parse_errors_are_tagged() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.net"), "input a\ninput b\ng = XOR(a, b)\n").unwrap();
    let o = tlg(dir.path(), &["map-run", "--netlist", "bad.net"]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr).into_owned();
    assert!(err.contains("parse:") && err.contains("XOR"), "{err}");
}

#[test]
fn demo_netlist_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let net = demo_netlist();
    let o = tlg(dir.path(), &["map-run", "--netlist", net.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("verified 16/16 vectors, 0 mismatches"));
    let report = std::fs::read_to_string(dir.path().join("out/verify.json")).unwrap();
    assert!(report.contains("\"mismatches\": 0"), "{report}");
    assert!(dir.path().join("out/waveform.csv").exists());
    assert!(dir.path().join("out/array.txt").exists());
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = tlg(dir.path(), &["program", "--seed", "7", "--rows", "4", "--variant", "reduced", "--out-dir", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["program.json", "schedules.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn too_short_pulse_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("short.cfg"), "pulse = 1ns\n").unwrap();
    let net = demo_netlist();
    let o = tlg(dir.path(), &["program", "--config", "short.cfg", "--netlist", net.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("program:"));
}

#[test]
fn report_includes_reference_for_default_array() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlg(dir.path(), &["report"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("switch             x126"), "{text}");
    assert!(text.contains("reference area 1462.6728 um2"), "{text}");
    assert!(dir.path().join("out/report.json").exists());
    assert_eq!(code(&tlg(dir.path(), &["report", "--power-mode", "fastest"])), 2);
}

#[test]
fn simulate_cell_writes_waveform() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tlg(dir.path(), &["calibrate"])), 0);
    let o = tlg(dir.path(), &["simulate-cell", "NOR", "--a", "1", "--b", "0", "--hold", "200ns"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/cell_nor_full.csv")).unwrap();
    assert!(csv.starts_with("time,"));
    assert!(stdout(&o).contains("largest state change over the read: 0e0"));
}
