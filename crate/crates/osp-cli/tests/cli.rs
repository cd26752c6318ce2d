use std::path::{Path, PathBuf};
use std::process::Command;

fn osp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_osp"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn no_args_prints_usage_and_fails() {
    let out = osp().output().unwrap();
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"), "no usage text: {text}");
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let out = osp().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.to_lowercase().contains("usage"), "{text}");
}

#[test]
fn missing_topology_file_is_diagnosed() {
    let tmp = std::env::temp_dir().join("osp-cli-missing");
    let out = osp()
        .args(["discover", "--topology", "/nonexistent/net.gml", "--out"])
        .arg(&tmp)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("error"), "{text}");
}

#[test]
fn discover_writes_csv_and_summary() {
    let tmp = std::env::temp_dir().join("osp-cli-discover");
    let _ = std::fs::remove_dir_all(&tmp);
    let out = osp()
        .args(["discover", "--reps", "2", "--seed", "7", "--topology"])
        .arg(scenarios().join("line5.txt"))
        .arg("--out")
        .arg(&tmp)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean_ngc"), "{stdout}");
    let csv = std::fs::read_to_string(tmp.join("discovery.csv")).unwrap();
    assert!(csv.starts_with("pts_size,mean_ngc,ci95_lo,ci95_hi,t_gd_s"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn distribute_with_radius_override_writes_table() {
    let tmp = std::env::temp_dir().join("osp-cli-distribute");
    let _ = std::fs::remove_dir_all(&tmp);
    let out = osp()
        .args([
            "distribute",
            "--reps",
            "1",
            "--seed",
            "3",
            "--r",
            "1",
            "--payload",
            "64",
            "--pairs",
            "2",
            "--topology",
        ])
        .arg(scenarios().join("star5.txt"))
        .arg("--out")
        .arg(&tmp)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(tmp.join("distribute.csv")).unwrap();
    assert!(csv.starts_with("l,r,cases,"));
    assert!(csv.lines().count() > 1);
    // the star only has L in {1, 2}; every row carries the forced radius 1
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "1");
    }
}

#[test]
fn identical_seeds_give_byte_identical_csvs() {
    let run = |dir: &Path| {
        let out = osp()
            .args(["sweep", "--reps", "2", "--seed", "5", "--pts", "1", "--topology"])
            .arg(scenarios().join("line5.txt"))
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(dir.join("sweep.csv")).unwrap()
    };
    let a_dir = std::env::temp_dir().join("osp-cli-det-a");
    let b_dir = std::env::temp_dir().join("osp-cli-det-b");
    let _ = std::fs::remove_dir_all(&a_dir);
    let _ = std::fs::remove_dir_all(&b_dir);
    let a = run(&a_dir);
    let b = run(&b_dir);
    assert_eq!(a, b);
}

#[test]
fn trace_export_is_line_structured() {
    let tmp = std::env::temp_dir().join("osp-cli-trace");
    let _ = std::fs::remove_dir_all(&tmp);
    std::fs::create_dir_all(&tmp).unwrap();
    let trace = tmp.join("events.log");
    let out = osp()
        .args(["discover", "--reps", "1", "--seed", "2", "--topology"])
        .arg(scenarios().join("line5.txt"))
        .arg("--out")
        .arg(&tmp)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.lines().count() > 10);
    assert!(text.lines().all(|l| l.starts_with("t=")));
    assert!(text.contains("recv kind=registration"));
}
