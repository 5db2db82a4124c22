//! End-to-end checks of the compiled binary: subcommands, config errors
//! and manifest integrity.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavelab"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wavelab-cli-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn exponents_single_and_sweep() {
    let dir = tmpdir("exp");
    let out = bin()
        .args(["exponents", "--d", "5", "--p", "9/4"])
        .args(["--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("exponents.csv")).unwrap();
    assert!(csv.contains("5,9/4,7/3,9/10,17/8,34/7,13/36,17/9"), "{csv}");

    let out = bin()
        .args(["exponents", "--d", "4", "--table-sweep"])
        .args(["--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("exponents.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);

    // out-of-range p fails with the named bound
    let out = bin()
        .args(["exponents", "--d", "3", "--p", "3"])
        .args(["--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("1+6/d = 3"));
}

#[test]
fn simulate_writes_series_and_manifest() {
    let dir = tmpdir("sim");
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        r#"
[grid]
mode = "radial"
d = 3
h = 0.05
extent = 24.0
dt = 0.025

[problem]
p = 4.0
data = "gaussian-odd"
support_radius = 4.0
t_end = 4.0

[diagnostics]
observe_every = 20
cone_offsets = [0.0, 2.0]
shell = [0.0, 2.0]
"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .args(["--out", out_dir.to_str().unwrap()])
        .args(["--snapshot-every", "80"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["energy.csv", "flux_R0.csv", "flux_R2.csv", "morawetz.csv", "manifest.toml"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    // snapshots round-trip through the binary format
    assert!(out_dir.join("snapshot_000080.cwv").exists());

    // self-hosting reproducibility: rerunning from the echoed config
    // reproduces the series byte for byte
    let out_dir2 = dir.join("out2");
    let out = bin()
        .args(["simulate", "--config", out_dir.join("config.toml").to_str().unwrap()])
        .args(["--out", out_dir2.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(out_dir.join("energy.csv")).unwrap();
    let b = std::fs::read(out_dir2.join("energy.csv")).unwrap();
    assert_eq!(a, b, "config echo did not reproduce the run");

    // a config violating the budget is rejected with the constraint
    let bad = std::fs::read_to_string(&cfg).unwrap().replace("t_end = 4.0", "t_end = 40.0");
    std::fs::write(&cfg, bad).unwrap();
    let out = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .args(["--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("causality budget"));
}

#[test]
fn radiation_and_decompose_subcommands() {
    let dir = tmpdir("raddec");
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        r#"
[grid]
mode = "radial"
d = 3
h = 0.05
extent = 26.0
dt = 0.025

[problem]
p = 4.0
data = "gaussian-odd"
support_radius = 4.0
t_end = 8.0

[diagnostics]
observe_every = 40
cone_offsets = [0.0]
shell = [0.0, 2.0]
window = [-3.0, 3.0]

[decomposition]
release_times = [4.0]
r1 = 0.0
r2 = 2.0
"#,
    )
    .unwrap();

    let rad_out = dir.join("rad");
    let out = bin()
        .args(["radiation", "--config", cfg.to_str().unwrap()])
        .args(["--out", rad_out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["radiation.csv", "gfield.csv", "manifest.toml"] {
        assert!(rad_out.join(f).exists(), "missing {f}");
    }

    let dec_out = dir.join("dec");
    let out = bin()
        .args(["decompose", "--config", cfg.to_str().unwrap()])
        .args(["--out", dec_out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["decomposition_T4.csv", "decomposition_summary.csv"] {
        assert!(dec_out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn validate_writes_convergence_table() {
    let dir = tmpdir("validate");
    let out = bin()
        .args(["validate", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("h,max_err,observed_order"));
    assert_eq!(csv.lines().count(), 4); // header + three grids
    assert!(dir.join("isometry.csv").exists());
}

#[test]
fn preset_exponent_table_deterministic() {
    let d1 = tmpdir("preset1");
    let d2 = tmpdir("preset2");
    for d in [&d1, &d2] {
        let out = bin()
            .args(["--deterministic", "preset", "exponent-table"])
            .args(["--out", d.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(d1.join("exponents.csv")).unwrap();
    let b = std::fs::read(d2.join("exponents.csv")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(d1.join("manifest.toml")).unwrap();
    let b = std::fs::read(d2.join("manifest.toml")).unwrap();
    assert_eq!(a, b);
}
