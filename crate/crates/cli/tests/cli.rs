//! End-to-end tests of the binary: reproducibility, file formats, and error
//! reporting.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mrlat() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mrlat"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = mrlat().args(args).output().expect("spawn mrlat");
    assert!(
        out.status.success(),
        "mrlat {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mrlat-test-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn calibrate_reports_expected_numbers() {
    let out = run_ok(&["calibrate"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("291 Hz/(site A)"), "report:\n{text}");
    assert!(text.contains("671 Hz/(um A)"));
    assert!(text.contains("13.074 kHz"));
    let exact = run_ok(&["calibrate", "--exact-gamma"]);
    let text = String::from_utf8(exact.stdout).unwrap();
    assert!(text.contains("-273.6 uG/(um A)"), "report:\n{text}");
}

#[test]
fn plan_simulate_round_trip_is_byte_identical() {
    let dir = tmp_dir("repro");
    let plan_dir = dir.join("plan");
    run_ok(&[
        "plan",
        "--pattern",
        "0,2,16,18,32,34",
        "--current",
        "45",
        "--loops",
        "2",
        "--out",
        plan_dir.to_str().unwrap(),
    ]);
    let plan_file = plan_dir.join("pattern.plan");
    assert!(plan_file.exists());

    let common = [
        "simulate",
        "--plan",
        plan_file.to_str().unwrap(),
        "--shots",
        "40",
        "--rho0",
        "64e-6",
        "--drift",
        "10e-9",
        "--seed",
        "7",
    ];
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let out_c = dir.join("c");
    run_ok(&[&common[..], &["--out", out_a.to_str().unwrap()]].concat());
    run_ok(&[&common[..], &["--out", out_b.to_str().unwrap()]].concat());
    // Different worker count must not change a single byte.
    run_ok(&[&common[..], &["--workers", "1", "--out", out_c.to_str().unwrap()]].concat());
    for file in ["shots.csv", "summary.csv", "drift.csv"] {
        let a = read(&out_a.join(file));
        assert_eq!(a, read(&out_b.join(file)), "{file} differs between reruns");
        assert_eq!(a, read(&out_c.join(file)), "{file} differs across worker counts");
    }
    let manifest = fs::read_to_string(out_a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = simulate"));
    assert!(manifest.contains("seed = 7"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn plan_file_round_trips_through_parser() {
    let dir = tmp_dir("planrt");
    run_ok(&[
        "plan",
        "--pattern",
        "0,17,34,51,68,85,102,119",
        "--current",
        "45",
        "--out",
        dir.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(dir.join("pattern.plan")).unwrap();
    let plan = mrlat::io::parse_plan(&text).unwrap();
    assert_eq!(plan.pulses.len(), 8);
    let again = mrlat::io::parse_plan(&mrlat::io::serialize_plan(&plan)).unwrap();
    assert_eq!(plan, again);
    // The planner's frequencies satisfy the lattice-periodicity condition.
    let cfg = mrlat::ApparatusConfig::default();
    let freqs: Vec<f64> = plan.pulses.iter().map(|p| p.descriptor.center_offset).collect();
    mrlat::planner::validate_commensurability(&freqs, plan.current, &cfg, 1e-6).unwrap();
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let dir = tmp_dir("badcfg");
    let cfg = dir.join("bad.cfg");
    fs::write(&cfg, "[apparatus]\nguiding_field = 3 G\nflux_capacitance = 12\n").unwrap();
    let out = mrlat()
        .args(["calibrate", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("flux_capacitance"), "stderr:\n{err}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn config_with_unit_suffixes_is_accepted() {
    let dir = tmp_dir("unitcfg");
    let cfg = dir.join("ok.cfg");
    fs::write(
        &cfg,
        "[apparatus]\nt2 = 200 us\nguiding_field = 3 G\n\n[simulation]\ndrift_rate = 10 nm/s\n",
    )
    .unwrap();
    run_ok(&["calibrate", "--config", cfg.to_str().unwrap()]);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn infeasible_deconvolution_exits_with_numerical_failure() {
    let out = mrlat().args(["analyze", "deconvolve", "--width", "0.25"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn spectrum_writes_parseable_csv() {
    let dir = tmp_dir("spec");
    run_ok(&[
        "spectrum",
        "--sigma-t",
        "20e-6",
        "--loops",
        "2",
        "--position-space",
        "45",
        "--out",
        dir.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(dir.join("spectrum.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "detuning_hz,transfer");
    let mut last = f64::NEG_INFINITY;
    for line in lines {
        let mut cols = line.split(',');
        let d: f64 = cols.next().unwrap().parse().unwrap();
        let p: f64 = cols.next().unwrap().parse().unwrap();
        assert!(d > last, "detunings strictly increasing");
        assert!((0.0..=1.0).contains(&p));
        last = d;
    }
    assert!(dir.join("position_space.csv").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn simulate_images_are_reproducible_pgm() {
    let dir = tmp_dir("img");
    let plan_dir = dir.join("plan");
    run_ok(&["plan", "--pattern", "0,2", "--out", plan_dir.to_str().unwrap()]);
    let plan = plan_dir.join("pattern.plan");
    let a = dir.join("a");
    let b = dir.join("b");
    for out in [&a, &b] {
        run_ok(&[
            "simulate",
            "--plan",
            plan.to_str().unwrap(),
            "--shots",
            "3",
            "--extent",
            "40",
            "--seed",
            "11",
            "--images",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    let img_a = read(&a.join("images/shot_00000.pgm"));
    assert!(img_a.starts_with(b"P5\n"));
    assert_eq!(img_a, read(&b.join("images/shot_00000.pgm")));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn full_pipeline_histogram_runs() {
    let dir = tmp_dir("pipe");
    let plan_dir = dir.join("plan");
    run_ok(&[
        "plan",
        "--pattern",
        "0,2,16,18,32,34",
        "--loops",
        "2",
        "--out",
        plan_dir.to_str().unwrap(),
    ]);
    let sim_dir = dir.join("sim");
    run_ok(&[
        "simulate",
        "--plan",
        plan_dir.join("pattern.plan").to_str().unwrap(),
        "--shots",
        "120",
        "--rho0",
        "64e-6",
        "--drift",
        "10e-9",
        "--seed",
        "5",
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    let hist_dir = dir.join("hist");
    let out = run_ok(&[
        "analyze",
        "histogram",
        "--run",
        sim_dir.to_str().unwrap(),
        "--pairs",
        "1,17,33",
        "--seed",
        "5",
        "--out",
        hist_dir.to_str().unwrap(),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("pair-distance histogram"), "output:\n{text}");
    assert!(hist_dir.join("histogram.csv").exists());
    let _ = fs::remove_dir_all(&dir);
}
