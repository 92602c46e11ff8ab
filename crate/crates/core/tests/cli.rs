use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_landau");

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("LANDAU_CACHE_DIR")
        .output()
        .expect("spawn landau")
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("run.cfg"), body).unwrap();
}

const SMALL: &str = "gamma = 0\nN = 5\ndt = 1e-2\nt_end = 0.05\nepsilon0 = 1e-2\nseed = 4\n[output]\nsnapshot_every = 1\n[verify]\nsamples = 2\nm_max = 2\n";

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn assemble_writes_matrices_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    write_config(d.path(), SMALL);
    let out = run(&["assemble", "--config", "run.cfg", "--out-dir", "a"], d.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a = d.path().join("a");
    for f in ["L1.bin", "L1.mtx", "L2.bin", "L2.mtx", "assemble.json", "manifest.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let rep = json(&a.join("assemble.json"));
    assert!(rep["oracle_residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(rep["modes"].as_u64(), Some(56));
    let m = json(&a.join("manifest.json"));
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let mut sorted = outputs.clone();
    sorted.sort();
    assert_eq!(outputs, sorted);
    assert!(outputs.contains(&"L1.mtx"));
    let text = fs::read_to_string(a.join("L1.mtx")).unwrap();
    assert!(text.starts_with("%%MatrixMarket matrix"));
}

#[test]
fn runs_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    write_config(d.path(), SMALL);
    for dir in ["x", "y"] {
        let out = run(&["simulate", "--config", "run.cfg", "--out-dir", dir], d.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["trajectory.csv", "snapshots.bin", "simulate.json", "manifest.json"] {
        let a = fs::read(d.path().join("x").join(f)).unwrap();
        let b = fs::read(d.path().join("y").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn simulate_then_fit() {
    let d = tempfile::tempdir().unwrap();
    write_config(d.path(), SMALL);
    let out = run(&["simulate", "--config", "run.cfg", "--out-dir", "s"], d.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(d.path().join("s/trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,l2_sq,sigma_sq,int_sigma_sq,energy_residual\n"));
    assert_eq!(csv.lines().count(), 1 + 6);
    let out = run(&["fit", "s", "--out-dir", "f", "--m-max", "2"], d.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mf = fs::read_to_string(d.path().join("f/mfactorial.csv")).unwrap();
    assert!(mf.starts_with("t,m,b_m,r_m\n"));
    assert_eq!(mf.lines().count(), 1 + 6 * 3);
    let rep = json(&d.path().join("f/fit.json"));
    assert_eq!(rep["sup_r"].as_array().unwrap().len(), 3);
}

#[test]
fn seed_flag_changes_datum() {
    let d = tempfile::tempdir().unwrap();
    write_config(d.path(), SMALL);
    run(&["simulate", "--config", "run.cfg", "--out-dir", "a"], d.path());
    run(&["simulate", "--config", "run.cfg", "--seed", "5", "--out-dir", "b"], d.path());
    let a = fs::read(d.path().join("a/snapshots.bin")).unwrap();
    let b = fs::read(d.path().join("b/snapshots.bin")).unwrap();
    assert_ne!(a, b);
    assert_eq!(json(&d.path().join("b/manifest.json"))["seeds"][0].as_u64(), Some(5));
}

#[test]
fn verify_reports_every_suite() {
    let d = tempfile::tempdir().unwrap();
    write_config(d.path(), SMALL);
    let out = run(
        &["verify", "--config", "run.cfg", "--suite", "leibniz,coercivity,norms,ladder", "--out-dir", "v"],
        d.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&d.path().join("v/verify.json"));
    assert_eq!(s["identity_violations"].as_u64(), Some(0));
    assert_eq!(s["suites"].as_array().unwrap().len(), 4);
    assert!(d.path().join("v/verify_leibniz.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    write_config(d.path(), SMALL);
    let out = run(&["verify", "--config", "run.cfg", "--suite", "bogus"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert_eq!(run(&["simulate", "--config", "missing.cfg"], d.path()).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"], d.path()).status.code(), Some(1));
    assert_eq!(run(&["--help"], d.path()).status.code(), Some(0));
    write_config(d.path(), "gamma = 0\nN = 5\nwidth = 3\n");
    let out = run(&["assemble", "--config", "run.cfg"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config line 3"));
}

#[test]
fn fit_rejects_empty_trajectory() {
    let d = tempfile::tempdir().unwrap();
    landau_hermite::io::write_snapshots(&d.path().join("empty.bin"), &[]).unwrap();
    let out = run(&["fit", "empty.bin"], d.path());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn table_cache_round_trip() {
    let d = tempfile::tempdir().unwrap();
    write_config(d.path(), SMALL);
    let cache = d.path().join("cache");
    let go = |dir: &str| {
        Command::new(BIN)
            .args(["assemble", "--config", "run.cfg", "--out-dir", dir])
            .current_dir(d.path())
            .env("LANDAU_CACHE_DIR", &cache)
            .output()
            .unwrap()
    };
    assert_eq!(go("a").status.code(), Some(0));
    assert_eq!(go("b").status.code(), Some(0));
    assert_eq!(json(&d.path().join("a/manifest.json"))["table_cache"], "miss");
    assert_eq!(json(&d.path().join("b/manifest.json"))["table_cache"], "hit");
    assert_eq!(
        fs::read(d.path().join("a/L1.bin")).unwrap(),
        fs::read(d.path().join("b/L1.bin")).unwrap()
    );
}
