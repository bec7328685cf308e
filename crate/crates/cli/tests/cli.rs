use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nvbath::cce::CoherenceCurve;

fn nvbath(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvbath")).args(args).current_dir(dir).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bath_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["bath", "--density", "3", "--thickness", "5", "--seed", "7"];
    ok(&nvbath(&[&args[..], &["--out", "a.json"]].concat(), dir.path()));
    ok(&nvbath(&[&args[..], &["--out", "b.json", "--threads", "2"]].concat(), dir.path()));
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let other = nvbath(&["bath", "--density", "3", "--thickness", "5", "--seed", "8", "--out", "c.json"], dir.path());
    ok(&other);
    assert_ne!(a, std::fs::read(dir.path().join("c.json")).unwrap());
}

#[test]
fn zero_density_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = nvbath(&["bath", "--density", "0", "--thickness", "5"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("density must be positive"));
    assert!(!dir.path().join("bath.json").exists());
}

#[test]
fn missing_bath_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = nvbath(&["coherence", "--kind", "ramsey", "--bath", "nowhere.json"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.json"));
}

#[test]
fn missing_measurement_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = nvbath(&["mle", "--library", "lib.json", "--data", "t2.txt", "--thickness", "4"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn six_spin_hahn_matches_exact_propagation() {
    // The fixture curve is full-Hilbert-space propagation of the same bath,
    // averaged over the same eight sampled states (seed 3); at order 6 the
    // expansion is complete.
    let dir = tempfile::tempdir().unwrap();
    let bath = fixture("six_spin_bath.json");
    let o = nvbath(
        &[
            "coherence", "--kind", "hahn", "--bath", bath.to_str().unwrap(), "--order", "6", "--nstates", "8",
            "--radius-factor", "100", "--mode", "mean-field", "--t-max", "0.02", "--ntimes", "41", "--seed", "3",
            "--out", "hahn.csv",
        ],
        dir.path(),
    );
    ok(&o);
    let got = CoherenceCurve::load(&dir.path().join("hahn.csv")).unwrap();
    let want = CoherenceCurve::load(&fixture("six_spin_hahn_exact.csv")).unwrap();
    assert_eq!(got.times, want.times);
    let d = got.max_abs_difference(&want);
    assert!(d < 1e-8, "max |dL| = {d:e}");
    // the curve actually decays over the window
    assert!(want.magnitudes().iter().cloned().fold(1.0, f64::min) < 0.95);
}

#[test]
fn ramsey_on_empty_bath_is_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(&nvbath(
        &["bath", "--density", "0.000001", "--thickness", "0.2", "--lateral-radius", "1", "--out", "empty.json"],
        dir.path(),
    ));
    ok(&nvbath(&["coherence", "--kind", "ramsey", "--bath", "empty.json", "--out", "r.csv"], dir.path()));
    let c = CoherenceCurve::load(&dir.path().join("r.csv")).unwrap();
    assert!(!c.is_empty());
    assert!(c.values.iter().all(|z| z.re == 1.0 && z.im == 0.0));
}

#[test]
fn library_then_mle_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let lib = ["library", "--thicknesses", "2,4", "--densities", "1:5:3", "--nconfigs", "80", "--seed", "4"];
    ok(&nvbath(&[&lib[..], &["--out", "lib.json"]].concat(), dir.path()));
    ok(&nvbath(&[&lib[..], &["--out", "lib2.json"]].concat(), dir.path()));
    assert_eq!(std::fs::read(dir.path().join("lib.json")).unwrap(), std::fs::read(dir.path().join("lib2.json")).unwrap());
    std::fs::write(dir.path().join("t2.txt"), "# T2* in us\n1.0\n1.6\n0.8\n2.5\n1.2\n").unwrap();
    let o = nvbath(&["mle", "--library", "lib.json", "--data", "t2.txt", "--thickness", "4"], dir.path());
    ok(&o);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("mle.json")).unwrap()).unwrap();
    let rho = report["estimate"]["rho_mle"].as_f64().unwrap();
    assert!((1.0..=5.0).contains(&rho));
    assert!(report["estimate"]["rho_sigma"].as_f64().unwrap() > 0.0);
    assert_eq!(report["schema"], "nvbath.mle/1");
    assert!(String::from_utf8_lossy(&o.stdout).contains("rho_mle"));
}

#[test]
fn yield_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = nvbath(
        &["yield", "--densities", "1:10:log:3", "--thicknesses", "1:50:4", "--configs", "200", "--seed", "2"],
        dir.path(),
    );
    ok(&o);
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("yield.json")).unwrap()).unwrap();
    assert_eq!(r["schema"], "nvbath.yield/1");
    assert_eq!(r["densities"].as_array().unwrap().len(), 3);
    assert_eq!(r["thicknesses"].as_array().unwrap().len(), 4);
    assert_eq!(r["cells"].as_array().unwrap().len(), 12);
    assert_eq!(r["seed"], 2);
    let table = std::fs::read_to_string(dir.path().join("yield.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("density_ppm,thickness_nm,yield")));
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 13);
}

#[test]
fn sweep_writes_grid_and_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(&nvbath(&["sweep", "--thicknesses", "2", "--densities", "1,3", "--nconfigs", "20", "--seed", "1"], dir.path()));
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(table.contains("# seed: 1"));
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn bad_axis_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = nvbath(&["yield", "--densities", "5:1", "--thicknesses", "1,2"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--densities"));
}
