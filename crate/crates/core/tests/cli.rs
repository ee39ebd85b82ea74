use std::path::Path;
use std::process::Command;

fn nldirac(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nldirac")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
[graph]
preset = "interval"
length = 3.0

[solver]
mass = 1.0
c = 1.0
h = 0.1

[potential]
v_infinity = 0.3
wells = [{ center = { edge = 0, s = 1.5 }, depth = 0.5, width = 0.5 }]
"#;

#[test]
fn validate_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL);
    let out = dir.path().join("out");
    let o = nldirac(&["validate", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[potential] PASS"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "validate");
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["config"]["solver"]["mass"], 1.0);
    assert!(out.join("validate.txt").exists());
}

#[test]
fn spectrum_csv_is_sorted_by_index() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &format!("{SMALL}\n[run]\nspectrum_count = 6\n"));
    let out = dir.path().join("out");
    let o = nldirac(&["spectrum", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "index,lambda");
    assert_eq!(rows.len(), 7);
    let mut got: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    got.sort_by(f64::total_cmp);
    let k = |n: f64| (1.0 + (n * std::f64::consts::PI / 3.0).powi(2)).sqrt();
    let expected = [-k(2.0), -k(1.0), 1.0, k(1.0), k(2.0)];
    assert!(expected.iter().all(|e| got.iter().any(|g| (g - e).abs() < 1e-2 * e.abs())), "{got:?}");
    assert!(out.join("spectrum.svg").exists());
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMALL.replace("mass = 1.0\n", ""));
    let o = nldirac(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("solver") && err.contains("mass"), "{err}");

    let o = nldirac(&["validate", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = write(dir.path(), "deep.toml", &SMALL.replace("depth = 0.5", "depth = 1.5"));
    let o = nldirac(&["validate", "--config", &cfg, "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn ground_on_the_interval_reports_a_half_soliton() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &format!("{SMALL}\n[nehari]\nmultistart = 2\n"));
    let out = dir.path().join("out");
    let o = nldirac(&["ground", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("ground.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let level: f64 = row[1].parse().unwrap();
    assert!(level > 0.0 && level < 1.0, "{level}");
    let profile = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    assert!(profile.starts_with("edge,s,abs_u1,abs_u2\n"));
}
