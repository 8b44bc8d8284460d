use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

const SMOKE: &str = r#"
command = "mse-grid"
n = 50
x = 1.0
replications = 50
bootstrap = 50
reference_replications = 2000
master_seed = 11

[model]
name = "arma11"
"#;

fn hbb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbb")).args(args).output().expect("hbb runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn csvs(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_str().unwrap().to_string(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn missing_model_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "command = \"mse-grid\"\nn = 50\nx = 1.0\n");
    let out = hbb(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`model`"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_key_and_subcommand_needs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 50\nwidth = 3\n[model]\nname = \"arma11\"\n");
    let out = hbb(&["reference", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));

    let cfg = write_config(dir.path(), "n = 50\n[model]\nname = \"arma11\"\n");
    let out = hbb(&["coverage-grid", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`alpha`"));

    let out = hbb(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`command`"));
}

#[test]
fn smoke_run_is_fast_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    let out = hbb(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]);
    let elapsed = start.elapsed();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(elapsed < Duration::from_secs(5), "{elapsed:?}");
    let out = hbb(&["run", "--config", &cfg, "--out", b.to_str().unwrap()]);
    assert!(out.status.success());
    let (ca, cb) = (csvs(&a), csvs(&b));
    assert_eq!(
        ca.iter().map(|c| c.0.as_str()).collect::<Vec<_>>(),
        ["mse_grid.csv", "mse_summary.csv", "reference.csv"]
    );
    assert_eq!(ca, cb);
    assert_eq!(fs::read(a.join("manifest.toml")).unwrap(), fs::read(b.join("manifest.toml")).unwrap());

    let grid = &ca[0].1;
    assert!(grid.starts_with("b,ell,metric,value,stderr\n"));
    assert!(!grid.contains('\r'));
    for line in grid.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (v, se): (f64, f64) = (f[3].parse().unwrap(), f[4].parse().unwrap());
        assert!((0.0..=1.0).contains(&v) && se >= 0.0, "{line}");
    }
    let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("master_seed = 11"));
    assert!(manifest.contains(concat!("hybrid-bootstrap ", env!("CARGO_PKG_VERSION"))));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(hbb(&["mse-grid", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(hbb(&["mse-grid", "--config", &cfg, "--seed", "12", "--out", b.to_str().unwrap()]).status.success());
    assert_ne!(csvs(&a), csvs(&b));
    assert!(fs::read_to_string(b.join("manifest.toml")).unwrap().contains("master_seed = 12"));
}

#[test]
fn supplied_reference_and_cache_are_used() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("refs.tsv");
    let text = SMOKE.replace("[model]", &format!("reference_cache = {:?}\n[model]", cache.to_str().unwrap()));
    let cfg = write_config(dir.path(), &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(hbb(&["reference", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    let cached = fs::read_to_string(&cache).unwrap();
    assert_eq!(cached.lines().count(), 1);
    assert!(hbb(&["reference", "--config", &cfg, "--out", b.to_str().unwrap()]).status.success());
    assert_eq!(fs::read_to_string(&cache).unwrap(), cached);
    assert_eq!(csvs(&a), csvs(&b));

    let cfg = write_config(dir.path(), &SMOKE.replace("x = 1.0", "x = 1.0\nreference = 0.5"));
    let c = dir.path().join("c");
    assert!(hbb(&["mse-grid", "--config", &cfg, "--out", c.to_str().unwrap()]).status.success());
    assert!(fs::read_to_string(c.join("reference.csv")).unwrap().contains(",0.5,0,0\n"));
}
