//! Subcommand dispatch and artifact writing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Command, ExperimentConfig, StatName};
use super::experiments::{
    adaptive_study, cdf_mse_grid, coverage_grid, mse_grid, rate_study, reference_value, with_workers,
    AdaptiveStudy, Experiment, RateSetting, RateStudy, Reference, StatKind,
};
use super::grid::sig6;
use crate::error::{Error, Result};
use crate::models::{ModelSpec, Process};

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Files written by a run, in write order.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
}

/// Write `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, &target)?;
    Ok(target)
}

struct Writer<'a> {
    dir: &'a Path,
    report: RunReport,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = write_atomic(self.dir, name, contents)?;
        self.report.files.push(path);
        Ok(())
    }
}

/// Run `command` with settings from `cfg`, writing CSVs and `manifest.toml`
/// into `out`.
pub fn run(cfg: &ExperimentConfig, command: Command, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let mut w = Writer {
        dir: out,
        report: RunReport::default(),
    };
    with_workers(cfg.workers, || dispatch(cfg, command, &model, &mut w))??;
    w.put("manifest.toml", &manifest(cfg, command, &w.report))?;
    Ok(w.report)
}

fn dispatch(cfg: &ExperimentConfig, command: Command, model: &ModelSpec, w: &mut Writer<'_>) -> Result<()> {
    let q = cfg.quantile();
    match command {
        Command::Reference => {
            let n = cfg.require_n()?;
            let kind = match cfg.stat {
                StatName::Quantile => StatKind::Quantile { x: cfg.require_x()? },
                StatName::Cdf => StatKind::Cdf {
                    x: cfg.require_x()?,
                    y: cfg.require_y()?,
                },
            };
            let r = resolve_reference(cfg, model, n, kind, false)?;
            w.put("reference.csv", &reference_csv(&[(n, kind, cfg.p, r)]))
        }
        Command::MseGrid => {
            let n = cfg.require_n()?;
            let x = cfg.require_x()?;
            let kind = StatKind::Quantile { x };
            let r = resolve_reference(cfg, model, n, kind, true)?;
            let res = mse_grid(&experiment(cfg, model, n), &cfg.grid.build(n)?, x, r.value)?;
            w.put("reference.csv", &reference_csv(&[(n, kind, cfg.p, r)]))?;
            w.put("mse_grid.csv", &res.to_csv())?;
            w.put("mse_summary.csv", &res.summary_csv("mse"))
        }
        Command::CoverageGrid => {
            let n = cfg.require_n()?;
            let res = coverage_grid(&experiment(cfg, model, n), &cfg.grid.build(n)?, cfg.require_alpha()?)?;
            w.put("coverage_grid.csv", &res.to_csv())
        }
        Command::CdfMseGrid => {
            let n = cfg.require_n()?;
            let (x, y) = (cfg.require_x()?, cfg.require_y()?);
            let kind = StatKind::Cdf { x, y };
            let r = resolve_reference(cfg, model, n, kind, true)?;
            let res = cdf_mse_grid(&experiment(cfg, model, n), &cfg.grid.build(n)?, x, y, r.value)?;
            w.put("reference.csv", &reference_csv(&[(n, kind, cfg.p, r)]))?;
            w.put("cdf_mse_grid.csv", &res.to_csv())?;
            w.put("cdf_mse_summary.csv", &res.summary_csv("cdf_mse"))
        }
        Command::Tune => {
            let n = cfg.require_n()?;
            let kind = StatKind::Quantile { x: cfg.require_x()? };
            let r = resolve_reference(cfg, model, n, kind, true)?;
            let study = adaptive_study(&experiment(cfg, model, n), &cfg.tune_config(n)?, r.value)?;
            w.put("reference.csv", &reference_csv(&[(n, kind, cfg.p, r)]))?;
            w.put("tune_err.csv", &tune_err_csv(&study))?;
            w.put("adaptive.csv", &adaptive_csv(&study))?;
            w.put("adaptive_summary.csv", &adaptive_summary_csv(&study))
        }
        Command::RateStudy => {
            let x = cfg.require_x()?;
            let kind = StatKind::Quantile { x };
            let mut settings = Vec::new();
            let mut refs = Vec::new();
            for n in cfg.require_n_list()? {
                let r = resolve_reference(cfg, model, n, kind, false)?;
                refs.push((n, kind, cfg.p, r));
                settings.push(RateSetting {
                    n,
                    grid: cfg.grid.build(n)?,
                    reference: r.value,
                });
            }
            let study = rate_study(model, &settings, q, x, cfg.replications, cfg.bootstrap, cfg.master_seed)?;
            w.put("reference.csv", &reference_csv(&refs))?;
            w.put("rate_study.csv", &rate_csv(&study))?;
            w.put("rate_slope.csv", &format!("metric,value\nslope,{}\n", sig6(study.slope)))
        }
    }
}

fn experiment<'m>(cfg: &ExperimentConfig, model: &'m ModelSpec, n: usize) -> Experiment<'m> {
    Experiment {
        model,
        n,
        q: cfg.quantile(),
        replications: cfg.replications,
        replicates: cfg.bootstrap,
        master_seed: cfg.master_seed,
    }
}

/// A supplied value (when `allow_supplied`), else the sidecar cache, else a
/// fresh simulation that is then cached.
fn resolve_reference(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    n: usize,
    kind: StatKind,
    allow_supplied: bool,
) -> Result<Reference> {
    if allow_supplied {
        if let Some(value) = cfg.reference {
            return Ok(Reference {
                value,
                stderr: 0.0,
                replications: 0,
            });
        }
    }
    let key = cache_key(cfg, model, n, kind);
    let mut cache = match &cfg.reference_cache {
        Some(path) => read_cache(path)?,
        None => BTreeMap::new(),
    };
    if let Some(r) = cache.get(&key) {
        return Ok(*r);
    }
    let r = reference_value(model, n, kind, cfg.quantile(), cfg.reference_replications, cfg.master_seed)?;
    if let Some(path) = &cfg.reference_cache {
        cache.insert(key, r);
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let name = path
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::config("reference_cache", "not a file path"))?;
        write_atomic(dir, name, &cache_text(&cache))?;
    }
    Ok(r)
}

fn cache_key(cfg: &ExperimentConfig, model: &ModelSpec, n: usize, kind: StatKind) -> String {
    let point = match kind {
        StatKind::Quantile { x } => format!("quantile;x={x}"),
        StatKind::Cdf { x, y } => format!("cdf;x={x};y={y}"),
    };
    format!(
        "{};n={n};p={};{point};replications={};seed={}",
        model.label(),
        cfg.p,
        cfg.reference_replications,
        cfg.master_seed
    )
}

/// Tab-separated `key value stderr replications`; values are stored with full
/// precision so cached and fresh references agree bit for bit.
fn cache_text(cache: &BTreeMap<String, Reference>) -> String {
    let mut out = String::new();
    for (k, r) in cache {
        let _ = writeln!(out, "{k}\t{:?}\t{:?}\t{}", r.value, r.stderr, r.replications);
    }
    out
}

fn read_cache(path: &Path) -> Result<BTreeMap<String, Reference>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(e.into()),
    };
    let bad = |line: &str| Error::config("reference_cache", format!("malformed cache line `{line}`"));
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            let r = Reference {
                value: f[1].parse().map_err(|_| bad(line))?,
                stderr: f[2].parse().map_err(|_| bad(line))?,
                replications: f[3].parse().map_err(|_| bad(line))?,
            };
            Ok((f[0].to_string(), r))
        })
        .collect()
}

fn reference_csv(rows: &[(usize, StatKind, f64, Reference)]) -> String {
    let mut out = String::from("stat,n,p,x,y,value,stderr,replications\n");
    for (n, kind, p, r) in rows {
        let (stat, x, y) = match kind {
            StatKind::Quantile { x } => ("quantile", sig6(*x), String::new()),
            StatKind::Cdf { x, y } => ("cdf", sig6(*x), sig6(*y)),
        };
        let _ = writeln!(
            out,
            "{stat},{n},{},{x},{y},{},{},{}",
            sig6(*p),
            sig6(r.value),
            sig6(r.stderr),
            r.replications
        );
    }
    out
}

fn opt_sig6(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        sig6(v)
    }
}

fn tune_err_csv(study: &AdaptiveStudy) -> String {
    let mut out = String::from("c1,c2,b_n,ell_n,err\n");
    for c in &study.cells {
        let (b, ell) = c.plan.map_or((String::new(), String::new()), |p| (p.b.to_string(), p.ell.to_string()));
        let _ = writeln!(out, "{},{},{b},{ell},{}", sig6(c.c1), sig6(c.c2), opt_sig6(c.mean_err));
    }
    out
}

fn adaptive_csv(study: &AdaptiveStudy) -> String {
    let mut out = String::from("c1,c2,b_n,ell_n,mse,stderr,mean_err,selected\n");
    for c in &study.cells {
        let (b, ell) = c.plan.map_or((String::new(), String::new()), |p| (p.b.to_string(), p.ell.to_string()));
        let _ = writeln!(
            out,
            "{},{},{b},{ell},{},{},{},{}",
            sig6(c.c1),
            sig6(c.c2),
            opt_sig6(c.mse),
            opt_sig6(c.mse_stderr),
            opt_sig6(c.mean_err),
            c.selected
        );
    }
    out
}

fn adaptive_summary_csv(study: &AdaptiveStudy) -> String {
    let best = study.best_fixed();
    let worst = study.worst_fixed();
    format!(
        "metric,value,stderr\nadaptive_mse,{},{}\nbest_fixed_mse,{},{}\nworst_fixed_mse,{},{}\nreplications,{},0\n",
        sig6(study.adaptive_mse),
        sig6(study.adaptive_stderr),
        sig6(best.mse),
        sig6(best.mse_stderr),
        sig6(worst.mse),
        sig6(worst.mse_stderr),
        study.replications
    )
}

fn rate_csv(study: &RateStudy) -> String {
    let mut out = String::from("n,reference,b,ell,mse,stderr\n");
    for p in &study.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.n,
            sig6(p.reference),
            p.best.b,
            p.best.ell,
            sig6(p.best.value),
            sig6(p.best.stderr)
        );
    }
    out
}

#[derive(Serialize)]
struct ManifestRun<'a> {
    command: &'a str,
    master_seed: u64,
    build: &'a str,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    run: ManifestRun<'a>,
    config: &'a ExperimentConfig,
}

fn manifest(cfg: &ExperimentConfig, command: Command, report: &RunReport) -> String {
    let m = Manifest {
        run: ManifestRun {
            command: command.name(),
            master_seed: cfg.master_seed,
            build: BUILD_ID,
            outputs: report
                .files
                .iter()
                .filter_map(|p| p.file_name().and_then(|s| s.to_str()).map(str::to_string))
                .collect(),
        },
        config: cfg,
    };
    toml::to_string(&m).expect("manifest is serializable")
}
