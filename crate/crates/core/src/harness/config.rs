//! TOML experiment configuration.
//!
//! ```toml
//! command = "mse-grid"
//! n = 200
//! x = 1.0
//! replications = 2000
//! bootstrap = 2000
//! master_seed = 1
//!
//! [model]
//! name = "arma11"
//!
//! [grid]
//! b_max = 40
//! ell_max = 40
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::empirical::{BlockPlan, QuantileSpec};
use crate::error::{Error, Result};
use crate::models::{InitMode, ModelKind, ModelSpec};
use crate::tuning::{default_subsample_len, TuneConfig};

pub const DEFAULT_REPLICATIONS: usize = 2000;
pub const DEFAULT_REFERENCE_REPLICATIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Reference,
    MseGrid,
    CoverageGrid,
    CdfMseGrid,
    Tune,
    RateStudy,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Reference,
        Command::MseGrid,
        Command::CoverageGrid,
        Command::CdfMseGrid,
        Command::Tune,
        Command::RateStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Reference => "reference",
            Command::MseGrid => "mse-grid",
            Command::CoverageGrid => "coverage-grid",
            Command::CdfMseGrid => "cdf-mse-grid",
            Command::Tune => "tune",
            Command::RateStudy => "rate-study",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("command", format!("unknown command `{s}`")))
    }
}

/// Which target distribution a `reference` run approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatName {
    #[default]
    Quantile,
    Cdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub nu: Option<f64>,
    pub truncation: Option<usize>,
    pub init: Option<String>,
    pub burn_in: Option<usize>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        let kind: ModelKind = self
            .name
            .parse()
            .map_err(|e: Error| Error::config("model.name", e.to_string()))?;
        let mut spec = match kind {
            ModelKind::PolyMixing => {
                let preset = ModelSpec::poly_mixing_preset();
                let nu = self.nu.unwrap_or(preset.params()["nu"]);
                let k = self.truncation.unwrap_or(preset.params()["K"] as usize);
                ModelSpec::poly_mixing(nu, k).map_err(|e| Error::config("model.nu", e.to_string()))?
            }
            _ => {
                if self.nu.is_some() {
                    return Err(Error::config("model.nu", "only the polymix model takes `nu`"));
                }
                if self.truncation.is_some() {
                    return Err(Error::config("model.truncation", "only the polymix model takes `truncation`"));
                }
                ModelSpec::preset(kind.name())?
            }
        };
        if let Some(init) = &self.init {
            let mode: InitMode = init
                .parse()
                .map_err(|e: Error| Error::config("model.init", e.to_string()))?;
            spec = spec.with_init(mode);
        }
        if let Some(burn_in) = self.burn_in {
            spec = spec.with_burn_in(burn_in);
        }
        Ok(spec)
    }
}

fn default_b_min() -> usize {
    1
}
fn default_b_max() -> usize {
    40
}
fn default_ell_min() -> usize {
    2
}
fn default_ell_max() -> usize {
    40
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_b_min")]
    pub b_min: usize,
    #[serde(default = "default_b_max")]
    pub b_max: usize,
    #[serde(default = "default_ell_min")]
    pub ell_min: usize,
    #[serde(default = "default_ell_max")]
    pub ell_max: usize,
    #[serde(default = "default_true")]
    pub include_mbb: bool,
    /// Explicit `[b, ell]` cells; overrides the ranges.
    pub cells: Option<Vec<[usize; 2]>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            b_min: default_b_min(),
            b_max: default_b_max(),
            ell_min: default_ell_min(),
            ell_max: default_ell_max(),
            include_mbb: true,
            cells: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self, n: usize) -> Result<Grid> {
        let grid = match &self.cells {
            Some(cells) => {
                let plans = cells
                    .iter()
                    .map(|&[b, ell]| BlockPlan::new(b, ell))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::config("grid.cells", e.to_string()))?;
                Grid::from_cells(plans).map_err(|e| Error::config("grid.cells", e.to_string()))?
            }
            None => Grid::heatmap(n, self.b_min..=self.b_max, self.ell_min..=self.ell_max, self.include_mbb)
                .map_err(|e| Error::config("grid", e.to_string()))?,
        };
        grid.check_for(n).map_err(|e| Error::config("grid.cells", e.to_string()))?;
        Ok(grid)
    }
}

fn default_c_grid() -> Vec<f64> {
    vec![0.5, 0.75, 1.0, 1.5, 2.0]
}
fn default_subsample_count() -> usize {
    20
}
fn default_rho() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    #[serde(default = "default_c_grid")]
    pub c1: Vec<f64>,
    #[serde(default = "default_c_grid")]
    pub c2: Vec<f64>,
    /// Subsample length `M`; defaults to `max(32, n/8)`.
    pub subsample_len: Option<usize>,
    #[serde(default = "default_subsample_count")]
    pub subsample_count: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub subsample_bootstrap: Option<usize>,
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection {
            c1: default_c_grid(),
            c2: default_c_grid(),
            subsample_len: None,
            subsample_count: default_subsample_count(),
            rho: default_rho(),
            subsample_bootstrap: None,
        }
    }
}

fn default_p() -> f64 {
    0.5
}
fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}
fn default_reference_replications() -> usize {
    DEFAULT_REFERENCE_REPLICATIONS
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand run by `hbb run`.
    pub command: Option<Command>,
    pub model: ModelConfig,
    pub n: Option<usize>,
    /// Sample sizes of a rate study.
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "default_p")]
    pub p: f64,
    pub x: Option<f64>,
    pub y: Option<f64>,
    /// Target of a `reference` run.
    #[serde(default)]
    pub stat: StatName,
    /// Outer replications `R`.
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Bootstrap replicates `B`.
    #[serde(default = "default_replications")]
    pub bootstrap: usize,
    #[serde(default = "default_reference_replications")]
    pub reference_replications: usize,
    /// A known reference value; skips the reference simulation.
    pub reference: Option<f64>,
    pub reference_cache: Option<PathBuf>,
    pub alpha: Option<f64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tune: TuneSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message().to_string()))?;
        precheck(&table)?;
        let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".to_string());
            Error::config(key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Structural checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("replications", self.replications),
            ("bootstrap", self.bootstrap),
            ("reference_replications", self.reference_replications),
            ("workers", self.workers),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be >= 1"));
            }
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::config("p", format!("must lie in (0,1), got {}", self.p)));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::config("alpha", format!("must lie in (0,1), got {a}")));
            }
        }
        if let Some(r) = self.reference {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config("reference", format!("must lie in [0,1], got {r}")));
            }
        }
        if self.n == Some(0) {
            return Err(Error::config("n", "must be >= 1"));
        }
        if self.tune.c1.is_empty() || self.tune.c1.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::config("tune.c1", "must be a nonempty list of positive reals"));
        }
        if self.tune.c2.is_empty() || self.tune.c2.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::config("tune.c2", "must be a nonempty list of positive reals"));
        }
        if !(self.tune.rho > 0.0) {
            return Err(Error::config("tune.rho", "must be > 0"));
        }
        if self.tune.subsample_count == 1 {
            return Err(Error::config("tune.subsample_count", "must be 0 (all) or >= 2"));
        }
        self.model.build()?;
        Ok(())
    }

    pub fn quantile(&self) -> QuantileSpec {
        QuantileSpec::new(self.p).expect("validated")
    }

    pub fn require_n(&self) -> Result<usize> {
        self.n.ok_or_else(|| Error::config("n", "missing required key"))
    }

    pub fn require_x(&self) -> Result<f64> {
        self.x.ok_or_else(|| Error::config("x", "missing required key"))
    }

    pub fn require_y(&self) -> Result<f64> {
        self.y.ok_or_else(|| Error::config("y", "missing required key"))
    }

    pub fn require_alpha(&self) -> Result<f64> {
        self.alpha.ok_or_else(|| Error::config("alpha", "missing required key"))
    }

    pub fn require_n_list(&self) -> Result<Vec<usize>> {
        let list = self
            .n_list
            .clone()
            .ok_or_else(|| Error::config("n_list", "missing required key"))?;
        if list.len() < 3 || list.contains(&0) {
            return Err(Error::config("n_list", "needs at least three sample sizes, all >= 1"));
        }
        Ok(list)
    }

    /// Selection settings for sample size `n`; the seed is filled in per run.
    pub fn tune_config(&self, n: usize) -> Result<TuneConfig> {
        let subsample_len = self.tune.subsample_len.unwrap_or_else(|| default_subsample_len(n));
        if subsample_len == 0 || subsample_len > n {
            return Err(Error::config("tune.subsample_len", format!("must lie in 1..={n}")));
        }
        Ok(TuneConfig {
            c1_grid: self.tune.c1.clone(),
            c2_grid: self.tune.c2.clone(),
            subsample_len,
            subsample_count: self.tune.subsample_count,
            rho: self.tune.rho,
            x: self.require_x()?,
            q: self.quantile(),
            replicates: self.bootstrap,
            subsample_replicates: self.tune.subsample_bootstrap,
            seed: self.master_seed,
        })
    }
}

/// Checks whose serde diagnostics would not name the key.
fn precheck(table: &toml::Table) -> Result<()> {
    match table.get("model") {
        None => return Err(Error::config("model", "missing required key")),
        Some(toml::Value::Table(m)) if !m.contains_key("name") => {
            return Err(Error::config("model.name", "missing required key"))
        }
        Some(toml::Value::Table(_)) => {}
        Some(_) => return Err(Error::config("model", "expected a table")),
    }
    if let Some(v) = table.get("command") {
        v.as_str()
            .ok_or_else(|| Error::config("command", "expected a string"))?
            .parse::<Command>()?;
    }
    if let Some(v) = table.get("stat") {
        match v.as_str() {
            Some("quantile" | "cdf") => {}
            _ => return Err(Error::config("stat", "expected \"quantile\" or \"cdf\"")),
        }
    }
    Ok(())
}
