//! Monte Carlo experiments over simulated series.
//!
//! Replication `r` always simulates its series from the seed keyed by
//! `(master_seed, r)`, and every grid cell of that replication sees the same
//! series. Bootstrap streams are keyed by `(master_seed, b, ell, r)`. Per-cell
//! metrics are reduced in replication order after all replications finish,
//! so results do not depend on the size of the thread pool.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::grid::{Grid, GridResult, GridRow};
use crate::empirical::{sample_quantile, BlockPlan, QuantileSpec, SortedSeries};
use crate::error::{Error, Result};
use crate::estimators::ci_from_distribution;
use crate::models::Process;
use crate::resample::{monte_carlo_with, CdfStatistic, QuantileStatistic, ResamplePlan};
use crate::seed::{self, domain};
use crate::tuning::{select_bl, TuneConfig};

/// Common settings of a replicated experiment.
#[derive(Clone, Copy)]
pub struct Experiment<'m> {
    pub model: &'m dyn Process,
    pub n: usize,
    pub q: QuantileSpec,
    /// Outer replications `R`.
    pub replications: usize,
    /// Bootstrap replicates `B` per estimate.
    pub replicates: usize,
    pub master_seed: u64,
}

impl Experiment<'_> {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("sample size n must be >= 1"));
        }
        if self.replications == 0 || self.replicates == 0 {
            return Err(Error::invalid("replication counts R and B must be >= 1"));
        }
        Ok(())
    }

    /// Seed of the series simulated in replication `r`.
    pub fn series_seed(&self, r: usize) -> u64 {
        seed::derive(self.master_seed, &[domain::SERIES, r as u64])
    }

    fn series(&self, r: usize) -> Result<Vec<f64>> {
        self.model.simulate(self.n, self.series_seed(r))
    }

    /// Bootstrap stream seed of cell `plan` in replication `r`.
    pub fn cell_seed(&self, plan: BlockPlan, r: usize) -> u64 {
        seed::derive(
            self.master_seed,
            &[domain::BOOTSTRAP, plan.b as u64, plan.ell as u64, r as u64],
        )
    }

    pub fn resample_plan(&self, plan: BlockPlan, r: usize) -> ResamplePlan {
        ResamplePlan {
            plan,
            replicates: self.replicates,
            seed: self.cell_seed(plan, r),
        }
    }

    /// Run `per_series` on every replication in parallel; results come back
    /// in replication order.
    fn replicate<T: Send>(&self, per_series: impl Fn(usize, &[f64]) -> Result<T> + Sync) -> Result<Vec<T>> {
        self.validate()?;
        (0..self.replications)
            .into_par_iter()
            .map(|r| per_series(r, &self.series(r)?))
            .collect()
    }
}

/// Which sampling distribution a reference value describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatKind {
    /// `G_n(x) = P(sqrt(n)(xi^_n - xi_p) <= x)`.
    Quantile { x: f64 },
    /// `P(sqrt(n)(F_n(x) - F(x)) <= y)`.
    Cdf { x: f64, y: f64 },
}

/// A simulated population probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub value: f64,
    pub stderr: f64,
    pub replications: usize,
}

impl Reference {
    pub fn from_hits(hits: usize, replications: usize) -> Self {
        let value = hits as f64 / replications as f64;
        Reference {
            value,
            stderr: (value * (1.0 - value) / replications as f64).sqrt(),
            replications,
        }
    }
}

/// Monte Carlo approximation of the target probability from independent series.
pub fn reference_value(
    model: &dyn Process,
    n: usize,
    kind: StatKind,
    q: QuantileSpec,
    replications: usize,
    seed: u64,
) -> Result<Reference> {
    if replications == 0 {
        return Err(Error::invalid("reference replication count must be >= 1"));
    }
    if n == 0 {
        return Err(Error::invalid("sample size n must be >= 1"));
    }
    let root_n = (n as f64).sqrt();
    let event: Box<dyn Fn(&[f64]) -> Result<bool> + Sync> = match kind {
        StatKind::Quantile { x } => {
            let xi_p = model.population_quantile(q.p())?;
            Box::new(move |s| Ok(root_n * (sample_quantile(s, q)? - xi_p) <= x))
        }
        StatKind::Cdf { x, y } => {
            let f_x = model.population_cdf(x)?;
            Box::new(move |s| {
                let hits = s.iter().filter(|v| **v <= x).count();
                Ok(root_n * (hits as f64 / n as f64 - f_x) <= y)
            })
        }
    };
    let hits: usize = (0..replications)
        .into_par_iter()
        .with_min_len(256)
        .map(|r| -> Result<usize> {
            let s = model.simulate(n, seed::derive(seed, &[domain::REFERENCE, r as u64]))?;
            Ok(usize::from(event(&s)?))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(Reference::from_hits(hits, replications))
}

/// Mean and standard error of the mean.
fn mean_se(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.clone().sum::<f64>() / k;
    if k < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Reduce `per_rep[r][cell]` to one row per cell.
fn reduce_rows(
    n: usize,
    grid: &Grid,
    per_rep: &[Vec<f64>],
    metric: &str,
    summarize: impl Fn(&mut dyn Iterator<Item = f64>, usize) -> (f64, f64),
) -> GridResult {
    let rows = grid
        .cells()
        .iter()
        .enumerate()
        .map(|(c, plan)| {
            let (value, stderr) = summarize(&mut per_rep.iter().map(|row| row[c]), per_rep.len());
            GridRow {
                b: plan.b,
                ell: plan.ell,
                metric: metric.to_string(),
                value,
                stderr,
            }
        })
        .collect();
    GridResult { n, rows }
}

fn mse_rows(n: usize, grid: &Grid, estimates: &[Vec<f64>], reference: f64, metric: &str) -> GridResult {
    reduce_rows(n, grid, estimates, metric, |it, _| {
        let sq: Vec<f64> = it.map(|g| (g - reference).powi(2)).collect();
        mean_se(sq.into_iter())
    })
}

/// Cells grouped by block length, so `xi~_n` is computed once per `ell`.
fn cells_by_ell(grid: &Grid) -> BTreeMap<usize, Vec<(usize, BlockPlan)>> {
    let mut map: BTreeMap<usize, Vec<(usize, BlockPlan)>> = BTreeMap::new();
    for (i, plan) in grid.cells().iter().enumerate() {
        map.entry(plan.ell).or_default().push((i, *plan));
    }
    map
}

/// `G^_n(x)` at every cell for every replication.
pub fn g_hat_estimates(exp: &Experiment<'_>, grid: &Grid, x: f64) -> Result<Vec<Vec<f64>>> {
    grid.check_for(exp.n)?;
    let by_ell = cells_by_ell(grid);
    exp.replicate(|r, series| {
        let sorted = SortedSeries::new(series);
        let mut out = vec![0.0; grid.len()];
        for (ell, cells) in &by_ell {
            let center = sorted.block_avg_quantile(*ell, exp.q);
            for (i, plan) in cells {
                let stat = QuantileStatistic::with_center(series, *plan, exp.q, center)?;
                let hits = stat.count_at_most(x, exp.replicates, exp.cell_seed(*plan, r));
                out[*i] = hits as f64 / exp.replicates as f64;
            }
        }
        Ok(out)
    })
}

/// MSE of `G^_n(x)` against `reference` at every cell (metric `mse`).
pub fn mse_grid(exp: &Experiment<'_>, grid: &Grid, x: f64, reference: f64) -> Result<GridResult> {
    let est = g_hat_estimates(exp, grid, x)?;
    Ok(mse_rows(exp.n, grid, &est, reference, "mse"))
}

/// Coverage of the lower percentile limit for `xi_p` (metric `coverage`).
pub fn coverage_grid(exp: &Experiment<'_>, grid: &Grid, alpha: f64) -> Result<GridResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    grid.check_for(exp.n)?;
    let xi_p = exp.model.population_quantile(exp.q.p())?;
    let by_ell = cells_by_ell(grid);
    let covered = exp.replicate(|r, series| {
        let sorted = SortedSeries::new(series);
        let xi_hat = sorted.sample_quantile(exp.q);
        let mut out = vec![0.0; grid.len()];
        for (ell, cells) in &by_ell {
            let center = sorted.block_avg_quantile(*ell, exp.q);
            for (i, plan) in cells {
                let stat = QuantileStatistic::with_center(series, *plan, exp.q, center)?;
                let rp = exp.resample_plan(*plan, r);
                let dist = monte_carlo_with(&stat, rp)?;
                let ci = ci_from_distribution(xi_hat, exp.n, &dist, rp, alpha);
                out[*i] = f64::from(u8::from(xi_p >= ci.lower));
            }
        }
        Ok(out)
    })?;
    Ok(reduce_rows(exp.n, grid, &covered, "coverage", |it, k| {
        let c = it.sum::<f64>() / k as f64;
        (c, (c * (1.0 - c) / k as f64).sqrt())
    }))
}

/// The CDF-level estimator `P*(sqrt(b ell)(F*_n(x) - F~_n(x)) <= y)` at every
/// cell for every replication.
pub fn cdf_estimates(exp: &Experiment<'_>, grid: &Grid, x: f64, y: f64) -> Result<Vec<Vec<f64>>> {
    grid.check_for(exp.n)?;
    exp.replicate(|r, series| {
        grid.cells()
            .iter()
            .map(|plan| {
                let stat = CdfStatistic::new(series, *plan, x)?;
                let hits = stat.count_at_most(y, exp.replicates, exp.cell_seed(*plan, r));
                Ok(hits as f64 / exp.replicates as f64)
            })
            .collect()
    })
}

/// MSE of the CDF-level estimator (metric `cdf_mse`).
pub fn cdf_mse_grid(exp: &Experiment<'_>, grid: &Grid, x: f64, y: f64, reference: f64) -> Result<GridResult> {
    let est = cdf_estimates(exp, grid, x, y)?;
    Ok(mse_rows(exp.n, grid, &est, reference, "cdf_mse"))
}

/// Ordinary least squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("regression needs at least two paired points"));
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("regression needs at least two distinct x values"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Slope of `log(MSE)` on `log(n)`.
pub fn log_log_slope(points: &[(usize, f64)]) -> Result<f64> {
    if points.iter().any(|(_, m)| !(*m > 0.0)) {
        return Err(Error::invalid("log-log regression needs positive MSE values"));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, m)| m.ln()).collect();
    ols_slope(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub n: usize,
    pub reference: f64,
    /// Grid-minimizing cell.
    pub best: GridRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudy {
    pub points: Vec<RatePoint>,
    pub slope: f64,
}

/// One sample size of a rate study.
#[derive(Debug, Clone)]
pub struct RateSetting {
    pub n: usize,
    pub grid: Grid,
    pub reference: f64,
}

/// Grid-minimum MSE of `G^_n(x)` at each sample size and the log-log slope.
pub fn rate_study(
    model: &dyn Process,
    settings: &[RateSetting],
    q: QuantileSpec,
    x: f64,
    replications: usize,
    replicates: usize,
    master_seed: u64,
) -> Result<RateStudy> {
    if settings.len() < 3 {
        return Err(Error::invalid("rate study needs at least three sample sizes"));
    }
    let mut points = Vec::with_capacity(settings.len());
    for s in settings {
        let exp = Experiment {
            model,
            n: s.n,
            q,
            replications,
            replicates,
            master_seed: seed::derive(master_seed, &[s.n as u64]),
        };
        let result = mse_grid(&exp, &s.grid, x, s.reference)?;
        let best = result.min("mse").expect("grid is nonempty").clone();
        points.push(RatePoint {
            n: s.n,
            reference: s.reference,
            best,
        });
    }
    let slope = log_log_slope(&points.iter().map(|p| (p.n, p.best.value)).collect::<Vec<_>>())?;
    Ok(RateStudy { points, slope })
}

/// Per-cell summary of an adaptive selection study.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveCell {
    pub c1: f64,
    pub c2: f64,
    pub plan: Option<BlockPlan>,
    /// MSE of the fixed-cell estimator `G^_n(x)`.
    pub mse: f64,
    pub mse_stderr: f64,
    /// `Err(c1, c2)` averaged over replications.
    pub mean_err: f64,
    /// Replications in which the cell was selected.
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStudy {
    pub cells: Vec<AdaptiveCell>,
    pub adaptive_mse: f64,
    pub adaptive_stderr: f64,
    pub replications: usize,
}

impl AdaptiveStudy {
    pub fn cell(&self, c1: f64, c2: f64) -> Option<&AdaptiveCell> {
        self.cells.iter().find(|c| c.c1 == c1 && c.c2 == c2)
    }

    pub fn best_fixed(&self) -> &AdaptiveCell {
        self.cells
            .iter()
            .filter(|c| c.plan.is_some())
            .min_by(|a, b| a.mse.total_cmp(&b.mse))
            .expect("at least one feasible cell")
    }

    pub fn worst_fixed(&self) -> &AdaptiveCell {
        self.cells
            .iter()
            .filter(|c| c.plan.is_some())
            .max_by(|a, b| a.mse.total_cmp(&b.mse))
            .expect("at least one feasible cell")
    }
}

/// Repeat `select_bl` on `exp.replications` simulated series and compare the
/// MSE of the adaptively chosen `G^_n(x)` with each fixed grid cell.
///
/// `template.seed` is replaced by a per-replication seed; `template.x` is the
/// evaluation point.
pub fn adaptive_study(exp: &Experiment<'_>, template: &TuneConfig, reference: f64) -> Result<AdaptiveStudy> {
    let per_rep = exp.replicate(|r, series| {
        let cfg = TuneConfig {
            seed: seed::derive(exp.master_seed, &[domain::BOOTSTRAP, r as u64]),
            replicates: exp.replicates,
            q: exp.q,
            ..template.clone()
        };
        select_bl(series, &cfg)
    })?;
    let first = &per_rep[0].table;
    let k = per_rep.len();
    let cells = first
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let errs: Vec<f64> = per_rep.iter().filter_map(|s| s.table[i].err).collect();
            let sq: Vec<f64> = per_rep
                .iter()
                .filter_map(|s| s.table[i].g_hat)
                .map(|g| (g - reference).powi(2))
                .collect();
            let (mse, mse_stderr) = if sq.is_empty() { (f64::NAN, f64::NAN) } else { mean_se(sq.into_iter()) };
            AdaptiveCell {
                c1: cell.c1,
                c2: cell.c2,
                plan: cell.plan.filter(|_| cell.err.is_some()),
                mse,
                mse_stderr,
                mean_err: if errs.is_empty() { f64::NAN } else { errs.iter().sum::<f64>() / errs.len() as f64 },
                selected: per_rep.iter().filter(|s| s.c1 == cell.c1 && s.c2 == cell.c2).count(),
            }
        })
        .collect();
    let adaptive_sq: Vec<f64> = per_rep
        .iter()
        .map(|s| (s.selected().g_hat.expect("selected cell was evaluated") - reference).powi(2))
        .collect();
    let (adaptive_mse, adaptive_stderr) = mean_se(adaptive_sq.into_iter());
    Ok(AdaptiveStudy {
        cells,
        adaptive_mse,
        adaptive_stderr,
        replications: k,
    })
}

/// Run `f` on a thread pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build a pool of {workers} workers: {e}")))?;
    Ok(pool.install(f))
}
