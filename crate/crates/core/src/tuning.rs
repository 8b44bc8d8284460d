//! Data-driven choice of `(b, ell)` through `b = floor(c1 n^{1/3})`,
//! `ell = floor(c2 n^{1/3})`, minimizing the subsample error criterion
//!
//! ```text
//! Err(c1, c2) = mean_j | G^_M^{(j)}(x) - G^_n(x) |^rho
//! ```
//!
//! where `G^_M^{(j)}` is the bootstrap estimate computed from the `j`-th run of
//! `M` consecutive observations with the plan induced by `(c1, c2)` at size `M`.

use rayon::prelude::*;

use crate::empirical::{BlockPlan, QuantileSpec, SortedSeries};
use crate::error::{Error, Result};
use crate::resample::QuantileStatistic;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub c1_grid: Vec<f64>,
    pub c2_grid: Vec<f64>,
    /// Subsample length `M`.
    pub subsample_len: usize,
    /// Number of equally spaced subsamples; 0 uses all `n - M + 1`.
    pub subsample_count: usize,
    pub rho: f64,
    /// Point at which `G^` is evaluated.
    pub x: f64,
    pub q: QuantileSpec,
    /// Bootstrap replicates for the full-sample `G^_n`.
    pub replicates: usize,
    /// Bootstrap replicates for each subsample; defaults to `replicates`.
    pub subsample_replicates: Option<usize>,
    pub seed: u64,
}

impl TuneConfig {
    /// Grid `{0.5, 0.75, 1.0, 1.5, 2.0}` in both constants, 20 subsamples, `rho = 2`.
    pub fn standard(n: usize, x: f64, replicates: usize, seed: u64) -> Self {
        let grid = vec![0.5, 0.75, 1.0, 1.5, 2.0];
        TuneConfig {
            c1_grid: grid.clone(),
            c2_grid: grid,
            subsample_len: default_subsample_len(n),
            subsample_count: 20,
            rho: 2.0,
            x,
            q: QuantileSpec::median(),
            replicates,
            subsample_replicates: None,
            seed,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.c1_grid.is_empty() || self.c2_grid.is_empty() {
            return Err(Error::invalid("tuning grids must be nonempty"));
        }
        if self
            .c1_grid
            .iter()
            .chain(&self.c2_grid)
            .any(|c| !(*c > 0.0) || !c.is_finite())
        {
            return Err(Error::invalid("tuning constants must be positive and finite"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::invalid(format!("rho must be > 0, got {}", self.rho)));
        }
        if self.subsample_len == 0 || self.subsample_len > n {
            return Err(Error::invalid(format!(
                "subsample length M={} must lie in 1..=n (n={n})",
                self.subsample_len
            )));
        }
        if self.replicates == 0 || self.subsample_replicates == Some(0) {
            return Err(Error::invalid("bootstrap replicate counts must be >= 1"));
        }
        Ok(())
    }

    fn sub_replicates(&self) -> usize {
        self.subsample_replicates.unwrap_or(self.replicates)
    }
}

/// `M = max(32, floor(n / 8))`. Gives 64 at n = 512; larger samples often
/// warrant a longer `M` than this rule produces.
pub fn default_subsample_len(n: usize) -> usize {
    (n / 8).max(32)
}

/// `floor(c n^{1/3})`, treating values within rounding of an integer as that integer.
fn scaled_cube_root(n: usize, c: f64) -> usize {
    let v = c * (n as f64).cbrt();
    let nearest = v.round();
    if (v - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        v.floor() as usize
    }
}

/// `b = floor(c1 n^{1/3})`, `ell = floor(c2 n^{1/3})`.
pub fn plan_from_constants(n: usize, c1: f64, c2: f64) -> Result<BlockPlan> {
    let b = scaled_cube_root(n, c1);
    let ell = scaled_cube_root(n, c2);
    if b == 0 || ell == 0 || ell > n {
        return Err(Error::invalid(format!(
            "constants ({c1}, {c2}) give a degenerate plan b={b}, ell={ell} at n={n}"
        )));
    }
    BlockPlan::new(b, ell)
}

/// 0-based starts of the subsamples of length `M`.
///
/// `count = 0` gives every start `0..=n-M`; otherwise `count` starts spread
/// evenly from `0` to `n - M` (rounded half up, duplicates dropped).
pub fn subsample_starts(n: usize, m: usize, count: usize) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::invalid(format!("subsample length M={m} must lie in 1..=n (n={n})")));
    }
    let span = n - m;
    match count {
        0 => Ok((0..=span).collect()),
        1 => Err(Error::invalid("subsample count must be 0 (all) or at least 2")),
        _ => {
            let gaps = count - 1;
            let mut starts: Vec<usize> = (0..count)
                .map(|j| (2 * j * span + gaps) / (2 * gaps))
                .collect();
            starts.dedup();
            Ok(starts)
        }
    }
}

/// Stream seed of the bootstrap estimate on the window `[start, start + len)`
/// for the cell `(c1, c2)`. The full sample is the window `(0, n)`.
pub fn window_seed(seed: u64, c1: f64, c2: f64, start: usize, len: usize) -> u64 {
    seed::derive(
        seed,
        &[
            seed::domain::SUBSAMPLE,
            c1.to_bits(),
            c2.to_bits(),
            start as u64,
            len as u64,
        ],
    )
}

fn window_g_hat(window: &SortedSeries<'_>, plan: BlockPlan, q: QuantileSpec, x: f64, replicates: usize, seed: u64) -> Result<f64> {
    let center = window.block_avg_quantile(plan.ell, q);
    let stat = QuantileStatistic::with_center(window.values(), plan, q, center)?;
    Ok(stat.count_at_most(x, replicates, seed) as f64 / replicates as f64)
}

/// One cell of the tuning grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrCell {
    pub c1: f64,
    pub c2: f64,
    /// Plan at the full sample size, if non-degenerate.
    pub plan: Option<BlockPlan>,
    /// Full-sample `G^_n(x)` under `plan`.
    pub g_hat: Option<f64>,
    pub err: Option<f64>,
}

struct Windows<'a> {
    full: SortedSeries<'a>,
    subs: Vec<(usize, SortedSeries<'a>)>,
}

impl<'a> Windows<'a> {
    fn new(series: &'a [f64], cfg: &TuneConfig) -> Result<Self> {
        let m = cfg.subsample_len;
        let subs = subsample_starts(series.len(), m, cfg.subsample_count)?
            .into_iter()
            .map(|s| (s, SortedSeries::new(&series[s..s + m])))
            .collect();
        Ok(Windows {
            full: SortedSeries::new(series),
            subs,
        })
    }

    fn evaluate(&self, cfg: &TuneConfig, c1: f64, c2: f64) -> Result<(BlockPlan, f64, f64)> {
        let n = self.full.n();
        let m = cfg.subsample_len;
        let plan_n = plan_from_constants(n, c1, c2)?;
        let plan_m = plan_from_constants(m, c1, c2)?;
        let g_n = window_g_hat(&self.full, plan_n, cfg.q, cfg.x, cfg.replicates, window_seed(cfg.seed, c1, c2, 0, n))?;
        let mut total = 0.0;
        for (start, window) in &self.subs {
            let seed = window_seed(cfg.seed, c1, c2, *start, m);
            let g_m = window_g_hat(window, plan_m, cfg.q, cfg.x, cfg.sub_replicates(), seed)?;
            total += (g_m - g_n).abs().powf(cfg.rho);
        }
        Ok((plan_n, g_n, total / self.subs.len() as f64))
    }
}

/// `Err(c1, c2)` for one pair of constants.
pub fn err_value(series: &[f64], cfg: &TuneConfig, c1: f64, c2: f64) -> Result<f64> {
    cfg.validate(series.len())?;
    Windows::new(series, cfg)?.evaluate(cfg, c1, c2).map(|(_, _, err)| err)
}

/// Result of minimizing `Err` over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub c1: f64,
    pub c2: f64,
    pub plan: BlockPlan,
    /// Every grid cell, `c1`-major in grid order.
    pub table: Vec<ErrCell>,
}

impl Selection {
    /// The selected cell's row of the table.
    pub fn selected(&self) -> &ErrCell {
        self.table
            .iter()
            .find(|c| c.c1 == self.c1 && c.c2 == self.c2)
            .expect("selection comes from the table")
    }
}

/// Evaluate `Err` on the whole grid and return the minimizer. Ties go to the
/// smaller `c2`, then the smaller `c1`. Cells whose plan is degenerate at `n`
/// or at `M` are tabulated without a value.
pub fn select_bl(series: &[f64], cfg: &TuneConfig) -> Result<Selection> {
    cfg.validate(series.len())?;
    let windows = Windows::new(series, cfg)?;
    let pairs: Vec<(f64, f64)> = cfg
        .c1_grid
        .iter()
        .flat_map(|&c1| cfg.c2_grid.iter().map(move |&c2| (c1, c2)))
        .collect();
    let table: Vec<ErrCell> = pairs
        .par_iter()
        .map(|&(c1, c2)| match windows.evaluate(cfg, c1, c2) {
            Ok((plan, g, err)) => ErrCell {
                c1,
                c2,
                plan: Some(plan),
                g_hat: Some(g),
                err: Some(err),
            },
            Err(_) => ErrCell {
                c1,
                c2,
                plan: plan_from_constants(series.len(), c1, c2).ok(),
                g_hat: None,
                err: None,
            },
        })
        .collect();
    let best = table
        .iter()
        .filter_map(|cell| cell.err.map(|e| (e, cell)))
        .min_by(|(ea, a), (eb, b)| {
            ea.total_cmp(eb)
                .then(a.c2.total_cmp(&b.c2))
                .then(a.c1.total_cmp(&b.c1))
        })
        .map(|(_, cell)| (cell.c1, cell.c2, cell.plan.expect("evaluated cells have a plan")))
        .ok_or(Error::NoFeasiblePlan)?;
    Ok(Selection {
        c1: best.0,
        c2: best.1,
        plan: best.2,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans_from_constants() {
        let p = |n, c1, c2| plan_from_constants(n, c1, c2).unwrap();
        assert_eq!(p(512, 1.0, 1.0), BlockPlan { b: 8, ell: 8 });
        assert_eq!(p(1728, 1.5, 1.5), BlockPlan { b: 18, ell: 18 });
        assert_eq!(p(1000, 1.0, 1.0), BlockPlan { b: 10, ell: 10 });
        let ladder: Vec<usize> = [0.5, 0.75, 1.0, 1.5, 2.0].iter().map(|c| p(512, *c, 1.0).b).collect();
        assert_eq!(ladder, vec![4, 6, 8, 12, 16]);
        let ladder: Vec<usize> = [0.5, 0.75, 1.0, 1.5, 2.0].iter().map(|c| p(1728, 1.0, *c).ell).collect();
        assert_eq!(ladder, vec![6, 9, 12, 18, 24]);
        assert!(plan_from_constants(8, 0.4, 1.0).is_err());
        assert!(plan_from_constants(8, 1.0, 5.0).is_err());
    }

    #[test]
    fn subsample_start_examples() {
        assert_eq!(subsample_starts(7, 7, 5).unwrap(), vec![0]);
        assert_eq!(subsample_starts(7, 7, 0).unwrap(), vec![0]);
        assert_eq!(subsample_starts(10, 4, 3).unwrap(), vec![0, 3, 6]);
        assert_eq!(subsample_starts(10, 4, 0).unwrap(), (0..=6).collect::<Vec<_>>());
        assert_eq!(subsample_starts(5, 4, 4).unwrap(), vec![0, 1]);
        assert!(subsample_starts(5, 6, 0).is_err());
        assert!(subsample_starts(5, 2, 1).is_err());
    }

    #[test]
    fn twenty_equally_spaced_subsamples() {
        let s = subsample_starts(512, 64, 20).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s[0], 0);
        assert_eq!(*s.last().unwrap(), 448);
        let gaps: Vec<usize> = s.windows(2).map(|w| w[1] - w[0]).collect();
        let (lo, hi) = (gaps.iter().min().unwrap(), gaps.iter().max().unwrap());
        assert!(hi - lo <= 1, "{gaps:?}");
    }

    #[test]
    fn constant_series_has_zero_error() {
        let s = vec![1.5; 64];
        let cfg = TuneConfig {
            subsample_len: 16,
            ..TuneConfig::standard(64, 0.5, 50, 3)
        };
        let sel = select_bl(&s, &cfg).unwrap();
        assert!(sel.table.iter().filter_map(|c| c.err).all(|e| e == 0.0));
    }

    #[test]
    fn full_window_subsample_has_zero_error() {
        let s: Vec<f64> = seed::standard_normal_stream(8).take(40).collect();
        let cfg = TuneConfig {
            c1_grid: vec![1.0],
            c2_grid: vec![1.0],
            subsample_len: 40,
            subsample_count: 0,
            ..TuneConfig::standard(40, 0.3, 300, 12)
        };
        assert_eq!(err_value(&s, &cfg, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn infeasible_grid() {
        let s: Vec<f64> = seed::standard_normal_stream(8).take(40).collect();
        let cfg = TuneConfig {
            c1_grid: vec![0.1],
            c2_grid: vec![1.0],
            subsample_len: 10,
            ..TuneConfig::standard(40, 0.0, 10, 1)
        };
        assert!(matches!(select_bl(&s, &cfg), Err(Error::NoFeasiblePlan)));
    }
}
