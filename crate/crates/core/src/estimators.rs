//! Bootstrap estimates built on the hybrid block bootstrap: the distribution
//! function `G^_n(x)`, its inverse, the lower percentile confidence limit for
//! `xi_p`, and the CDF-level estimator of `P(sqrt(n)(F_n(x) - F(x)) <= y)`.

use crate::empirical::{BlockPlan, QuantileSpec, SortedSeries};
use crate::error::{Error, Result};
use crate::resample::{
    monte_carlo_distribution, CdfStatistic, EmpiricalDistribution, QuantileStatistic,
    ResamplePlan,
};

/// A one-sided interval `[lower, inf)` for `xi_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiResult {
    pub lower: f64,
    pub alpha: f64,
    pub plan: BlockPlan,
    pub replicates: usize,
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

/// `G^_n(x)`: probability of atoms `<= x`.
pub fn g_hat(dist: &EmpiricalDistribution, x: f64) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::invalid("empty bootstrap distribution"));
    }
    Ok(dist.cdf(x))
}

/// `G^_n^{-1}(alpha)`: smallest atom with cumulative probability `>= alpha`.
pub fn g_hat_quantile(dist: &EmpiricalDistribution, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    if dist.is_empty() {
        return Err(Error::invalid("empty bootstrap distribution"));
    }
    Ok(dist.quantile(alpha))
}

/// `G^_n(x)` from `rp.replicates` bootstrap replicates without building the
/// distribution. Equal to `g_hat(&monte_carlo_distribution(series, rp, q)?, x)`.
pub fn g_hat_point(series: &[f64], rp: ResamplePlan, q: QuantileSpec, x: f64) -> Result<f64> {
    let stat = QuantileStatistic::new(series, rp.plan, q)?;
    Ok(stat.count_at_most(x, rp.replicates, rp.seed) as f64 / rp.replicates as f64)
}

/// Lower limit `xi^_n - n^{-1/2} G^_n^{-1}(alpha)`.
pub fn lower_percentile_ci(series: &[f64], rp: ResamplePlan, q: QuantileSpec, alpha: f64) -> Result<CiResult> {
    check_level(alpha)?;
    let dist = monte_carlo_distribution(series, rp, q)?;
    let sorted = SortedSeries::new(series);
    Ok(ci_from_distribution(
        sorted.sample_quantile(q),
        series.len(),
        &dist,
        rp,
        alpha,
    ))
}

pub(crate) fn ci_from_distribution(
    sample_quantile: f64,
    n: usize,
    dist: &EmpiricalDistribution,
    rp: ResamplePlan,
    alpha: f64,
) -> CiResult {
    CiResult {
        lower: sample_quantile - dist.quantile(alpha) / (n as f64).sqrt(),
        alpha,
        plan: rp.plan,
        replicates: rp.replicates,
    }
}

/// Monte Carlo estimate of `P*(sqrt(b ell)(F*_n(x) - F~_n(x)) <= y)`.
pub fn cdf_level_estimator(series: &[f64], rp: ResamplePlan, x: f64, y: f64) -> Result<f64> {
    if rp.replicates == 0 {
        return Err(Error::invalid("bootstrap replicate count B must be >= 1"));
    }
    let stat = CdfStatistic::new(series, rp.plan, x)?;
    Ok(stat.count_at_most(y, rp.replicates, rp.seed) as f64 / rp.replicates as f64)
}
