//! The hybrid block bootstrap.
//!
//! A resample pastes `b` blocks of `ell` consecutive observations, with block
//! starts drawn uniformly with replacement from the `n - ell + 1` admissible
//! positions. Block starts are 0-based throughout this module.
//!
//! Replicate `j` of a Monte Carlo distribution always draws from the stream
//! keyed by `(seed, j)`, so a distribution is the same whether its replicates
//! are evaluated sequentially or spread over a thread pool.

use rand::Rng;
use rayon::prelude::*;

use crate::empirical::{
    block_avg_cdf, kth_smallest, rank_for, BlockPlan, QuantileSpec, SortedSeries,
};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Default cap on the number of start tuples enumerated by the exact oracle.
pub const EXACT_TUPLE_CAP: u64 = 1_000_000;

/// Block plan plus bootstrap replicate count and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResamplePlan {
    pub plan: BlockPlan,
    pub replicates: usize,
    pub seed: u64,
}

impl ResamplePlan {
    pub fn new(plan: BlockPlan, replicates: usize, seed: u64) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::invalid("bootstrap replicate count B must be >= 1"));
        }
        Ok(ResamplePlan {
            plan,
            replicates,
            seed,
        })
    }
}

/// Random stream of bootstrap replicate `j`.
pub fn replicate_stream(seed: u64, j: u64) -> Stream {
    seed::stream(seed::derive(seed, &[seed::domain::BOOTSTRAP, j]))
}

/// A finite distribution with rational atom probabilities `count / total`.
///
/// The Monte Carlo form gives every replicate a count of one (tied replicate
/// values are merged); the exact form counts start tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    counts: Vec<u64>,
    cumulative: Vec<u64>,
}

impl EmpiricalDistribution {
    /// Equal-weight atoms, one per sample.
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("distribution needs at least one sample"));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("distribution samples must not be NaN"));
        }
        samples.sort_by(f64::total_cmp);
        let mut values = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for v in samples {
            if values.last() == Some(&v) {
                *counts.last_mut().expect("parallel vectors") += 1;
            } else {
                values.push(v);
                counts.push(1);
            }
        }
        Ok(Self::from_parts(values, counts))
    }

    fn from_parts(values: Vec<f64>, counts: Vec<u64>) -> Self {
        let cumulative = counts
            .iter()
            .scan(0u64, |acc, c| {
                *acc += c;
                Some(*acc)
            })
            .collect();
        EmpiricalDistribution {
            values,
            counts,
            cumulative,
        }
    }

    /// Distinct atom values, increasing.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sum of all counts (B for the Monte Carlo form).
    pub fn total(&self) -> u64 {
        *self.cumulative.last().expect("nonempty by construction")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(value, probability)` pairs.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let total = self.total() as f64;
        self.values
            .iter()
            .zip(&self.counts)
            .map(move |(v, c)| (*v, *c as f64 / total))
    }

    /// Total count of atoms `<= x`.
    pub fn count_at_most(&self, x: f64) -> u64 {
        match self.values.partition_point(|v| *v <= x) {
            0 => 0,
            i => self.cumulative[i - 1],
        }
    }

    /// Probability of atoms `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.count_at_most(x) as f64 / self.total() as f64
    }

    /// Smallest atom whose cumulative probability reaches `alpha`.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let target = rank_for(self.total(), alpha);
        let i = self.cumulative.partition_point(|c| *c < target);
        self.values[i]
    }
}

/// `b` i.i.d. uniform block starts in `0..n-ell+1`.
pub fn draw_block_starts<R: Rng + ?Sized>(n: usize, plan: BlockPlan, rng: &mut R) -> Result<Vec<usize>> {
    let nb = plan.block_count(n)?;
    Ok((0..plan.b).map(|_| rng.random_range(0..nb)).collect())
}

/// Concatenate the blocks `series[s..s+ell]` for each start `s`.
pub fn paste_series(series: &[f64], starts: &[usize], ell: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(starts.len() * ell);
    for &s in starts {
        if ell == 0 || s + ell > series.len() {
            return Err(Error::invalid(format!(
                "block start {s} with length {ell} is out of range for n={}",
                series.len()
            )));
        }
        out.extend_from_slice(&series[s..s + ell]);
    }
    Ok(out)
}

/// The statistic `sqrt(b ell) (xi*_n - xi~_n)` for one series and plan, with
/// the centering `xi~_n` computed once.
#[derive(Debug, Clone)]
pub struct QuantileStatistic<'a> {
    series: &'a [f64],
    plan: BlockPlan,
    block_count: usize,
    rank: usize,
    center: f64,
    scale: f64,
}

impl<'a> QuantileStatistic<'a> {
    pub fn new(series: &'a [f64], plan: BlockPlan, q: QuantileSpec) -> Result<Self> {
        plan.block_count(series.len())?;
        let center = SortedSeries::new(series).block_avg_quantile(plan.ell, q);
        Self::with_center(series, plan, q, center)
    }

    /// Build with a precomputed `xi~_n` (must equal the block-averaged quantile at `plan.ell`).
    pub fn with_center(series: &'a [f64], plan: BlockPlan, q: QuantileSpec, center: f64) -> Result<Self> {
        let block_count = plan.block_count(series.len())?;
        let m = plan.resample_len();
        Ok(QuantileStatistic {
            series,
            plan,
            block_count,
            rank: rank_for(m as u64, q.p()) as usize,
            center,
            scale: (m as f64).sqrt(),
        })
    }

    /// `xi~_n`.
    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn plan(&self) -> BlockPlan {
        self.plan
    }

    /// Statistic for explicit block starts; `scratch` is reused between calls.
    pub fn evaluate(&self, starts: &[usize], scratch: &mut Vec<f64>) -> f64 {
        let ell = self.plan.ell;
        scratch.clear();
        for &s in starts {
            scratch.extend_from_slice(&self.series[s..s + ell]);
        }
        let xi_star = kth_smallest(scratch, self.rank);
        self.standardize(xi_star)
    }

    #[inline]
    fn standardize(&self, v: f64) -> f64 {
        self.scale * (v - self.center)
    }

    /// One bootstrap replicate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Vec<f64>, starts: &mut Vec<usize>) -> f64 {
        starts.clear();
        starts.extend((0..self.plan.b).map(|_| rng.random_range(0..self.block_count)));
        self.evaluate(starts, scratch)
    }

    /// Number of replicates `j < replicates` with statistic `<= x`, using
    /// per-block counts instead of pasting. Agrees exactly with counting
    /// atoms of the Monte Carlo distribution with the same seed.
    pub fn count_at_most(&self, x: f64, replicates: usize, seed: u64) -> u64 {
        let counts = BlockCounts::new(self.series, self.plan.ell, |v| self.standardize(v) <= x);
        let need = self.rank as u32;
        counts.count_replicates(self.plan.b, replicates, seed, |hits| hits >= need)
    }
}

/// Per-block counts of an indicator over all `n - ell + 1` blocks.
#[derive(Debug, Clone)]
pub(crate) struct BlockCounts {
    counts: Vec<u32>,
}

impl BlockCounts {
    pub(crate) fn new(series: &[f64], ell: usize, indicator: impl Fn(f64) -> bool) -> Self {
        let mut prefix = Vec::with_capacity(series.len() + 1);
        prefix.push(0u32);
        let mut acc = 0u32;
        for &v in series {
            acc += u32::from(indicator(v));
            prefix.push(acc);
        }
        let counts = (0..=series.len() - ell)
            .map(|i| prefix[i + ell] - prefix[i])
            .collect();
        BlockCounts { counts }
    }

    /// Indicator total over `b` blocks drawn from `rng`, in the same draw
    /// order as [`draw_block_starts`].
    #[inline]
    pub(crate) fn draw_sum(&self, b: usize, rng: &mut Stream) -> u32 {
        let nb = self.counts.len();
        (0..b).map(|_| self.counts[rng.random_range(0..nb)]).sum()
    }

    pub(crate) fn count_replicates(
        &self,
        b: usize,
        replicates: usize,
        seed: u64,
        accept: impl Fn(u32) -> bool + Sync,
    ) -> u64 {
        (0..replicates)
            .into_par_iter()
            .with_min_len(512)
            .filter(|&j| accept(self.draw_sum(b, &mut replicate_stream(seed, j as u64))))
            .count() as u64
    }
}

/// One replicate of `sqrt(b ell) (xi*_n - xi~_n)`.
pub fn quantile_stat<R: Rng + ?Sized>(series: &[f64], plan: BlockPlan, q: QuantileSpec, rng: &mut R) -> Result<f64> {
    let stat = QuantileStatistic::new(series, plan, q)?;
    Ok(stat.sample(rng, &mut Vec::new(), &mut Vec::new()))
}

/// `B` replicates of the quantile statistic as an equal-weight distribution.
pub fn monte_carlo_distribution(series: &[f64], rp: ResamplePlan, q: QuantileSpec) -> Result<EmpiricalDistribution> {
    if rp.replicates == 0 {
        return Err(Error::invalid("bootstrap replicate count B must be >= 1"));
    }
    let stat = QuantileStatistic::new(series, rp.plan, q)?;
    monte_carlo_with(&stat, rp)
}

pub(crate) fn monte_carlo_with(stat: &QuantileStatistic<'_>, rp: ResamplePlan) -> Result<EmpiricalDistribution> {
    let samples: Vec<f64> = (0..rp.replicates)
        .into_par_iter()
        .with_min_len(64)
        .map_init(
            || (Vec::new(), Vec::new()),
            |(scratch, starts), j| stat.sample(&mut replicate_stream(rp.seed, j as u64), scratch, starts),
        )
        .collect();
    EmpiricalDistribution::from_samples(samples)
}

/// Walk every start tuple in `0..nb` of length `b` (odometer order).
fn for_each_tuple(nb: usize, b: usize, cap: u64, mut f: impl FnMut(&[usize])) -> Result<()> {
    let tuples = (nb as u64)
        .checked_pow(b as u32)
        .filter(|t| *t <= cap)
        .ok_or_else(|| {
            Error::ResourceLimit(format!(
                "exact enumeration of {nb}^{b} start tuples exceeds the cap of {cap}"
            ))
        })?;
    let mut starts = vec![0usize; b];
    for _ in 0..tuples {
        f(&starts);
        for digit in starts.iter_mut().rev() {
            *digit += 1;
            if *digit < nb {
                break;
            }
            *digit = 0;
        }
    }
    Ok(())
}

/// The exact conditional law of the quantile statistic, by enumerating all
/// `(n-ell+1)^b` equally likely start tuples.
pub fn exact_distribution(series: &[f64], plan: BlockPlan, q: QuantileSpec) -> Result<EmpiricalDistribution> {
    exact_distribution_capped(series, plan, q, EXACT_TUPLE_CAP)
}

pub fn exact_distribution_capped(
    series: &[f64],
    plan: BlockPlan,
    q: QuantileSpec,
    cap: u64,
) -> Result<EmpiricalDistribution> {
    let stat = QuantileStatistic::new(series, plan, q)?;
    let nb = plan.block_count(series.len())?;
    let mut scratch = Vec::new();
    let mut samples = Vec::new();
    for_each_tuple(nb, plan.b, cap, |starts| samples.push(stat.evaluate(starts, &mut scratch)))?;
    EmpiricalDistribution::from_samples(samples)
}

/// The statistic `sqrt(b ell) (F*_n(x) - F~_n(x))`.
#[derive(Debug, Clone)]
pub struct CdfStatistic {
    plan: BlockPlan,
    counts: BlockCounts,
    block_avg: f64,
    m: f64,
    scale: f64,
}

impl CdfStatistic {
    pub fn new(series: &[f64], plan: BlockPlan, x: f64) -> Result<Self> {
        plan.block_count(series.len())?;
        let m = plan.resample_len() as f64;
        Ok(CdfStatistic {
            plan,
            counts: BlockCounts::new(series, plan.ell, |v| v <= x),
            block_avg: block_avg_cdf(series, plan.ell, x)?,
            m,
            scale: m.sqrt(),
        })
    }

    /// `F~_n(x)`.
    pub fn block_avg(&self) -> f64 {
        self.block_avg
    }

    #[inline]
    fn proportion(&self, hits: u32) -> f64 {
        self.scale * (f64::from(hits) / self.m - self.block_avg)
    }

    pub fn evaluate(&self, starts: &[usize]) -> f64 {
        self.proportion(starts.iter().map(|&s| self.counts.counts[s]).sum())
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        self.proportion(self.counts.draw_sum(self.plan.b, rng))
    }

    /// Number of replicates with statistic `<= y`.
    pub fn count_at_most(&self, y: f64, replicates: usize, seed: u64) -> u64 {
        self.counts
            .count_replicates(self.plan.b, replicates, seed, |hits| self.proportion(hits) <= y)
    }
}

/// One replicate of `sqrt(b ell) (F*_n(x) - F~_n(x))`.
pub fn cdf_stat(series: &[f64], plan: BlockPlan, x: f64, rng: &mut Stream) -> Result<f64> {
    Ok(CdfStatistic::new(series, plan, x)?.sample(rng))
}

pub fn cdf_monte_carlo_distribution(series: &[f64], rp: ResamplePlan, x: f64) -> Result<EmpiricalDistribution> {
    let stat = CdfStatistic::new(series, rp.plan, x)?;
    let samples: Vec<f64> = (0..rp.replicates)
        .into_par_iter()
        .with_min_len(256)
        .map(|j| stat.sample(&mut replicate_stream(rp.seed, j as u64)))
        .collect();
    EmpiricalDistribution::from_samples(samples)
}

/// Exact conditional law of the CDF-level statistic.
pub fn exact_cdf_distribution(series: &[f64], plan: BlockPlan, x: f64) -> Result<EmpiricalDistribution> {
    let stat = CdfStatistic::new(series, plan, x)?;
    let nb = plan.block_count(series.len())?;
    let mut samples = Vec::new();
    for_each_tuple(nb, plan.b, EXACT_TUPLE_CAP, |starts| samples.push(stat.evaluate(starts)))?;
    EmpiricalDistribution::from_samples(samples)
}
