//! Empirical distribution functions, sample quantiles and the block-averaged
//! empirical distribution `F~_n(x) = (n-l+1)^-1 sum_i U_i(x)`, where `U_i` is
//! the empirical CDF of the block `X_i, .., X_{i+l-1}`.
//!
//! All quantiles use the left-continuous inverse `inf{u : F(u) >= p}` with no
//! interpolation.

use crate::error::{Error, Result};

/// Probability level of a quantile, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QuantileSpec(f64);

impl QuantileSpec {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p < 1.0 {
            Ok(QuantileSpec(p))
        } else {
            Err(Error::invalid(format!("quantile level must lie in (0,1), got {p}")))
        }
    }

    pub fn median() -> Self {
        QuantileSpec(0.5)
    }

    pub fn p(self) -> f64 {
        self.0
    }
}

/// Resampling configuration: `b` blocks of length `ell`.
///
/// `b = 1` is subsampling and `b = floor(n / ell)` is the moving block
/// bootstrap; everything in between is a hybrid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockPlan {
    pub b: usize,
    pub ell: usize,
}

impl BlockPlan {
    pub fn new(b: usize, ell: usize) -> Result<Self> {
        if b == 0 || ell == 0 {
            return Err(Error::invalid(format!(
                "block plan needs b >= 1 and ell >= 1 (got b={b}, ell={ell})"
            )));
        }
        Ok(BlockPlan { b, ell })
    }

    /// Moving block bootstrap plan `(floor(n/ell), ell)`.
    pub fn mbb(n: usize, ell: usize) -> Result<Self> {
        if ell == 0 || ell > n {
            return Err(Error::invalid(format!("MBB needs 1 <= ell <= n (ell={ell}, n={n})")));
        }
        Self::new(n / ell, ell)
    }

    pub fn subsampling(ell: usize) -> Result<Self> {
        Self::new(1, ell)
    }

    /// Length `b * ell` of the pasted pseudo-series.
    pub fn resample_len(self) -> usize {
        self.b * self.ell
    }

    /// Number of admissible block starts, `n - ell + 1`.
    pub fn block_count(self, n: usize) -> Result<usize> {
        if self.ell > n {
            return Err(Error::invalid(format!(
                "block length {} exceeds series length {n}",
                self.ell
            )));
        }
        Ok(n - self.ell + 1)
    }

    pub fn is_mbb(self, n: usize) -> bool {
        self.ell <= n && self.b == n / self.ell
    }
}

/// Smallest count `c` in `1..=total` with `c / total >= p`.
///
/// This is the rank of the order statistic returned by `inf{u : F(u) >= p}`
/// when `F` is a step function with jumps at multiples of `1/total`. The
/// comparison is done on the rounded quotient, so `p = 0.3` with `total = 10`
/// selects rank 3.
pub fn rank_for(total: u64, p: f64) -> u64 {
    debug_assert!(total > 0);
    let denom = total as f64;
    let reaches = |c: u64| c as f64 / denom >= p;
    let mut c = ((denom * p).ceil() as u64).clamp(1, total);
    while c > 1 && reaches(c - 1) {
        c -= 1;
    }
    while c < total && !reaches(c) {
        c += 1;
    }
    c
}

fn nonempty(series: &[f64]) -> Result<()> {
    if series.is_empty() {
        Err(Error::invalid("series must contain at least one observation"))
    } else {
        Ok(())
    }
}

/// `F_n(x) = n^-1 #{t : X_t <= x}`.
pub fn empirical_cdf(series: &[f64], x: f64) -> Result<f64> {
    nonempty(series)?;
    let count = series.iter().filter(|v| **v <= x).count();
    Ok(count as f64 / series.len() as f64)
}

/// `F_n^{-1}(p)`: the `ceil(np)`-th order statistic.
pub fn sample_quantile(series: &[f64], q: QuantileSpec) -> Result<f64> {
    nonempty(series)?;
    let k = rank_for(series.len() as u64, q.p()) as usize;
    let mut scratch = series.to_vec();
    Ok(kth_smallest(&mut scratch, k))
}

/// `k`-th smallest (1-based) of `values`, reordering the slice.
pub(crate) fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    *values.select_nth_unstable_by(k - 1, f64::total_cmp).1
}

fn check_block_len(n: usize, ell: usize) -> Result<()> {
    if ell == 0 || ell > n {
        return Err(Error::invalid(format!(
            "block length must satisfy 1 <= ell <= n (ell={ell}, n={n})"
        )));
    }
    Ok(())
}

/// Number of length-`ell` blocks covering each position, i.e. the weight
/// numerators `min(t, ell, n-ell+1, n-t+1)` for `t = 1..=n`. The common
/// denominator is `ell (n - ell + 1)`.
pub(crate) fn block_membership_counts(n: usize, ell: usize) -> Vec<u64> {
    let cap = ell.min(n - ell + 1);
    (1..=n).map(|t| t.min(n - t + 1).min(cap) as u64).collect()
}

pub(crate) fn block_weight_denominator(n: usize, ell: usize) -> u64 {
    (ell * (n - ell + 1)) as u64
}

/// Per-observation weights `w_t` with `F~_n(x) = sum_t w_t 1{X_t <= x}`.
pub fn block_weights(n: usize, ell: usize) -> Result<Vec<f64>> {
    check_block_len(n, ell)?;
    let denom = block_weight_denominator(n, ell) as f64;
    Ok(block_membership_counts(n, ell)
        .into_iter()
        .map(|c| c as f64 / denom)
        .collect())
}

/// `F~_n(x)`.
pub fn block_avg_cdf(series: &[f64], ell: usize, x: f64) -> Result<f64> {
    check_block_len(series.len(), ell)?;
    let num: u64 = series
        .iter()
        .zip(block_membership_counts(series.len(), ell))
        .filter(|(v, _)| **v <= x)
        .map(|(_, c)| c)
        .sum();
    Ok(num as f64 / block_weight_denominator(series.len(), ell) as f64)
}

/// `F~_n^{-1}(p)`, the centering `xi~_n` of the bootstrap statistic.
pub fn block_avg_quantile(series: &[f64], ell: usize, q: QuantileSpec) -> Result<f64> {
    check_block_len(series.len(), ell)?;
    Ok(SortedSeries::new(series).block_avg_quantile(ell, q))
}

/// `F~_n` as a weighted sample over the distinct observed values.
pub fn block_avg_sample(series: &[f64], ell: usize) -> Result<WeightedSample> {
    check_block_len(series.len(), ell)?;
    let sorted = SortedSeries::new(series);
    let counts = block_membership_counts(series.len(), ell);
    let denom = block_weight_denominator(series.len(), ell) as f64;
    let mut values: Vec<f64> = Vec::new();
    let mut num: Vec<u64> = Vec::new();
    for &t in &sorted.order {
        let v = series[t];
        if values.last() == Some(&v) {
            *num.last_mut().expect("parallel vectors") += counts[t];
        } else {
            values.push(v);
            num.push(counts[t]);
        }
    }
    Ok(WeightedSample {
        values,
        weights: num.into_iter().map(|c| c as f64 / denom).collect(),
    })
}

/// Distinct sorted values with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

/// A series together with its sort permutation, for repeated quantile and
/// CDF queries at several block lengths.
#[derive(Debug, Clone)]
pub struct SortedSeries<'a> {
    values: &'a [f64],
    order: Vec<usize>,
}

impl<'a> SortedSeries<'a> {
    pub fn new(values: &'a [f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        SortedSeries { values, order }
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn sample_quantile(&self, q: QuantileSpec) -> f64 {
        let k = rank_for(self.n() as u64, q.p()) as usize;
        self.values[self.order[k - 1]]
    }

    /// `F~_n^{-1}(p)` for `1 <= ell <= n`; ties are merged before the scan.
    pub fn block_avg_quantile(&self, ell: usize, q: QuantileSpec) -> f64 {
        let n = self.n();
        let counts = block_membership_counts(n, ell);
        let target = rank_for(block_weight_denominator(n, ell), q.p());
        let mut cum = 0u64;
        let mut i = 0;
        while i < n {
            let v = self.values[self.order[i]];
            while i < n && self.values[self.order[i]] == v {
                cum += counts[self.order[i]];
                i += 1;
            }
            if cum >= target {
                return v;
            }
        }
        self.values[self.order[n - 1]]
    }
}
