use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use crate::empirical::BlockPlan;
use crate::error::{Error, Result};

/// A set of `(b, ell)` cells, ordered by `ell` then `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    cells: Vec<BlockPlan>,
}

impl Grid {
    /// All `(b, ell)` in the ranges with `b * ell <= n`, plus the moving block
    /// bootstrap cell `(floor(n/ell), ell)` of every `ell` when `include_mbb`.
    pub fn heatmap(
        n: usize,
        b_range: RangeInclusive<usize>,
        ell_range: RangeInclusive<usize>,
        include_mbb: bool,
    ) -> Result<Self> {
        let mut cells = BTreeSet::new();
        for ell in ell_range.clone() {
            if ell == 0 || ell > n {
                continue;
            }
            for b in b_range.clone() {
                if b >= 1 && b * ell <= n {
                    cells.insert((ell, b));
                }
            }
            if include_mbb {
                cells.insert((ell, n / ell));
            }
        }
        Self::from_sorted(cells)
    }

    /// `b in 1..=40`, `ell in 2..=40`, with MBB cells added.
    pub fn default_heatmap(n: usize) -> Result<Self> {
        Self::heatmap(n, 1..=40, 2..=40, true)
    }

    pub fn from_cells(cells: impl IntoIterator<Item = BlockPlan>) -> Result<Self> {
        Self::from_sorted(cells.into_iter().map(|p| (p.ell, p.b)).collect())
    }

    fn from_sorted(cells: BTreeSet<(usize, usize)>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::invalid("grid has no admissible (b, ell) cells"));
        }
        Ok(Grid {
            cells: cells.into_iter().map(|(ell, b)| BlockPlan { b, ell }).collect(),
        })
    }

    pub fn cells(&self) -> &[BlockPlan] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Every cell must satisfy `ell <= n`.
    pub fn check_for(&self, n: usize) -> Result<()> {
        match self.cells.iter().find(|c| c.ell > n) {
            Some(c) => Err(Error::invalid(format!(
                "grid cell (b={}, ell={}) has ell > n={n}",
                c.b, c.ell
            ))),
            None => Ok(()),
        }
    }
}

/// Family of a cell: `b = 1`, `b = floor(n/ell)`, or strictly in between.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Subsampling,
    Mbb,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub b: usize,
    pub ell: usize,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
}

impl GridRow {
    pub fn plan(&self) -> BlockPlan {
        BlockPlan {
            b: self.b,
            ell: self.ell,
        }
    }
}

/// Metric values over a grid, one row per cell and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub n: usize,
    pub rows: Vec<GridRow>,
}

impl GridResult {
    pub fn region(&self, row: &GridRow) -> Region {
        if row.b == 1 {
            Region::Subsampling
        } else if row.plan().is_mbb(self.n) {
            Region::Mbb
        } else {
            Region::Hybrid
        }
    }

    fn min_where(&self, metric: &str, keep: impl Fn(&GridRow) -> bool) -> Option<&GridRow> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && keep(r))
            .min_by(|a, b| a.value.total_cmp(&b.value))
    }

    /// Grid-wide minimum of `metric`.
    pub fn min(&self, metric: &str) -> Option<&GridRow> {
        self.min_where(metric, |_| true)
    }

    /// Minimum over cells with `b = floor(n/ell)`.
    pub fn mbb_min(&self, metric: &str) -> Option<&GridRow> {
        self.min_where(metric, |r| r.plan().is_mbb(self.n))
    }

    /// Minimum over cells with `b = 1`.
    pub fn subsampling_min(&self, metric: &str) -> Option<&GridRow> {
        self.min_where(metric, |r| r.b == 1)
    }

    pub fn get(&self, b: usize, ell: usize, metric: &str) -> Option<&GridRow> {
        self.rows
            .iter()
            .find(|r| r.b == b && r.ell == ell && r.metric == metric)
    }

    /// `b,ell,metric,value,stderr` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("b,ell,metric,value,stderr\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.b, r.ell, r.metric, sig6(r.value), sig6(r.stderr));
        }
        out
    }

    /// Per-region minima: `region,b,ell,metric,value,stderr`.
    pub fn summary_csv(&self, metric: &str) -> String {
        let mut out = String::from("region,b,ell,metric,value,stderr\n");
        let regions = [
            ("all", self.min(metric)),
            ("mbb", self.mbb_min(metric)),
            ("subsampling", self.subsampling_min(metric)),
        ];
        for (name, row) in regions {
            if let Some(r) = row {
                let _ = writeln!(
                    out,
                    "{name},{},{},{},{},{}",
                    r.b,
                    r.ell,
                    r.metric,
                    sig6(r.value),
                    sig6(r.stderr)
                );
            }
        }
        out
    }
}

/// Format with 6 significant digits, `%g` style.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.00472), "0.00472");
        assert_eq!(sig6(0.6797812345), "0.679781");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(123456789.0), "1.23457e8");
        assert_eq!(sig6(0.0000123456789), "1.23457e-5");
        assert_eq!(sig6(-0.5), "-0.5");
        assert_eq!(sig6(9.9999996), "10");
    }

    #[test]
    fn heatmap_respects_budget_and_adds_mbb() {
        let g = Grid::heatmap(200, 1..=40, 2..=40, true).unwrap();
        assert!(g.cells().iter().all(|c| c.resample_len() <= 200));
        assert!(g.cells().contains(&BlockPlan { b: 33, ell: 6 }));
        assert!(g.cells().contains(&BlockPlan { b: 100, ell: 2 }));
        assert!(g.cells().contains(&BlockPlan { b: 1, ell: 14 }));
        let no_mbb = Grid::heatmap(200, 1..=40, 2..=40, false).unwrap();
        assert!(!no_mbb.cells().contains(&BlockPlan { b: 100, ell: 2 }));
        assert!(Grid::heatmap(5, 1..=3, 6..=9, true).is_err());
    }

    #[test]
    fn mbb_presets_match_standard_table() {
        // (n, ell, b) for ell near n^{1/2}, n^{1/3}, n^{1/4}, n^{1/5}.
        let table = [
            (200, [(14, 14), (6, 33), (4, 50), (3, 66)]),
            (500, [(22, 22), (8, 62), (5, 100), (4, 125)]),
            (1000, [(32, 31), (10, 100), (6, 166), (4, 250)]),
            (2000, [(45, 44), (13, 153), (7, 285), (5, 400)]),
        ];
        for (n, row) in table {
            for (ell, b) in row {
                assert_eq!(BlockPlan::mbb(n, ell).unwrap(), BlockPlan { b, ell }, "n={n}");
            }
        }
    }
}
