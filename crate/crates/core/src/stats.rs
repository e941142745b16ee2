//! Ensemble summaries and the paired Wilcoxon signed-rank test.
//!
//! Quantiles use linear interpolation between order statistics at the
//! 1-based position `1 + (n-1)·q`.
//!
//! The validation test is the *signed-rank* test on week-paired
//! differences, not the two-sample rank-sum test: simulated and observed
//! curves are compared week by week.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Result, SimError};
use crate::params::{EnsembleResult, WeeklySeries};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
/// Largest number of non-zero differences for which the p-value is exact.
pub const EXACT_MAX_N: usize = 20;
pub const QUANTILE_RULE: &str = "linear interpolation between order statistics at position 1+(n-1)q";

/// Quantile `q` of ascending-sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    match sorted.get(lo + 1) {
        Some(&hi) if frac > 0.0 => sorted[lo] + frac * (hi - sorted[lo]),
        _ => sorted[lo],
    }
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Per-week quartiles across the replicates of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySummary {
    pub min: Vec<f64>,
    pub q1: Vec<f64>,
    pub median: Vec<f64>,
    pub q3: Vec<f64>,
    pub max: Vec<f64>,
    pub iqr: Vec<f64>,
    /// Sum of the weekly IQRs.
    pub total_variation: f64,
}

impl WeeklySummary {
    pub fn weeks(&self) -> usize {
        self.median.len()
    }

    /// Week with the largest median (first on ties).
    pub fn peak_week(&self) -> usize {
        self.median
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bw, bv), (w, &v)| if v > bv { (w, v) } else { (bw, bv) })
            .0
    }

    /// IQR divided by the median at the peak week.
    pub fn peak_relative_iqr(&self) -> f64 {
        let w = self.peak_week();
        self.iqr[w] / self.median[w]
    }
}

pub fn weekly_summary(ensemble: &EnsembleResult) -> Result<WeeklySummary> {
    if ensemble.replicates() == 0 {
        return Err(SimError::EmptyEnsemble);
    }
    let weeks = ensemble.weeks();
    let mut s = WeeklySummary {
        min: Vec::with_capacity(weeks),
        q1: Vec::with_capacity(weeks),
        median: Vec::with_capacity(weeks),
        q3: Vec::with_capacity(weeks),
        max: Vec::with_capacity(weeks),
        iqr: Vec::with_capacity(weeks),
        total_variation: 0.0,
    };
    for w in 0..weeks {
        let col = sorted_copy(&ensemble.week_column(w));
        let q1 = quantile_sorted(&col, 0.25);
        let q3 = quantile_sorted(&col, 0.75);
        s.min.push(col[0]);
        s.q1.push(q1);
        s.median.push(quantile_sorted(&col, 0.5));
        s.q3.push(q3);
        s.max.push(col[col.len() - 1]);
        s.iqr.push(q3 - q1);
    }
    s.total_variation = s.iqr.iter().sum();
    Ok(s)
}

pub fn median_series(ensemble: &EnsembleResult) -> Result<WeeklySeries> {
    if ensemble.replicates() == 0 {
        return Err(SimError::EmptyEnsemble);
    }
    let medians = (0..ensemble.weeks())
        .map(|w| quantile_sorted(&sorted_copy(&ensemble.week_column(w)), 0.5))
        .collect();
    WeeklySeries::new(medians)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
    /// `min(W+, W-)`.
    pub w_statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: PValueMethod,
    pub reject_at_5pct: bool,
}

/// Ranks of `|d|` doubled so that midranks stay integral.
fn doubled_midranks(abs: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1, midrank (i+j+2)/2
        let r2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r2;
        }
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    (ranks, tie_sizes)
}

/// `P(W+ <= w2/2)` under the null, by counting sign assignments with a
/// subset-sum table over doubled ranks.
fn exact_lower_tail(ranks2: &[u64], w2: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let below: f64 = counts[..=(w2 as usize).min(reach)].iter().sum();
    below / 2f64.powi(ranks2.len() as i32)
}

/// Signed-rank test on paired differences `d`.
pub fn signed_rank_test(differences: &[f64]) -> WilcoxonResult {
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return WilcoxonResult {
            n_effective: 0,
            w_statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            p_value: 1.0,
            method: PValueMethod::Exact,
            reject_at_5pct: false,
        };
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks2, ties) = doubled_midranks(&abs);
    let w_plus2: u64 = nonzero
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total2: u64 = ranks2.iter().sum();
    let w_minus2 = total2 - w_plus2;
    let w2 = w_plus2.min(w_minus2);

    let (p, method) = if n <= EXACT_MAX_N {
        ((2.0 * exact_lower_tail(&ranks2, w2)).min(1.0), PValueMethod::Exact)
    } else {
        (normal_approx_p(n, &ties, w_plus2 as f64 / 2.0), PValueMethod::Normal)
    };
    WilcoxonResult {
        n_effective: n,
        w_statistic: w2 as f64 / 2.0,
        w_plus: w_plus2 as f64 / 2.0,
        w_minus: w_minus2 as f64 / 2.0,
        p_value: p,
        method,
        reject_at_5pct: p < SIGNIFICANCE_LEVEL,
    }
}

/// Two-sided normal approximation with tie-corrected variance and a 0.5
/// continuity correction.
pub fn normal_approx_p(n: usize, tie_sizes: &[usize], w_plus: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes.iter().map(|&t| (t as f64).powi(3) - t as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Normal-approximation p-value for arbitrary `n`, used to cross-check the
/// exact path.
pub fn signed_rank_normal_p(differences: &[f64]) -> f64 {
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return 1.0;
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks2, ties) = doubled_midranks(&abs);
    let w_plus2: u64 = nonzero
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    normal_approx_p(nonzero.len(), &ties, w_plus2 as f64 / 2.0)
}

/// Paired test of `x` against `y`, week by week.
pub fn wilcoxon_signed_rank(x: &WeeklySeries, y: &WeeklySeries) -> Result<WilcoxonResult> {
    if x.weeks() != y.weeks() {
        return Err(SimError::LengthMismatch {
            left: x.weeks(),
            right: y.weeks(),
        });
    }
    let d: Vec<f64> = x.values().iter().zip(y.values()).map(|(a, b)| a - b).collect();
    Ok(signed_rank_test(&d))
}
