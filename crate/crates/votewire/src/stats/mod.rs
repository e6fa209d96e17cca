//! Distribution summaries and the hypothesis-test battery used to compare
//! electoral variables across machine groups and elections: one-way ANOVA,
//! two-sample t, Van der Waerden normal-scores test, chi-square tests and
//! Q-Q pairing.

pub mod special;

use thiserror::Error;

use crate::model::{DegreesOfFreedom, DistributionSummary, TestResult};
use special::SpecialError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty sample{0}")]
    EmptySample(String),
    #[error("not enough data for the test: {0}")]
    InsufficientData(String),
    #[error("quantile level {0} outside [0, 1]")]
    QOutOfRange(f64),
    #[error("sample contains a non-finite value")]
    NonFiniteValue,
    #[error("expected count must be positive (cell {0})")]
    ZeroExpected(usize),
    #[error("observed/expected lengths differ or fewer than 2 cells")]
    BadCells,
    #[error("binning degenerate: all mass falls in one bin")]
    DegenerateBinning,
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// A labelled sample of finite observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: String,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self, StatsError> {
        let label = label.into();
        if values.is_empty() {
            return Err(StatsError::EmptySample(format!(" ({label})")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFiniteValue);
        }
        Ok(Sample { label, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample variance with the n-1 denominator; 0 for singletons.
    pub fn variance(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Quantile by linear interpolation of order statistics with plotting
/// position (k-1)/(n-1); q = 0 gives the minimum, q = 1 the maximum.
pub fn quantile(sample: &Sample, q: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::QOutOfRange(q));
    }
    let mut sorted = sample.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(quantile_sorted(&sorted, q))
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let idx = pos.floor() as usize;
    let frac = pos - idx as f64;
    if idx + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[idx] + frac * (sorted[idx + 1] - sorted[idx])
    }
}

/// Full location/scale/quantile summary of a sample.
pub fn summarize(sample: &Sample) -> Result<DistributionSummary, StatsError> {
    let mut sorted = sample.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let min = sorted[0];
    let max = sorted[n - 1];
    Ok(DistributionSummary {
        n,
        mean: sample.mean(),
        std: sample.std(),
        min,
        max,
        range: max - min,
        q10: quantile_sorted(&sorted, 0.10),
        q25: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.50),
        q75: quantile_sorted(&sorted, 0.75),
        q90: quantile_sorted(&sorted, 0.90),
        std_degenerate: n < 2,
    })
}

/// One-way analysis of variance across two or more groups.
pub fn anova_f(groups: &[Sample]) -> Result<TestResult, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::InsufficientData("need at least 2 groups".into()));
    }
    for g in groups {
        if g.len() < 2 {
            return Err(StatsError::InsufficientData(format!(
                "group {} has fewer than 2 observations",
                g.label
            )));
        }
    }
    let n_total: usize = groups.iter().map(Sample::len).sum();
    if n_total <= k {
        return Err(StatsError::InsufficientData(
            "total observations must exceed group count".into(),
        ));
    }
    let grand_mean =
        groups.iter().flat_map(|g| g.values.iter()).sum::<f64>() / n_total as f64;
    let ss_between: f64 = groups
        .iter()
        .map(|g| g.len() as f64 * (g.mean() - grand_mean).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .map(|g| {
            let m = g.mean();
            g.values.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        })
        .sum();
    let df1 = (k - 1) as f64;
    let df2 = (n_total - k) as f64;
    let (statistic, p_value) = if ss_between <= 0.0 {
        (0.0, 1.0)
    } else if ss_within <= 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_between / df1) / (ss_within / df2);
        (f, special::f_sf(f, df1, df2)?)
    };
    Ok(TestResult {
        test_name: "anova-f".into(),
        statistic,
        df: DegreesOfFreedom::Two(df1, df2),
        p_value,
    })
}

/// Two-sample t test; pooled-variance when `pooled`, Welch otherwise.
/// Two-sided p-value.
pub fn t_test_two_sample(a: &Sample, b: &Sample, pooled: bool) -> Result<TestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientData(
            "both samples need at least 2 observations".into(),
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (a.variance(), b.variance());
    let diff = a.mean() - b.mean();
    let (statistic, df) = if pooled {
        let df = na + nb - 2.0;
        let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
        let se = (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
        (safe_ratio(diff, se), df)
    } else {
        let se2 = va / na + vb / nb;
        let df = if se2 > 0.0 {
            se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0))
        } else {
            na + nb - 2.0
        };
        (safe_ratio(diff, se2.sqrt()), df)
    };
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        special::t_two_sided_p(statistic, df)?
    };
    Ok(TestResult {
        test_name: if pooled { "t-pooled" } else { "t-welch" }.into(),
        statistic,
        df: DegreesOfFreedom::One(df),
        p_value,
    })
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else {
        num / den
    }
}

/// Van der Waerden normal-scores test for location across groups.
///
/// Pooled observations are ranked (mid-ranks on ties), each rank r maps to
/// the score Phi^-1(r / (N+1)), and the statistic
/// T = sum_j n_j * mean_score_j^2 / s^2 with s^2 = sum(scores^2) / (N-1)
/// is referred to chi-square with k-1 degrees of freedom.
pub fn van_der_waerden(groups: &[Sample]) -> Result<TestResult, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::InsufficientData("need at least 2 groups".into()));
    }
    let n_total: usize = groups.iter().map(Sample::len).sum();
    if n_total < 4 {
        return Err(StatsError::InsufficientData(
            "need at least 4 pooled observations".into(),
        ));
    }
    let scores = normal_scores_by_group(groups, n_total)?;
    let s2 = scores
        .iter()
        .flat_map(|g| g.iter())
        .map(|s| s * s)
        .sum::<f64>()
        / (n_total - 1) as f64;
    let t_num: f64 = scores
        .iter()
        .map(|g| {
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            g.len() as f64 * mean * mean
        })
        .sum();
    let df = (k - 1) as f64;
    let (statistic, p_value) = if t_num <= 0.0 || s2 <= 0.0 {
        (0.0, 1.0)
    } else {
        let t = t_num / s2;
        (t, special::chi_square_sf(t, df)?)
    };
    Ok(TestResult {
        test_name: "van-der-waerden".into(),
        statistic,
        df: DegreesOfFreedom::One(df),
        p_value,
    })
}

/// Normal scores of pooled mid-ranks, regrouped to match the input groups.
fn normal_scores_by_group(groups: &[Sample], n_total: usize) -> Result<Vec<Vec<f64>>, StatsError> {
    // (value, group index, slot within group)
    let mut pooled: Vec<(f64, usize, usize)> = Vec::with_capacity(n_total);
    for (gi, g) in groups.iter().enumerate() {
        for (si, &v) in g.values.iter().enumerate() {
            pooled.push((v, gi, si));
        }
    }
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut scores: Vec<Vec<f64>> = groups.iter().map(|g| vec![0.0; g.len()]).collect();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // Mid-rank of the tie run [i, j], 1-based.
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let score = special::normal_quantile(mid_rank / (n_total as f64 + 1.0))?;
        for item in &pooled[i..=j] {
            scores[item.1][item.2] = score;
        }
        i = j + 1;
    }
    Ok(scores)
}

/// Pearson chi-square goodness of fit of observed counts against expected
/// values; df = cells - 1.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> Result<TestResult, StatsError> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(StatsError::BadCells);
    }
    let mut statistic = 0.0;
    for (i, (&o, &e)) in observed.iter().zip(expected).enumerate() {
        if e <= 0.0 {
            return Err(StatsError::ZeroExpected(i));
        }
        statistic += (o - e) * (o - e) / e;
    }
    let df = (observed.len() - 1) as f64;
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        special::chi_square_sf(statistic, df)?
    };
    Ok(TestResult {
        test_name: "chi-square-gof".into(),
        statistic,
        df: DegreesOfFreedom::One(df),
        p_value,
    })
}

/// Binned two-sample chi-square test of independence.
///
/// Both samples are binned over the pooled range into `bins` equal-width
/// bins, forming a 2 x bins contingency table; bins whose smallest expected
/// count falls below 5 are merged rightward to keep the chi-square
/// approximation honest. df = remaining bins - 1.
pub fn chi_square_independence(
    a: &Sample,
    b: &Sample,
    bins: usize,
) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample(String::new()));
    }
    if bins < 2 {
        return Err(StatsError::BadCells);
    }
    let lo = a
        .values
        .iter()
        .chain(&b.values)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = a
        .values
        .iter()
        .chain(&b.values)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(StatsError::DegenerateBinning);
    }
    let width = (hi - lo) / bins as f64;
    let bin_of = |v: f64| -> usize { (((v - lo) / width) as usize).min(bins - 1) };
    let mut counts = vec![[0.0f64; 2]; bins];
    for &v in &a.values {
        counts[bin_of(v)][0] += 1.0;
    }
    for &v in &b.values {
        counts[bin_of(v)][1] += 1.0;
    }
    let nonempty = counts.iter().filter(|c| c[0] + c[1] > 0.0).count();
    let mut merged = merge_sparse_bins(counts.clone(), a.len() as f64, b.len() as f64);
    if merged.len() < 2 {
        // Too few observations for the expected-count rule; fall back to a
        // two-column split at the balanced cut, if the data allows one.
        if nonempty < 2 {
            return Err(StatsError::DegenerateBinning);
        }
        merged = split_in_two(&counts);
    }
    if merged.len() < 2 {
        return Err(StatsError::DegenerateBinning);
    }
    let n = (a.len() + b.len()) as f64;
    let row_tot = [a.len() as f64, b.len() as f64];
    let mut statistic = 0.0;
    for col in &merged {
        let col_tot = col[0] + col[1];
        for r in 0..2 {
            let e = row_tot[r] * col_tot / n;
            statistic += (col[r] - e) * (col[r] - e) / e;
        }
    }
    let df = (merged.len() - 1) as f64;
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        special::chi_square_sf(statistic, df)?
    };
    Ok(TestResult {
        test_name: "chi-square-independence".into(),
        statistic,
        df: DegreesOfFreedom::One(df),
        p_value,
    })
}

/// Merge columns left to right until every column's smallest expected count
/// reaches 5; a thin trailing column folds into its left neighbour.
fn merge_sparse_bins(counts: Vec<[f64; 2]>, na: f64, nb: f64) -> Vec<[f64; 2]> {
    let n = na + nb;
    let min_row = na.min(nb);
    // Expected count in a column is col_tot * row_tot / n; the binding
    // constraint is the smaller row.
    let ok = |col: &[f64; 2]| (col[0] + col[1]) * min_row / n >= 5.0;
    let mut merged: Vec<[f64; 2]> = Vec::new();
    let mut acc = [0.0f64; 2];
    let mut pending = false;
    for col in counts {
        acc[0] += col[0];
        acc[1] += col[1];
        pending = true;
        if ok(&acc) {
            merged.push(acc);
            acc = [0.0; 2];
            pending = false;
        }
    }
    if pending {
        if let Some(last) = merged.last_mut() {
            last[0] += acc[0];
            last[1] += acc[1];
        } else {
            merged.push(acc);
        }
    }
    merged
}

/// Two columns split where the cumulative count is closest to half; both
/// sides are guaranteed nonempty when at least two bins hold mass.
fn split_in_two(counts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let total: f64 = counts.iter().map(|c| c[0] + c[1]).sum();
    let mut best_cut = 0usize;
    let mut best_gap = f64::INFINITY;
    let mut cum = 0.0;
    for (i, c) in counts.iter().enumerate().take(counts.len() - 1) {
        cum += c[0] + c[1];
        if cum > 0.0 && cum < total {
            let gap = (cum - total / 2.0).abs();
            if gap < best_gap {
                best_gap = gap;
                best_cut = i;
            }
        }
    }
    if best_gap.is_infinite() {
        return Vec::new();
    }
    let mut left = [0.0f64; 2];
    let mut right = [0.0f64; 2];
    for (i, c) in counts.iter().enumerate() {
        let side = if i <= best_cut { &mut left } else { &mut right };
        side[0] += c[0];
        side[1] += c[1];
    }
    vec![left, right]
}

/// Paired quantiles of two samples at levels i/(k+1), i = 1..k, for Q-Q
/// plotting.
pub fn qq_points(a: &Sample, b: &Sample, k: usize) -> Result<Vec<(f64, f64)>, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientData(
            "both samples need at least 2 observations".into(),
        ));
    }
    if k < 2 {
        return Err(StatsError::InsufficientData("need k >= 2 points".into()));
    }
    let mut sa = a.values.clone();
    let mut sb = b.values.clone();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok((1..=k)
        .map(|i| {
            let q = i as f64 / (k + 1) as f64;
            (quantile_sorted(&sa, q), quantile_sorted(&sb, q))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(values: &[f64]) -> Sample {
        Sample::new("s", values.to_vec()).unwrap()
    }

    #[test]
    fn summarize_basic() {
        let s = summarize(&sample(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.range, 2.0);
        assert!(!s.std_degenerate);
    }

    #[test]
    fn summarize_quarter_quantile() {
        let s = summarize(&sample(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(s.q25, 1.75);
    }

    #[test]
    fn summarize_singleton() {
        let s = summarize(&sample(&[5.0])).unwrap();
        assert_eq!(s.q10, 5.0);
        assert_eq!(s.median, 5.0);
        assert_eq!(s.q90, 5.0);
        assert_eq!(s.std, 0.0);
        assert!(s.std_degenerate);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&sample(&[1.0, 2.0, 3.0]), 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&sample(&[10.0, 20.0]), 0.5).unwrap(), 15.0);
        let big: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let q = quantile(&sample(&big), 0.9).unwrap();
        assert!((q - 90.1).abs() < 1e-12);
        assert_eq!(quantile(&sample(&big), 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&sample(&big), 1.0).unwrap(), 100.0);
        assert!(quantile(&sample(&big), 1.5).is_err());
    }

    #[test]
    fn anova_identical_groups() {
        let g = sample(&[3.0, 4.0, 5.0]);
        let r = anova_f(&[g.clone(), g]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn anova_hand_computed() {
        let r = anova_f(&[sample(&[1.0, 2.0, 3.0]), sample(&[4.0, 5.0, 6.0])]).unwrap();
        assert!((r.statistic - 13.5).abs() < 1e-12);
        assert_eq!(r.df, DegreesOfFreedom::Two(1.0, 4.0));
    }

    #[test]
    fn t_matches_anova_for_two_groups() {
        let a = sample(&[1.0, 2.0, 3.0, 4.0]);
        let b = sample(&[2.0, 3.0, 4.0, 5.5]);
        let t = t_test_two_sample(&a, &b, true).unwrap();
        let f = anova_f(&[a, b]).unwrap();
        assert!((t.statistic * t.statistic - f.statistic).abs() < 1e-9 * f.statistic.abs());
        assert!((t.p_value - f.p_value).abs() < 1e-9);
    }

    #[test]
    fn t_identical_samples() {
        let a = sample(&[1.0, 2.0, 3.0]);
        let t = t_test_two_sample(&a, &a, true).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn t_hand_computed_pooled() {
        // a = {1,2,3,4}, b = {2,3,4,5}: diff = -1, sp2 = (3*5/3 + 3*5/3)/6 = 5/3,
        // se = sqrt(5/3 * 1/2) = sqrt(5/6), t = -1/sqrt(5/6).
        let a = sample(&[1.0, 2.0, 3.0, 4.0]);
        let b = sample(&[2.0, 3.0, 4.0, 5.0]);
        let t = t_test_two_sample(&a, &b, true).unwrap();
        let expected = -1.0 / (5.0f64 / 6.0).sqrt();
        assert!((t.statistic - expected).abs() < 1e-12);
        assert_eq!(t.df, DegreesOfFreedom::One(6.0));
    }

    #[test]
    fn vdw_identical_interleaved() {
        let a = sample(&[1.0, 2.0, 3.0, 4.0]);
        let r = van_der_waerden(&[a.clone(), a]).unwrap();
        // Ties give both groups identical mid-rank scores: means are 0 up
        // to rounding, so T vanishes and p sits at 1.
        assert!(r.statistic.abs() < 1e-12);
        assert!(r.p_value > 1.0 - 1e-9);
    }

    #[test]
    fn vdw_separated_groups() {
        let r = van_der_waerden(&[
            sample(&[1.0, 2.0, 3.0]),
            sample(&[10.0, 11.0, 12.0]),
        ])
        .unwrap();
        // Direct evaluation: ranks 1..6, scores Phi^-1(r/7); group means are
        // +/- the mean of the top/bottom three scores.
        let scores: Vec<f64> = (1..=6)
            .map(|r| special::normal_quantile(r as f64 / 7.0).unwrap())
            .collect();
        let m1 = (scores[0] + scores[1] + scores[2]) / 3.0;
        let m2 = (scores[3] + scores[4] + scores[5]) / 3.0;
        let s2 = scores.iter().map(|s| s * s).sum::<f64>() / 5.0;
        let expected = (3.0 * m1 * m1 + 3.0 * m2 * m2) / s2;
        assert!((r.statistic - expected).abs() < 1e-12);
    }

    #[test]
    fn gof_cases() {
        let r = chi_square_gof(&[10.0, 20.0], &[15.0, 15.0]).unwrap();
        assert!((r.statistic - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.df, DegreesOfFreedom::One(1.0));
        assert!((r.p_value - 0.0679).abs() < 2e-4, "p = {}", r.p_value);

        let eq = chi_square_gof(&[5.0, 5.0], &[5.0, 5.0]).unwrap();
        assert_eq!(eq.statistic, 0.0);
        assert_eq!(eq.p_value, 1.0);

        assert!(matches!(
            chi_square_gof(&[1.0, 2.0], &[0.0, 3.0]),
            Err(StatsError::ZeroExpected(0))
        ));
    }

    #[test]
    fn independence_identical_samples() {
        let a = sample(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        for bins in 2..6 {
            let r = chi_square_independence(&a, &a, bins).unwrap();
            assert_eq!(r.statistic, 0.0);
            assert_eq!(r.p_value, 1.0);
        }
    }

    #[test]
    fn independence_disjoint_support() {
        let a = Sample::new("a", (0..200).map(|i| i as f64 / 200.0).collect()).unwrap();
        let b = Sample::new("b", (0..200).map(|i| 10.0 + i as f64 / 200.0).collect()).unwrap();
        let r = chi_square_independence(&a, &b, 20).unwrap();
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);
    }

    #[test]
    fn independence_degenerate() {
        let a = sample(&[2.0, 2.0, 2.0]);
        assert!(matches!(
            chi_square_independence(&a, &a, 4),
            Err(StatsError::DegenerateBinning)
        ));
    }

    #[test]
    fn qq_diagonal_and_shift() {
        let a = Sample::new("a", (0..50).map(|i| i as f64).collect()).unwrap();
        for (x, y) in qq_points(&a, &a, 9).unwrap() {
            assert_eq!(x, y);
        }
        let b = Sample::new("b", (0..50).map(|i| i as f64 + 10.0).collect()).unwrap();
        for (x, y) in qq_points(&a, &b, 9).unwrap() {
            assert!((y - x - 10.0).abs() < 1e-12);
        }
        let doubled = Sample::new("d", (0..50).map(|i| 2.0 * i as f64).collect()).unwrap();
        for (x, y) in qq_points(&a, &doubled, 9).unwrap() {
            assert!((y - 2.0 * x).abs() < 1e-12);
        }
    }
}
