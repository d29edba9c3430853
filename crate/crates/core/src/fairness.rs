//! Demographic fairness metrics over per-group FMR / FNMR.
//!
//! * FDR: `1 - (alpha*A + (1-alpha)*B)` with `A`, `B` the largest pairwise
//!   FMR and FNMR differences. 1 is fair.
//! * IR: `A^alpha * B^(1-alpha)` with `A`, `B` the max/min FMR and FNMR
//!   ratios. 1 is fair, unbounded above.
//! * GARBE: `alpha*G_fmr + (1-alpha)*G_fnmr` with `G` the sample-corrected
//!   Gini coefficient. 0 is fair.
//!
//! All rates are fractions. Ratios use extended reals: `x/0 = inf` for
//! `x > 0` and `0/0 = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::numfmt::{ext4, frac4};
use crate::score_model::GroupRateTable;

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessConfig {
    pub alpha: f64,
}

impl FairnessConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha })
    }
}

impl Default for FairnessConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(FairError::invalid("alpha", format!("alpha {alpha} outside (0, 1)")))
    }
}

fn check_rates(name: &str, rates: &[f64]) -> Result<()> {
    if rates.len() < 2 {
        return Err(FairError::UndefinedMetric(format!(
            "{name} needs at least 2 groups, got {}",
            rates.len()
        )));
    }
    if let Some(i) = rates.iter().position(|r| !(0.0..=1.0).contains(r)) {
        return Err(FairError::invalid(
            format!("{name}[{i}]"),
            format!("rate {} outside [0, 1]", rates[i]),
        ));
    }
    Ok(())
}

fn check_pair(fmr: &[f64], fnmr: &[f64], alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    check_rates("fmr", fmr)?;
    check_rates("fnmr", fnmr)?;
    if fmr.len() != fnmr.len() {
        return Err(FairError::invalid(
            "fnmr",
            format!("{} FMRs but {} FNMRs", fmr.len(), fnmr.len()),
        ));
    }
    Ok(())
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Largest pairwise absolute difference.
pub fn max_difference(rates: &[f64]) -> f64 {
    let (lo, hi) = min_max(rates);
    hi - lo
}

/// max / min under extended-real rules.
pub fn max_min_ratio(rates: &[f64]) -> f64 {
    let (lo, hi) = min_max(rates);
    if lo == 0.0 {
        if hi > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    } else {
        hi / lo
    }
}

pub fn fdr(fmr: &[f64], fnmr: &[f64], alpha: f64) -> Result<f64> {
    check_pair(fmr, fnmr, alpha)?;
    Ok(fdr_from(max_difference(fmr), max_difference(fnmr), alpha))
}

fn fdr_from(a: f64, b: f64, alpha: f64) -> f64 {
    1.0 - (alpha * a + (1.0 - alpha) * b)
}

pub fn ir(fmr: &[f64], fnmr: &[f64], alpha: f64) -> Result<f64> {
    check_pair(fmr, fnmr, alpha)?;
    Ok(ir_from(max_min_ratio(fmr), max_min_ratio(fnmr), alpha))
}

fn ir_from(a: f64, b: f64, alpha: f64) -> f64 {
    if a.is_infinite() || b.is_infinite() {
        return f64::INFINITY;
    }
    a.powf(alpha) * b.powf(1.0 - alpha)
}

/// Sample-corrected Gini coefficient `n/(n-1) * sum_ij |r_i - r_j| / (2 n^2 mean)`.
///
/// Evaluated from the sorted values, where the ordered-pair double sum equals
/// `2 * sum_k (2k - n + 1) r_(k)`. A zero mean gives 0.
pub fn gini(rates: &[f64]) -> Result<f64> {
    if rates.len() < 2 {
        return Err(FairError::UndefinedMetric(format!(
            "gini needs at least 2 values, got {}",
            rates.len()
        )));
    }
    if let Some(i) = rates.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(FairError::invalid(
            format!("rates[{i}]"),
            format!("value {} must be finite and non-negative", rates[i]),
        ));
    }
    let n = rates.len() as f64;
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mean = total / n;
    let floor = sorted[0];
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, r)| (2.0 * k as f64 - n + 1.0) * (r - floor))
        .sum();
    let pair_sum = 2.0 * weighted;
    let g = (n / (n - 1.0)) * pair_sum / (2.0 * n * n * mean);
    Ok(g.clamp(0.0, 1.0))
}

pub fn garbe(fmr: &[f64], fnmr: &[f64], alpha: f64) -> Result<f64> {
    check_pair(fmr, fnmr, alpha)?;
    Ok(alpha * gini(fmr)? + (1.0 - alpha) * gini(fnmr)?)
}

/// All three metrics at one threshold, with their components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    #[serde(with = "frac4")]
    pub fdr: f64,
    #[serde(with = "ext4")]
    pub ir: f64,
    #[serde(with = "frac4")]
    pub garbe: f64,
    #[serde(with = "frac4")]
    pub a_diff: f64,
    #[serde(with = "frac4")]
    pub b_diff: f64,
    #[serde(with = "ext4")]
    pub a_ratio: f64,
    #[serde(with = "ext4")]
    pub b_ratio: f64,
    #[serde(with = "frac4")]
    pub gini_fmr: f64,
    #[serde(with = "frac4")]
    pub gini_fnmr: f64,
}

impl MetricRow {
    pub fn compute(label: impl Into<String>, fmr: &[f64], fnmr: &[f64], alpha: f64) -> Result<Self> {
        check_pair(fmr, fnmr, alpha)?;
        let a_diff = max_difference(fmr);
        let b_diff = max_difference(fnmr);
        let a_ratio = max_min_ratio(fmr);
        let b_ratio = max_min_ratio(fnmr);
        let gini_fmr = gini(fmr)?;
        let gini_fnmr = gini(fnmr)?;
        Ok(Self {
            label: label.into(),
            fdr: fdr_from(a_diff, b_diff, alpha),
            ir: ir_from(a_ratio, b_ratio, alpha),
            garbe: alpha * gini_fmr + (1.0 - alpha) * gini_fnmr,
            a_diff,
            b_diff,
            a_ratio,
            b_ratio,
            gini_fmr,
            gini_fnmr,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub alpha: f64,
    pub groups: Vec<String>,
    pub rows: Vec<MetricRow>,
}

impl FairnessReport {
    pub fn row(&self, label: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// FDR, IR, and GARBE at every threshold of `table`.
pub fn metric_suite(table: &GroupRateTable, cfg: &FairnessConfig) -> Result<FairnessReport> {
    check_alpha(cfg.alpha)?;
    if table.n_groups() < 2 {
        return Err(FairError::UndefinedMetric(format!(
            "fairness metrics need at least 2 groups, table has {}",
            table.n_groups()
        )));
    }
    let rows = table
        .threshold_labels()
        .iter()
        .enumerate()
        .map(|(z, label)| MetricRow::compute(label.clone(), &table.fmr_at(z), &table.fnmr_at(z), cfg.alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(FairnessReport {
        alpha: cfg.alpha,
        groups: table.groups().to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const T1_FMR: [f64; 6] = [0.2003, 0.1827, 0.0567, 0.0725, 0.0328, 0.0550];
    const T1_FNMR: [f64; 6] = [0.0053, 0.0040, 0.0068, 0.0147, 0.0080, 0.0060];

    /// Literal double sum, kept separate from the sorted-sum implementation.
    fn gini_double_sum(r: &[f64]) -> f64 {
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        if mean == 0.0 {
            return 0.0;
        }
        let mut s = 0.0;
        for a in r {
            for b in r {
                s += (a - b).abs();
            }
        }
        (n / (n - 1.0)) * s / (2.0 * n * n * mean)
    }

    #[test]
    fn arcface_diveface_t1() {
        let f = fdr(&T1_FMR, &T1_FNMR, 0.5).unwrap();
        assert!((f - 0.91).abs() <= 0.005, "{f}");
        let i = ir(&T1_FMR, &T1_FNMR, 0.5).unwrap();
        assert!((i / 4.75 - 1.0).abs() <= 0.02, "{i}");
        let g = garbe(&T1_FMR, &T1_FNMR, 0.5).unwrap();
        assert!((g - 0.35).abs() <= 0.01, "{g}");
    }

    #[test]
    fn gini_of_t1_fmr_row() {
        let expected = gini_double_sum(&T1_FMR);
        assert!((expected - 0.412).abs() < 5e-4, "{expected}");
        assert!((gini(&T1_FMR).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gini_edge_cases() {
        for x in [1e-9, 0.3, 1.0] {
            assert!((gini(&[x, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        }
        assert_eq!(gini(&[0.2; 5]).unwrap(), 0.0);
        assert_eq!(gini(&[0.0; 3]).unwrap(), 0.0);
        assert!(matches!(gini(&[0.5]), Err(FairError::UndefinedMetric(_))));
        assert!(matches!(gini(&[0.5, -0.1]), Err(FairError::Invalid { .. })));
    }

    #[test]
    fn maximal_and_zero_discrepancy() {
        assert_eq!(fdr(&[0.0, 1.0], &[0.0, 1.0], 0.5).unwrap(), 0.0);
        assert_eq!(fdr(&[0.3, 0.3], &[0.1, 0.1], 0.5).unwrap(), 1.0);
        assert_eq!(ir(&[0.3, 0.3, 0.3], &[0.1, 0.1, 0.1], 0.5).unwrap(), 1.0);
        assert_eq!(garbe(&[0.3, 0.3], &[0.1, 0.1], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn ir_extended_reals() {
        assert_eq!(ir(&[0.0, 0.01], &[0.2, 0.3], 0.5).unwrap(), f64::INFINITY);
        assert_eq!(ir(&[0.1, 0.2], &[0.0, 0.3], 0.5).unwrap(), f64::INFINITY);
        // 0/0 = 1
        let v = ir(&[0.0, 0.0], &[0.1, 0.4], 0.5).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fewer_than_two_groups() {
        assert!(matches!(fdr(&[0.1], &[0.1], 0.5), Err(FairError::UndefinedMetric(_))));
        assert!(matches!(ir(&[], &[], 0.5), Err(FairError::UndefinedMetric(_))));
        let t = GroupRateTable::new(vec!["A".into()], vec!["t1".into()], vec![vec![0.1]], vec![vec![0.1]]).unwrap();
        assert!(matches!(
            metric_suite(&t, &FairnessConfig::default()),
            Err(FairError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn alpha_bounds() {
        assert!(FairnessConfig::new(0.0).is_err());
        assert!(FairnessConfig::new(1.0).is_err());
        assert!(fdr(&[0.1, 0.2], &[0.1, 0.2], 1.5).is_err());
    }

    #[test]
    fn equal_single_threshold_table() {
        let t = GroupRateTable::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec!["t1".into()],
            vec![vec![0.1]; 3],
            vec![vec![0.05]; 3],
        )
        .unwrap();
        let r = metric_suite(&t, &FairnessConfig::default()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].fdr, 1.0);
        assert_eq!(r.rows[0].ir, 1.0);
        assert_eq!(r.rows[0].garbe, 0.0);
    }

    #[test]
    fn alpha_weighting_moves_fdr() {
        let fmr = [0.1, 0.3];
        let fnmr = [0.2, 0.2];
        let lo = fdr(&fmr, &fnmr, 0.3).unwrap();
        let hi = fdr(&fmr, &fnmr, 0.7).unwrap();
        assert!(hi < lo);
    }
}
