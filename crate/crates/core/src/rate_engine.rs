//! Decision thresholds at global FMR operational points and per-group
//! FMR / FNMR at those thresholds.
//!
//! Scores are similarities: a comparison is a match iff `score >= t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::score_model::{ComparisonSet, GroupRateTable};

pub const DEFAULT_FMR_TARGETS: [f64; 3] = [0.1, 0.01, 0.001];

/// Global FMR targets, strictly decreasing, each in (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OperationalPoints {
    targets: Vec<f64>,
}

impl OperationalPoints {
    pub fn new(targets: Vec<f64>) -> Result<Self> {
        for (i, t) in targets.iter().enumerate() {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(FairError::invalid(
                    format!("fmr_targets[{i}]"),
                    format!("target {t} outside (0, 1]"),
                ));
            }
        }
        if let Some(i) = targets.windows(2).position(|w| w[1] >= w[0]) {
            return Err(FairError::invalid(
                format!("fmr_targets[{}]", i + 1),
                "targets must be strictly decreasing",
            ));
        }
        Ok(Self { targets })
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `t1`, `t2`, ... in target order.
    pub fn labels(&self) -> Vec<String> {
        (1..=self.targets.len()).map(|i| format!("t{i}")).collect()
    }
}

impl Default for OperationalPoints {
    fn default() -> Self {
        Self {
            targets: DEFAULT_FMR_TARGETS.to_vec(),
        }
    }
}

impl TryFrom<Vec<f64>> for OperationalPoints {
    type Error = FairError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OperationalPoints> for Vec<f64> {
    fn from(p: OperationalPoints) -> Self {
        p.targets
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub label: String,
    pub target: f64,
    /// Decision threshold; a comparison matches iff `score >= threshold`.
    pub threshold: f64,
    #[serde(with = "crate::numfmt::frac4")]
    pub achieved_fmr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    entries: Vec<ThresholdEntry>,
}

impl ThresholdSet {
    pub fn new(entries: Vec<ThresholdEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[ThresholdEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.threshold).collect()
    }
}

fn check_target(target: f64) -> Result<()> {
    if target > 0.0 && target <= 1.0 {
        Ok(())
    } else {
        Err(FairError::invalid("target", format!("target {target} outside (0, 1]")))
    }
}

/// Smallest threshold over the ascending `sorted` impostor scores with
/// `count(score >= t) / N <= target`. Candidates are the distinct scores and
/// one value just above the maximum.
fn solve_sorted(sorted: &[f64], target: f64) -> (f64, f64) {
    let n = sorted.len();
    let total = n as f64;
    let mut i = 0;
    while i < n {
        let accepted = n - i;
        let fmr = accepted as f64 / total;
        if fmr <= target {
            return (sorted[i], fmr);
        }
        let v = sorted[i];
        while i < n && sorted[i] == v {
            i += 1;
        }
    }
    (sorted[n - 1].next_up(), 0.0)
}

fn sorted_nonmated(set: &ComparisonSet) -> Result<Vec<f64>> {
    let mut scores = set.nonmated_scores();
    if scores.is_empty() {
        return Err(FairError::Unsolvable("no non-mated records".into()));
    }
    scores.sort_by(f64::total_cmp);
    Ok(scores)
}

/// Returns `(threshold, achieved FMR)` for one global FMR target.
pub fn solve_threshold(set: &ComparisonSet, target: f64) -> Result<(f64, f64)> {
    check_target(target)?;
    let sorted = sorted_nonmated(set)?;
    Ok(solve_sorted(&sorted, target))
}

/// Solves every operational point on the pooled non-mated scores.
pub fn solve_all(set: &ComparisonSet, points: &OperationalPoints) -> Result<ThresholdSet> {
    if points.targets().is_empty() {
        return Ok(ThresholdSet::default());
    }
    let sorted = sorted_nonmated(set)?;
    let entries = points
        .targets()
        .iter()
        .zip(points.labels())
        .map(|(&target, label)| {
            let (threshold, achieved_fmr) = solve_sorted(&sorted, target);
            ThresholdEntry {
                label,
                target,
                threshold,
                achieved_fmr,
            }
        })
        .collect();
    Ok(ThresholdSet::new(entries))
}

/// Sorted score lists of one group.
struct GroupScores {
    mated: Vec<f64>,
    nonmated: Vec<f64>,
}

impl GroupScores {
    fn fmr(&self, t: f64) -> f64 {
        let below = self.nonmated.partition_point(|&s| s < t);
        (self.nonmated.len() - below) as f64 / self.nonmated.len() as f64
    }

    fn fnmr(&self, t: f64) -> f64 {
        self.mated.partition_point(|&s| s < t) as f64 / self.mated.len() as f64
    }
}

fn split_groups(set: &ComparisonSet) -> Result<Vec<GroupScores>> {
    let index: std::collections::HashMap<&str, usize> = set
        .groups()
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let mut out: Vec<GroupScores> = set
        .groups()
        .iter()
        .map(|_| GroupScores {
            mated: Vec::new(),
            nonmated: Vec::new(),
        })
        .collect();
    for rec in set.records() {
        let g = &mut out[index[rec.group.as_str()]];
        if rec.mated {
            g.mated.push(rec.score);
        } else {
            g.nonmated.push(rec.score);
        }
    }
    for (name, g) in set.groups().iter().zip(&out) {
        if g.mated.is_empty() {
            return Err(FairError::GroupRate {
                group: name.clone(),
                reason: "no mated records, FNMR undefined".into(),
            });
        }
        if g.nonmated.is_empty() {
            return Err(FairError::GroupRate {
                group: name.clone(),
                reason: "no non-mated records, FMR undefined".into(),
            });
        }
    }
    out.par_iter_mut().for_each(|g| {
        g.mated.sort_by(f64::total_cmp);
        g.nonmated.sort_by(f64::total_cmp);
    });
    Ok(out)
}

/// Per-group and pooled FMR / FNMR at the solved thresholds.
pub fn group_rates(set: &ComparisonSet, ts: &ThresholdSet) -> Result<GroupRateTable> {
    group_rates_at(set, &ts.labels(), &ts.values())?.with_thresholds(ts.clone())
}

/// Per-group and pooled FMR / FNMR at arbitrary threshold values.
pub fn group_rates_at(
    set: &ComparisonSet,
    labels: &[String],
    thresholds: &[f64],
) -> Result<GroupRateTable> {
    if labels.len() != thresholds.len() {
        return Err(FairError::invalid(
            "thresholds",
            "label and threshold counts differ",
        ));
    }
    let groups = split_groups(set)?;
    let (fmr, fnmr): (Vec<Vec<f64>>, Vec<Vec<f64>>) = groups
        .par_iter()
        .map(|g| {
            (
                thresholds.iter().map(|&t| g.fmr(t)).collect(),
                thresholds.iter().map(|&t| g.fnmr(t)).collect(),
            )
        })
        .unzip();

    let mut pooled = GroupScores {
        mated: Vec::new(),
        nonmated: Vec::new(),
    };
    for g in &groups {
        pooled.mated.extend_from_slice(&g.mated);
        pooled.nonmated.extend_from_slice(&g.nonmated);
    }
    pooled.mated.sort_by(f64::total_cmp);
    pooled.nonmated.sort_by(f64::total_cmp);
    let overall_fmr = thresholds.iter().map(|&t| pooled.fmr(t)).collect();
    let overall_fnmr = thresholds.iter().map(|&t| pooled.fnmr(t)).collect();

    GroupRateTable::new(set.groups().to_vec(), labels.to_vec(), fmr, fnmr)?
        .with_overall(overall_fmr, overall_fnmr)
}
