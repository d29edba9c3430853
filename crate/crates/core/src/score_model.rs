//! Comparison records, per-group rate tables, and the two input formats.
//!
//! Comparison files are UTF-8 CSV with the header `score,mated,group`:
//!
//! ```text
//! score,mated,group
//! 0.91,1,AS
//! 0.12,0,AS
//! ```
//!
//! `mated` is `1` for a genuine (same identity) pair and `0` for an impostor
//! pair. A non-mated record's group means both samples belong to that group.
//!
//! Rate tables are JSON documents with `groups`, `threshold_labels`, and
//! row-major `fmr` / `fnmr` matrices holding fractions (not percentages).

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::rate_engine::ThresholdSet;

pub const COMPARISON_HEADER: [&str; 3] = ["score", "mated", "group"];

/// Default finest operational point, used for the resolution warning.
pub const DEFAULT_FINEST_TARGET: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub score: f64,
    pub mated: bool,
    pub group: String,
}

impl ComparisonRecord {
    pub fn new(score: f64, mated: bool, group: impl Into<String>) -> Self {
        Self {
            score,
            mated,
            group: group.into(),
        }
    }
}

fn check_group_token(group: &str) -> std::result::Result<(), String> {
    if group.is_empty() {
        return Err("empty group".into());
    }
    if group
        .chars()
        .any(|c| matches!(c, ',' | '"' | '\n' | '\r'))
    {
        return Err(format!("group `{group}` contains a delimiter character"));
    }
    Ok(())
}

/// Mated / non-mated record counts of one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub mated: usize,
    pub nonmated: usize,
}

/// Ordered list of scored comparisons plus the derived group set.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSet {
    records: Vec<ComparisonRecord>,
    groups: Vec<String>,
}

impl ComparisonSet {
    /// Builds a set, checking record invariants and that at least one mated
    /// and one non-mated record exist.
    pub fn new(records: Vec<ComparisonRecord>) -> Result<Self> {
        let mut groups: Vec<String> = Vec::new();
        let mut seen: HashMap<&str, ()> = HashMap::new();
        let (mut mated, mut nonmated) = (0usize, 0usize);
        for (i, rec) in records.iter().enumerate() {
            if !rec.score.is_finite() {
                return Err(FairError::invalid(
                    format!("records[{i}].score"),
                    "score must be finite",
                ));
            }
            check_group_token(&rec.group)
                .map_err(|r| FairError::invalid(format!("records[{i}].group"), r))?;
            if seen.insert(rec.group.as_str(), ()).is_none() {
                groups.push(rec.group.clone());
            }
            if rec.mated {
                mated += 1;
            } else {
                nonmated += 1;
            }
        }
        if mated == 0 || nonmated == 0 {
            return Err(FairError::invalid(
                "records",
                format!(
                    "need at least one mated and one non-mated record (got {mated} mated, {nonmated} non-mated)"
                ),
            ));
        }
        Ok(Self { records, groups })
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    /// Distinct groups in order of first appearance.
    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self) -> HashMap<&str, GroupCounts> {
        let mut out: HashMap<&str, GroupCounts> = self
            .groups
            .iter()
            .map(|g| (g.as_str(), GroupCounts::default()))
            .collect();
        for rec in &self.records {
            let c = out.get_mut(rec.group.as_str()).expect("group derived from records");
            if rec.mated {
                c.mated += 1;
            } else {
                c.nonmated += 1;
            }
        }
        out
    }

    pub fn mated_count(&self) -> usize {
        self.records.iter().filter(|r| r.mated).count()
    }

    pub fn nonmated_count(&self) -> usize {
        self.records.len() - self.mated_count()
    }

    /// Non-mated scores of the whole set.
    pub fn nonmated_scores(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| !r.mated)
            .map(|r| r.score)
            .collect()
    }

    /// Writes the set in the comparison CSV format.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        let io_err = |e: csv::Error| FairError::Document {
            context: "writing comparisons".into(),
            reason: e.to_string(),
        };
        wtr.write_record(COMPARISON_HEADER).map_err(io_err)?;
        for rec in &self.records {
            // `{}` on f64 prints the shortest string that parses back exactly.
            wtr.write_record([
                rec.score.to_string().as_str(),
                if rec.mated { "1" } else { "0" },
                rec.group.as_str(),
            ])
            .map_err(io_err)?;
        }
        wtr.flush().map_err(|e| FairError::Document {
            context: "writing comparisons".into(),
            reason: e.to_string(),
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Parses a comparison CSV stream. Errors carry the 1-based line number.
pub fn parse_comparisons<R: Read>(stream: R) -> Result<ComparisonSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(stream);

    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(FairError::Parse {
                line: 1,
                reason: e.to_string(),
            })
        }
        None => {
            return Err(FairError::Parse {
                line: 1,
                reason: "missing header `score,mated,group`".into(),
            })
        }
    };
    if header.iter().map(str::trim).ne(COMPARISON_HEADER.iter().copied()) {
        return Err(FairError::Parse {
            line: 1,
            reason: format!(
                "missing header `score,mated,group` (found `{}`)",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| FairError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() == 1 && row[0].trim().is_empty() {
            continue;
        }
        if row.len() != 3 {
            return Err(FairError::Parse {
                line,
                reason: format!("expected 3 fields, found {}", row.len()),
            });
        }
        let score_txt = row[0].trim();
        let score: f64 = score_txt.parse().map_err(|_| FairError::Parse {
            line,
            reason: format!("malformed score `{score_txt}`"),
        })?;
        if !score.is_finite() {
            return Err(FairError::Parse {
                line,
                reason: format!("score `{score_txt}` is not finite"),
            });
        }
        let mated = match row[1].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(FairError::Parse {
                    line,
                    reason: format!("invalid mated flag `{other}` (expected 0 or 1)"),
                })
            }
        };
        let group = row[2].trim();
        check_group_token(group).map_err(|reason| FairError::Parse { line, reason })?;
        records.push(ComparisonRecord::new(score, mated, group));
    }

    ComparisonSet::new(records).map_err(|e| match e {
        FairError::Invalid { reason, .. } => FairError::Parse {
            line: 0,
            reason,
        },
        other => other,
    })
}

/// FMR and FNMR per group and threshold, stored as fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRateTable {
    groups: Vec<String>,
    threshold_labels: Vec<String>,
    thresholds: Option<ThresholdSet>,
    fmr: Vec<Vec<f64>>,
    fnmr: Vec<Vec<f64>>,
    overall_fmr: Option<Vec<f64>>,
    overall_fnmr: Option<Vec<f64>>,
}

fn check_matrix(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows {
        return Err(FairError::invalid(
            name,
            format!("expected {rows} rows (one per group), found {}", m.len()),
        ));
    }
    for (i, row) in m.iter().enumerate() {
        check_row(&format!("{name}[{i}]"), row, cols)?;
    }
    Ok(())
}

fn check_row(name: &str, row: &[f64], cols: usize) -> Result<()> {
    if row.len() != cols {
        return Err(FairError::invalid(
            name,
            format!("expected {cols} entries (one per threshold), found {}", row.len()),
        ));
    }
    for (j, v) in row.iter().enumerate() {
        if !(0.0..=1.0).contains(v) {
            return Err(FairError::invalid(
                format!("{name}[{j}]"),
                format!("rate {v} outside [0, 1]"),
            ));
        }
    }
    Ok(())
}

impl GroupRateTable {
    /// Validates shapes and ranges. Out-of-range rates are rejected, never clamped.
    pub fn new(
        groups: Vec<String>,
        threshold_labels: Vec<String>,
        fmr: Vec<Vec<f64>>,
        fnmr: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, g) in groups.iter().enumerate() {
            check_group_token(g).map_err(|r| FairError::invalid(format!("groups[{i}]"), r))?;
            if seen.insert(g.as_str(), i).is_some() {
                return Err(FairError::invalid(
                    format!("groups[{i}]"),
                    format!("duplicate group `{g}`"),
                ));
            }
        }
        let cols = threshold_labels.len();
        check_matrix("fmr", &fmr, groups.len(), cols)?;
        check_matrix("fnmr", &fnmr, groups.len(), cols)?;
        Ok(Self {
            groups,
            threshold_labels,
            thresholds: None,
            fmr,
            fnmr,
            overall_fmr: None,
            overall_fnmr: None,
        })
    }

    pub fn with_overall(mut self, fmr: Vec<f64>, fnmr: Vec<f64>) -> Result<Self> {
        let cols = self.threshold_labels.len();
        check_row("overall_fmr", &fmr, cols)?;
        check_row("overall_fnmr", &fnmr, cols)?;
        self.overall_fmr = Some(fmr);
        self.overall_fnmr = Some(fnmr);
        Ok(self)
    }

    pub fn with_thresholds(mut self, ts: ThresholdSet) -> Result<Self> {
        if ts.len() != self.threshold_labels.len() {
            return Err(FairError::invalid(
                "thresholds",
                format!(
                    "{} thresholds for {} labels",
                    ts.len(),
                    self.threshold_labels.len()
                ),
            ));
        }
        self.thresholds = Some(ts);
        Ok(self)
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn threshold_labels(&self) -> &[String] {
        &self.threshold_labels
    }

    pub fn thresholds(&self) -> Option<&ThresholdSet> {
        self.thresholds.as_ref()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_thresholds(&self) -> usize {
        self.threshold_labels.len()
    }

    /// Rows are groups, columns thresholds.
    pub fn fmr(&self) -> &[Vec<f64>] {
        &self.fmr
    }

    pub fn fnmr(&self) -> &[Vec<f64>] {
        &self.fnmr
    }

    pub fn overall_fmr(&self) -> Option<&[f64]> {
        self.overall_fmr.as_deref()
    }

    pub fn overall_fnmr(&self) -> Option<&[f64]> {
        self.overall_fnmr.as_deref()
    }

    /// Group FMRs at threshold `z`, in group order.
    pub fn fmr_at(&self, z: usize) -> Vec<f64> {
        self.fmr.iter().map(|row| row[z]).collect()
    }

    pub fn fnmr_at(&self, z: usize) -> Vec<f64> {
        self.fnmr.iter().map(|row| row[z]).collect()
    }

    pub fn group_index(&self, group: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == group)
    }

    pub fn to_doc(&self) -> RateTableDoc {
        RateTableDoc {
            groups: self.groups.clone(),
            threshold_labels: self.threshold_labels.clone(),
            fmr: self.fmr.clone(),
            fnmr: self.fnmr.clone(),
            overall_fmr: self.overall_fmr.clone(),
            overall_fnmr: self.overall_fnmr.clone(),
            thresholds: self
                .thresholds
                .as_ref()
                .map(|ts| ts.entries().iter().map(|e| e.threshold).collect()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("rate table serializes")
    }
}

/// On-disk rate-table document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateTableDoc {
    pub groups: Vec<String>,
    pub threshold_labels: Vec<String>,
    pub fmr: Vec<Vec<f64>>,
    pub fnmr: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overall_fmr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overall_fnmr: Option<Vec<f64>>,
    /// Decision threshold values, informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
}

impl TryFrom<RateTableDoc> for GroupRateTable {
    type Error = FairError;

    fn try_from(doc: RateTableDoc) -> Result<Self> {
        let mut table = GroupRateTable::new(doc.groups, doc.threshold_labels, doc.fmr, doc.fnmr)?;
        match (doc.overall_fmr, doc.overall_fnmr) {
            (Some(f), Some(n)) => table = table.with_overall(f, n)?,
            (None, None) => {}
            _ => {
                return Err(FairError::invalid(
                    "overall_fmr",
                    "overall_fmr and overall_fnmr must be given together",
                ))
            }
        }
        Ok(table)
    }
}

/// Parses and validates a rate-table JSON document.
pub fn parse_rate_table(doc: &str) -> Result<GroupRateTable> {
    let raw: RateTableDoc = serde_json::from_str(doc).map_err(|e| FairError::Document {
        context: "rate table".into(),
        reason: e.to_string(),
    })?;
    GroupRateTable::try_from(raw)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    /// Offending record index, when the finding is record-specific.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_usable(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks every group has both comparison kinds. Warns when a group's
/// non-mated count cannot resolve the finest operational point.
pub fn validate_set(set: &ComparisonSet) -> ValidationReport {
    validate_set_for(set, DEFAULT_FINEST_TARGET)
}

pub fn validate_set_for(set: &ComparisonSet, finest_target: f64) -> ValidationReport {
    let counts = set.counts();
    let mut report = ValidationReport::default();
    for g in set.groups() {
        let c = counts[g.as_str()];
        if c.mated == 0 {
            report.errors.push(Finding {
                record: None,
                group: Some(g.clone()),
                reason: format!("group `{g}` has no mated records"),
            });
        }
        if c.nonmated == 0 {
            report.errors.push(Finding {
                record: None,
                group: Some(g.clone()),
                reason: format!("group `{g}` has no non-mated records"),
            });
        } else if 1.0 / (c.nonmated as f64) > finest_target {
            report.warnings.push(Finding {
                record: None,
                group: Some(g.clone()),
                reason: format!(
                    "group `{g}` has {} non-mated records: insufficient for FMR={}% resolution",
                    c.nonmated,
                    finest_target * 100.0
                ),
            });
        }
    }
    report
}
