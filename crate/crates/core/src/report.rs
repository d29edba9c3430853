//! Report documents and their JSON / markdown renderings.
//!
//! Every JSON document carries `schema_version: 1`. Fractions are written
//! with 4 decimals and infinite IR values as `"inf"`. Markdown shows rates
//! as percentages with 2 decimals (the same 4-decimal fraction) and metrics
//! with 4 decimals.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{FairError, Result};
use crate::fairness::FairnessReport;
use crate::numfmt::{fmt_ext, frac4_vec, round4};
use crate::rate_engine::ThresholdSet;
use crate::score_model::{Finding, GroupRateTable};
use crate::sim::{GroupDelta, MetricDelta, MitigationSpec, PipelineReport, ScenarioSpec, StageAudit};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "fairgauge";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Marker carried by every pipeline document.
pub const SIMULATED_NOTE: &str = "simulated mitigation: score-distribution shift, no model training";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Markdown => "md",
        }
    }
}

impl FromStr for Format {
    type Err = FairError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(FairError::UnknownFormat(other.to_string())),
        }
    }
}

impl<'de> serde::Deserialize<'de> for Format {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hex SHA-256 of input bytes.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A document that renders to both output formats.
pub trait Report: Serialize {
    fn markdown(&self) -> String;
}

pub fn emit_report<R: Report>(report: &R, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Markdown => report.markdown(),
    }
}

/// Like [`emit_report`] with the format given by name.
pub fn emit_report_named<R: Report>(report: &R, format: &str) -> Result<String> {
    Ok(emit_report(report, format.parse()?))
}

/// Rate table with 4-decimal fractions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatesDoc {
    pub groups: Vec<String>,
    pub threshold_labels: Vec<String>,
    pub fmr: Vec<RateRow>,
    pub fnmr: Vec<RateRow>,
    #[serde(with = "frac4_vec", skip_serializing_if = "Vec::is_empty")]
    pub overall_fmr: Vec<f64>,
    #[serde(with = "frac4_vec", skip_serializing_if = "Vec::is_empty")]
    pub overall_fnmr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RateRow(#[serde(with = "frac4_vec")] pub Vec<f64>);

impl From<&GroupRateTable> for RatesDoc {
    fn from(t: &GroupRateTable) -> Self {
        Self {
            groups: t.groups().to_vec(),
            threshold_labels: t.threshold_labels().to_vec(),
            fmr: t.fmr().iter().map(|r| RateRow(r.clone())).collect(),
            fnmr: t.fnmr().iter().map(|r| RateRow(r.clone())).collect(),
            overall_fmr: t.overall_fmr().map(<[f64]>::to_vec).unwrap_or_default(),
            overall_fnmr: t.overall_fnmr().map(<[f64]>::to_vec).unwrap_or_default(),
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", round4(x) * 100.0)
}

fn md_thresholds(out: &mut String, ts: &ThresholdSet) {
    let _ = writeln!(out, "| Threshold | Target FMR [%] | Value | Achieved FMR [%] |");
    let _ = writeln!(out, "|---|---|---|---|");
    for e in ts.entries() {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            e.label,
            pct(e.target),
            e.threshold,
            pct(e.achieved_fmr)
        );
    }
}

/// Groups as rows, FMR then FNMR columns per threshold, overall row last.
fn md_rates(out: &mut String, t: &GroupRateTable) {
    let labels = t.threshold_labels();
    let mut header = String::from("| DG |");
    for l in labels {
        let _ = write!(header, " FMR {l} [%] |");
    }
    for l in labels {
        let _ = write!(header, " FNMR {l} [%] |");
    }
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "|---|{}", "---|".repeat(2 * labels.len()));
    let row = |name: &str, fmr: &[f64], fnmr: &[f64]| {
        let cells: Vec<String> = fmr.iter().chain(fnmr).map(|&x| pct(x)).collect();
        if cells.is_empty() {
            format!("| {name} |")
        } else {
            format!("| {name} | {} |", cells.join(" | "))
        }
    };
    for (i, g) in t.groups().iter().enumerate() {
        let _ = writeln!(out, "{}", row(g, &t.fmr()[i], &t.fnmr()[i]));
    }
    if let (Some(f), Some(n)) = (t.overall_fmr(), t.overall_fnmr()) {
        let _ = writeln!(out, "{}", row("OV", f, n));
    }
}

fn md_metrics(out: &mut String, r: &FairnessReport) {
    let _ = writeln!(out, "| Threshold | FDR | IR | GARBE |");
    let _ = writeln!(out, "|---|---|---|---|");
    for row in &r.rows {
        let _ = writeln!(
            out,
            "| {} | {:.4} | {} | {:.4} |",
            row.label,
            round4(row.fdr),
            fmt_ext(round4(row.ir), 4),
            round4(row.garbe)
        );
    }
}

fn md_findings(out: &mut String, title: &str, items: &[Finding]) {
    if items.is_empty() {
        return;
    }
    let _ = writeln!(out, "\n{title}:\n");
    for f in items {
        let _ = writeln!(out, "- {}", f.reason);
    }
}

/// A bare `FairnessReport` with its schema version.
#[derive(Debug, Clone, Serialize)]
pub struct FairnessDoc {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: FairnessReport,
}

impl From<FairnessReport> for FairnessDoc {
    fn from(report: FairnessReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            report,
        }
    }
}

impl Report for FairnessDoc {
    fn markdown(&self) -> String {
        let mut out = String::from("## Fairness metrics\n\n");
        let _ = writeln!(
            out,
            "alpha = {}, groups: {}\n",
            self.report.alpha,
            self.report.groups.join(", ")
        );
        md_metrics(&mut out, &self.report);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputEcho {
    pub sha256: String,
    pub records: usize,
    pub mated: usize,
    pub nonmated: usize,
    pub groups: usize,
}

/// Output of `fairgauge audit`.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub kind: &'static str,
    pub input: InputEcho,
    pub config: crate::commands::RunConfig,
    pub warnings: Vec<Finding>,
    pub thresholds: ThresholdSet,
    pub rates: RatesDoc,
    pub metrics: FairnessReport,
    #[serde(skip)]
    pub table: GroupRateTable,
}

impl Report for AuditReport {
    fn markdown(&self) -> String {
        let mut out = String::from("# Fairness audit\n\n");
        let _ = writeln!(
            out,
            "{} {} | input sha256 `{}` | {} records ({} mated, {} non-mated) in {} groups | alpha = {}",
            self.tool,
            self.tool_version,
            self.input.sha256,
            self.input.records,
            self.input.mated,
            self.input.nonmated,
            self.input.groups,
            self.config.alpha
        );
        md_findings(&mut out, "Warnings", &self.warnings);
        out.push_str("\n## Thresholds\n\n");
        md_thresholds(&mut out, &self.thresholds);
        out.push_str("\n## Per-group rates\n\n");
        md_rates(&mut out, &self.table);
        out.push_str("\n## Fairness metrics\n\n");
        md_metrics(&mut out, &self.metrics);
        out
    }
}

/// Output of `fairgauge metrics`.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub kind: &'static str,
    pub input_sha256: String,
    pub alpha: f64,
    pub rates: RatesDoc,
    pub metrics: FairnessReport,
    #[serde(skip)]
    pub table: GroupRateTable,
}

impl Report for MetricsReport {
    fn markdown(&self) -> String {
        let mut out = String::from("# Fairness metrics from rate table\n\n");
        let _ = writeln!(
            out,
            "{} {} | input sha256 `{}` | alpha = {}\n",
            self.tool, self.tool_version, self.input_sha256, self.alpha
        );
        out.push_str("## Per-group rates\n\n");
        md_rates(&mut out, &self.table);
        out.push_str("\n## Fairness metrics\n\n");
        md_metrics(&mut out, &self.metrics);
        out
    }
}

/// One audited stage of a pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub kind: &'static str,
    pub stage: &'static str,
    pub note: &'static str,
    pub scenario: ScenarioSpec,
    pub biased_groups: Vec<String>,
    pub thresholds: ThresholdSet,
    pub rates: RatesDoc,
    pub metrics: FairnessReport,
    #[serde(skip)]
    pub table: GroupRateTable,
}

impl StageReport {
    pub fn new(stage: &'static str, scenario: &ScenarioSpec, audit: &StageAudit, biased: &[String]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            kind: "pipeline-stage",
            stage,
            note: SIMULATED_NOTE,
            scenario: scenario.clone(),
            biased_groups: biased.to_vec(),
            thresholds: audit.thresholds.clone(),
            rates: RatesDoc::from(&audit.rates),
            metrics: audit.metrics.clone(),
            table: audit.rates.clone(),
        }
    }
}

impl Report for StageReport {
    fn markdown(&self) -> String {
        let mut out = format!("# Pipeline stage: {}\n\n", self.stage);
        let _ = writeln!(
            out,
            "_{}_\n\nseed {} | flagged groups: {}",
            self.note,
            self.scenario.seed,
            list_or_none(&self.biased_groups)
        );
        out.push_str("\n## Thresholds\n\n");
        md_thresholds(&mut out, &self.thresholds);
        out.push_str("\n## Per-group rates\n\n");
        md_rates(&mut out, &self.table);
        out.push_str("\n## Fairness metrics\n\n");
        md_metrics(&mut out, &self.metrics);
        out
    }
}

fn list_or_none(xs: &[String]) -> String {
    if xs.is_empty() {
        "none".into()
    } else {
        xs.join(", ")
    }
}

/// Before/after comparison of a pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub kind: &'static str,
    pub note: &'static str,
    pub inputs_sha256: String,
    pub config: crate::commands::RunConfig,
    pub mitigation: MitigationSpec,
    pub seed_before: u64,
    pub seed_after: u64,
    pub biased_before: Vec<String>,
    pub biased_after: Vec<String>,
    pub bias_flags_changed: bool,
    pub mitigated_groups: Vec<String>,
    pub metric_deltas: Vec<MetricDelta>,
    pub group_deltas: Vec<GroupDelta>,
}

impl DeltaReport {
    pub fn new(
        report: &PipelineReport,
        config: &crate::commands::RunConfig,
        inputs_sha256: String,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            kind: "pipeline-delta",
            note: SIMULATED_NOTE,
            inputs_sha256,
            config: config.clone(),
            mitigation: report.mitigation.clone(),
            seed_before: report.scenario_before.seed,
            seed_after: report.scenario_after.seed,
            biased_before: report.biased_before.clone(),
            biased_after: report.biased_after.clone(),
            bias_flags_changed: report.biased_before != report.biased_after,
            mitigated_groups: report.mitigated.clone(),
            metric_deltas: report.metric_deltas.clone(),
            group_deltas: report.group_deltas.clone(),
        }
    }
}

impl Report for DeltaReport {
    fn markdown(&self) -> String {
        let mut out = String::from("# Mitigation delta summary\n\n");
        let _ = writeln!(out, "_{}_\n", self.note);
        let _ = writeln!(out, "- flagged before: {}", list_or_none(&self.biased_before));
        let _ = writeln!(out, "- flagged after: {}", list_or_none(&self.biased_after));
        let _ = writeln!(out, "- mitigated groups: {}", list_or_none(&self.mitigated_groups));
        let _ = writeln!(
            out,
            "- mitigation: {:?}, strength {}",
            self.mitigation.mode, self.mitigation.strength
        );
        out.push_str("\n## Metrics\n\n");
        let _ = writeln!(
            out,
            "| Threshold | FDR before | FDR after | dFDR | IR before | IR after | dIR | GARBE before | GARBE after | dGARBE | GARBE |"
        );
        let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|---|");
        for d in &self.metric_deltas {
            let _ = writeln!(
                out,
                "| {} | {:.4} | {:.4} | {:+.4} | {} | {} | {} | {:.4} | {:.4} | {:+.4} | {:?} |",
                d.label,
                round4(d.fdr_before),
                round4(d.fdr_after),
                round4(d.d_fdr),
                fmt_ext(round4(d.ir_before), 4),
                fmt_ext(round4(d.ir_after), 4),
                fmt_ext(round4(d.d_ir), 4),
                round4(d.garbe_before),
                round4(d.garbe_after),
                round4(d.d_garbe),
                d.garbe_verdict
            );
        }
        out.push_str("\n## Per-group rate changes\n\n");
        let _ = writeln!(
            out,
            "| DG | Threshold | FMR before [%] | FMR after [%] | dFMR [%] | FNMR before [%] | FNMR after [%] | dFNMR [%] |"
        );
        let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
        for g in &self.group_deltas {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                g.group,
                g.label,
                pct(g.fmr_before),
                pct(g.fmr_after),
                pct(g.d_fmr),
                pct(g.fnmr_before),
                pct(g.fnmr_after),
                pct(g.d_fnmr)
            );
        }
        out
    }
}
