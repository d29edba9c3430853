//! Subcommand implementations behind the `fairgauge` binary.
//!
//! Each command reads its inputs, writes its artifacts atomically into the
//! output location, and returns the in-memory report. Errors map to exit
//! codes through [`FairError::exit_code`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::fairness::{metric_suite, FairnessConfig, DEFAULT_ALPHA};
use crate::rate_engine::{OperationalPoints, DEFAULT_FMR_TARGETS};
use crate::report::{
    digest, emit_report, AuditReport, DeltaReport, Format, InputEcho, MetricsReport, RatesDoc,
    Report, StageReport, SCHEMA_VERSION, TOOL_NAME, TOOL_VERSION,
};
use crate::score_model::{parse_comparisons, parse_rate_table, validate_set_for, ComparisonSet};
use crate::sim::{
    audit_set, generate_scenario, run_pipeline, BiasPolicy, MitigationSpec, PipelineReport,
    ScenarioSpec, CONFIG_VERSION,
};

pub const SEED_OVERRIDE_ENV: &str = "FAIRGAUGE_SEED_OVERRIDE";

/// Run configuration document shared by `audit` and `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_targets")]
    pub fmr_targets: Vec<f64>,
    #[serde(default)]
    pub bias_policy: BiasPolicy,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_targets() -> Vec<f64> {
    DEFAULT_FMR_TARGETS.to_vec()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Markdown]
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            alpha: DEFAULT_ALPHA,
            fmr_targets: default_targets(),
            bias_policy: BiasPolicy::default(),
            formats: default_formats(),
        }
    }
}

impl RunConfig {
    pub fn from_json(doc: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(doc).map_err(|e| FairError::Document {
            context: "run config".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_json(&read_text(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(FairError::invalid(
                "version",
                format!("unsupported version {} (expected {CONFIG_VERSION})", self.version),
            ));
        }
        FairnessConfig::new(self.alpha)?;
        OperationalPoints::new(self.fmr_targets.clone())?;
        self.bias_policy.validate()?;
        Ok(())
    }

    pub fn fairness(&self) -> FairnessConfig {
        FairnessConfig { alpha: self.alpha }
    }

    pub fn points(&self) -> Result<OperationalPoints> {
        OperationalPoints::new(self.fmr_targets.clone())
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FairError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|_| FairError::Document {
        context: path.display().to_string(),
        reason: "not valid UTF-8".into(),
    })
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| FairError::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| FairError::invalid("out", format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| FairError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        FairError::io(path, e)
    })
}

fn write_report<R: Report>(dir: &Path, stem: &str, report: &R, formats: &[Format]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &f in formats {
        let path = dir.join(format!("{stem}.{}", f.extension()));
        write_atomic(&path, emit_report(report, f).as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Reads the seed override variable, if set.
pub fn seed_override_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_OVERRIDE_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            FairError::invalid(SEED_OVERRIDE_ENV, format!("`{v}` is not an unsigned integer"))
        }),
        Err(_) => Ok(None),
    }
}

fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<ScenarioSpec> {
    let mut spec = ScenarioSpec::from_json(&read_text(path)?)?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    Ok(spec)
}

/// Parses and validates a comparison file, then audits it.
pub fn audit_comparisons(bytes: &[u8], config: &RunConfig) -> Result<AuditReport> {
    config.validate()?;
    let set = parse_comparisons(bytes)?;
    audit_parsed(&set, digest(bytes), config)
}

fn audit_parsed(set: &ComparisonSet, sha256: String, config: &RunConfig) -> Result<AuditReport> {
    let points = config.points()?;
    let finest = points.targets().last().copied().unwrap_or(1.0);
    let validation = validate_set_for(set, finest);
    if let Some(first) = validation.errors.first() {
        return Err(FairError::GroupRate {
            group: first.group.clone().unwrap_or_default(),
            reason: first.reason.clone(),
        });
    }
    let audit = audit_set(set, &points, &config.fairness())?;
    Ok(AuditReport {
        schema_version: SCHEMA_VERSION,
        tool: TOOL_NAME,
        tool_version: TOOL_VERSION,
        kind: "audit",
        input: InputEcho {
            sha256,
            records: set.len(),
            mated: set.mated_count(),
            nonmated: set.nonmated_count(),
            groups: set.groups().len(),
        },
        config: config.clone(),
        warnings: validation.warnings,
        thresholds: audit.thresholds,
        rates: RatesDoc::from(&audit.rates),
        metrics: audit.metrics,
        table: audit.rates,
    })
}

/// `fairgauge audit`: writes `audit.json` / `audit.md` into `out_dir`.
pub fn cmd_audit(scores: &Path, config: Option<&Path>, out_dir: &Path) -> Result<AuditReport> {
    let config = RunConfig::load(config)?;
    let report = audit_comparisons(&read_bytes(scores)?, &config)?;
    write_report(out_dir, "audit", &report, &config.formats)?;
    Ok(report)
}

/// Computes metrics for a rate-table document.
pub fn metrics_from_doc(doc: &str, alpha: f64) -> Result<MetricsReport> {
    let cfg = FairnessConfig::new(alpha)?;
    let table = parse_rate_table(doc)?;
    let metrics = metric_suite(&table, &cfg)?;
    Ok(MetricsReport {
        schema_version: SCHEMA_VERSION,
        tool: TOOL_NAME,
        tool_version: TOOL_VERSION,
        kind: "metrics",
        input_sha256: digest(doc.as_bytes()),
        alpha,
        rates: RatesDoc::from(&table),
        metrics,
        table,
    })
}

/// `fairgauge metrics`: writes `metrics.json` / `metrics.md` into `out_dir`.
pub fn cmd_metrics(rates: &Path, alpha: f64, out_dir: &Path) -> Result<MetricsReport> {
    let report = metrics_from_doc(&read_text(rates)?, alpha)?;
    write_report(out_dir, "metrics", &report, &[Format::Json, Format::Markdown])?;
    Ok(report)
}

/// `fairgauge simulate`: writes the generated comparison CSV to `out`.
pub fn cmd_simulate(scenario: &Path, out: &Path, seed_override: Option<u64>) -> Result<ComparisonSet> {
    let spec = load_scenario(scenario, seed_override)?;
    let set = generate_scenario(&spec)?;
    write_atomic(out, set.to_csv_string().as_bytes())?;
    Ok(set)
}

/// `fairgauge pipeline`: writes `before`, `after`, and `delta` reports into `out_dir`.
pub fn cmd_pipeline(
    scenario: &Path,
    mitigation: &Path,
    config: Option<&Path>,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<PipelineReport> {
    let spec = load_scenario(scenario, seed_override)?;
    let mit = MitigationSpec::from_json(&read_text(mitigation)?)?;
    let config = RunConfig::load(config)?;
    let report = run_pipeline(
        &spec,
        &mit,
        &config.points()?,
        &config.fairness(),
        &config.bias_policy,
    )?;

    // digest of the resolved inputs, so overrides are reflected
    let echo = serde_json::to_string(&(&spec, &mit, &config)).expect("inputs serialize");
    let before = StageReport::new("before", &report.scenario_before, &report.before, &report.biased_before);
    let after = StageReport::new("after", &report.scenario_after, &report.after, &report.biased_after);
    let delta = DeltaReport::new(&report, &config, digest(echo.as_bytes()));
    write_report(out_dir, "before", &before, &config.formats)?;
    write_report(out_dir, "after", &after, &config.formats)?;
    write_report(out_dir, "delta", &delta, &config.formats)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_rejection() {
        let cfg = RunConfig::from_json(r#"{"version":1}"#).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(matches!(
            RunConfig::from_json(r#"{"version":1,"alhpa":0.5}"#),
            Err(FairError::Document { .. })
        ));
        assert!(RunConfig::from_json(r#"{"version":2}"#).is_err());
        assert!(RunConfig::from_json(r#"{"version":1,"alpha":1.0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"version":1,"formats":["pdf"]}"#).is_err());
        let cfg = RunConfig::from_json(
            r#"{"version":1,"alpha":0.3,"fmr_targets":[0.05],"bias_policy":{"kappa":1.5,"scope":["t1"]},"formats":["md"]}"#,
        )
        .unwrap();
        assert_eq!(cfg.formats, [Format::Markdown]);
        assert_eq!(cfg.bias_policy.scope.as_deref(), Some(&["t1".to_string()][..]));
    }

    #[test]
    fn single_group_audit_is_undefined_metric() {
        let csv = "score,mated,group\n0.9,1,A\n0.1,0,A\n0.2,0,A\n";
        let err = audit_comparisons(csv.as_bytes(), &RunConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn group_without_impostors_is_input_error() {
        let csv = "score,mated,group\n0.9,1,A\n0.1,0,A\n0.8,1,B\n";
        let err = audit_comparisons(csv.as_bytes(), &RunConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains('B'), "{err}");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
