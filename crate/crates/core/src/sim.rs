//! Seeded synthetic score scenarios, simulated mitigation, and the
//! identify / mitigate / re-evaluate pipeline.
//!
//! Each (group, mated-status) cell draws from a normal distribution truncated
//! to [-1, 1]. Sampling is inverse-CDF: a uniform `u` in [0, 1) from a
//! ChaCha20 stream is mapped to `mu + sd * PhiInv(Phi(a) + u * (Phi(b) - Phi(a)))`
//! with `a`, `b` the standardized bounds. Every cell owns an independent
//! stream seeded by `SHA-256(seed || group || kind)`, so cells can be
//! generated in parallel and the merged output order (group order, mated
//! block then non-mated block) never depends on scheduling.
//!
//! Mitigation is a parametric shift of non-mated means standing in for
//! demographically targeted fine-tuning. It is a simulated mitigation, not
//! a model of any training procedure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{FairError, Result};
use crate::numfmt::{ext4, frac4};
use crate::fairness::{metric_suite, FairnessConfig, FairnessReport};
use crate::rate_engine::{group_rates, solve_all, OperationalPoints, ThresholdSet};
use crate::score_model::{validate_set, ComparisonRecord, ComparisonSet, GroupRateTable};

pub const CONFIG_VERSION: u32 = 1;
pub const SCORE_MIN: f64 = -1.0;
pub const SCORE_MAX: f64 = 1.0;
pub const DEFAULT_KAPPA: f64 = 2.0;

/// Absolute GARBE change treated as sampling noise when labelling deltas.
pub const GARBE_NOISE_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDistribution {
    pub group: String,
    pub mated_mean: f64,
    pub mated_sd: f64,
    pub nonmated_mean: f64,
    pub nonmated_sd: f64,
    pub n_mated: usize,
    pub n_nonmated: usize,
}

impl GroupDistribution {
    fn validate(&self, path: &str) -> Result<()> {
        if self.group.is_empty() || self.group.contains([',', '"', '\n', '\r']) {
            return Err(FairError::invalid(
                format!("{path}.group"),
                "group id must be a non-empty token without delimiters",
            ));
        }
        for (name, v) in [("mated_mean", self.mated_mean), ("nonmated_mean", self.nonmated_mean)] {
            if !v.is_finite() {
                return Err(FairError::invalid(format!("{path}.{name}"), "mean must be finite"));
            }
        }
        for (name, v) in [("mated_sd", self.mated_sd), ("nonmated_sd", self.nonmated_sd)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FairError::invalid(
                    format!("{path}.{name}"),
                    format!("standard deviation must be > 0, got {v}"),
                ));
            }
        }
        for (name, v) in [("n_mated", self.n_mated), ("n_nonmated", self.n_nonmated)] {
            if v == 0 {
                return Err(FairError::invalid(format!("{path}.{name}"), "count must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub version: u32,
    pub seed: u64,
    pub groups: Vec<GroupDistribution>,
}

fn check_version(v: u32) -> Result<()> {
    if v == CONFIG_VERSION {
        Ok(())
    } else {
        Err(FairError::invalid(
            "version",
            format!("unsupported version {v} (expected {CONFIG_VERSION})"),
        ))
    }
}

fn parse_doc<T: for<'de> Deserialize<'de>>(context: &str, doc: &str) -> Result<T> {
    serde_json::from_str(doc).map_err(|e| FairError::Document {
        context: context.into(),
        reason: e.to_string(),
    })
}

impl ScenarioSpec {
    pub fn new(seed: u64, groups: Vec<GroupDistribution>) -> Result<Self> {
        let spec = Self {
            version: CONFIG_VERSION,
            seed,
            groups,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let spec: Self = parse_doc("scenario", doc)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.groups.len() < 2 {
            return Err(FairError::invalid(
                "groups",
                format!("need at least 2 groups, got {}", self.groups.len()),
            ));
        }
        for (i, g) in self.groups.iter().enumerate() {
            let path = format!("groups[{i}]");
            g.validate(&path)?;
            if self.groups[..i].iter().any(|o| o.group == g.group) {
                return Err(FairError::invalid(
                    format!("{path}.group"),
                    format!("duplicate group `{}`", g.group),
                ));
            }
        }
        Ok(())
    }

    pub fn group(&self, id: &str) -> Option<&GroupDistribution> {
        self.groups.iter().find(|g| g.group == id)
    }

    pub fn group_ids(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.group.clone()).collect()
    }
}

fn cell_rng(seed: u64, group: &str, mated: bool) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"fairgauge-cell\0");
    h.update(seed.to_le_bytes());
    h.update((group.len() as u64).to_le_bytes());
    h.update(group.as_bytes());
    h.update([mated as u8]);
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

/// Normal(mean, sd) truncated to [SCORE_MIN, SCORE_MAX], sampled by inverse CDF.
struct TruncatedNormal {
    mean: f64,
    sd: f64,
    lo_p: f64,
    width_p: f64,
    std: Normal,
}

impl TruncatedNormal {
    fn new(mean: f64, sd: f64) -> Self {
        let std = Normal::standard();
        let lo_p = std.cdf((SCORE_MIN - mean) / sd);
        let hi_p = std.cdf((SCORE_MAX - mean) / sd);
        Self {
            mean,
            sd,
            lo_p,
            width_p: hi_p - lo_p,
            std,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if self.width_p <= 0.0 {
            // all mass sits beyond one bound in double precision
            return if self.mean < SCORE_MIN { SCORE_MIN } else { SCORE_MAX };
        }
        let p = self.lo_p + u * self.width_p;
        let x = self.mean + self.sd * self.std.inverse_cdf(p);
        x.clamp(SCORE_MIN, SCORE_MAX)
    }
}

fn draw(seed: u64, group: &str, mated: bool, mean: f64, sd: f64, n: usize) -> Vec<f64> {
    let mut rng = cell_rng(seed, group, mated);
    let dist = TruncatedNormal::new(mean, sd);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Draws every group's mated and non-mated scores.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<ComparisonSet> {
    spec.validate()?;
    let blocks: Vec<Vec<ComparisonRecord>> = spec
        .groups
        .par_iter()
        .map(|g| {
            let mated = draw(spec.seed, &g.group, true, g.mated_mean, g.mated_sd, g.n_mated);
            let nonmated = draw(
                spec.seed,
                &g.group,
                false,
                g.nonmated_mean,
                g.nonmated_sd,
                g.n_nonmated,
            );
            mated
                .into_iter()
                .map(|s| ComparisonRecord::new(s, true, g.group.clone()))
                .chain(
                    nonmated
                        .into_iter()
                        .map(|s| ComparisonRecord::new(s, false, g.group.clone())),
                )
                .collect()
        })
        .collect();
    ComparisonSet::new(blocks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasPolicy {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Threshold labels to test; `None` tests every threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<Vec<String>>,
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl Default for BiasPolicy {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            scope: None,
        }
    }
}

impl BiasPolicy {
    pub fn new(kappa: f64, scope: Option<Vec<String>>) -> Result<Self> {
        let p = Self { kappa, scope };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 1.0) {
            return Err(FairError::invalid(
                "bias_policy.kappa",
                format!("kappa must be > 1, got {}", self.kappa),
            ));
        }
        Ok(())
    }

    fn in_scope(&self, label: &str) -> bool {
        self.scope
            .as_ref()
            .is_none_or(|s| s.iter().any(|l| l == label))
    }
}

/// Groups whose FMR at any in-scope threshold exceeds `kappa` times the
/// overall FMR there. Output follows the table's group order.
pub fn identify_bias(
    report: &FairnessReport,
    rates: &GroupRateTable,
    policy: &BiasPolicy,
) -> Vec<String> {
    debug_assert_eq!(report.groups.as_slice(), rates.groups());
    let overall: Vec<f64> = match (rates.overall_fmr(), rates.thresholds()) {
        (Some(o), _) => o.to_vec(),
        (None, Some(ts)) => ts.entries().iter().map(|e| e.achieved_fmr).collect(),
        (None, None) => return Vec::new(),
    };
    let cols: Vec<usize> = rates
        .threshold_labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| policy.in_scope(l))
        .map(|(z, _)| z)
        .collect();
    rates
        .groups()
        .iter()
        .zip(rates.fmr())
        .filter(|(_, row)| cols.iter().any(|&z| row[z] > policy.kappa * overall[z]))
        .map(|(g, _)| g.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationMode {
    /// Shift only the target groups toward the non-target reference.
    Targeted,
    /// Shift every group toward the all-group reference.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationSpec {
    pub version: u32,
    pub mode: MitigationMode,
    /// Explicit target groups. When absent, targeted mode uses the groups
    /// flagged by bias identification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<String>>,
    pub strength: f64,
    /// Added to the reference mean; negative values push shifted groups past it.
    #[serde(default)]
    pub reference_offset: f64,
    /// Mated sd multiplier reached at strength 1 for shifted groups.
    #[serde(default = "one")]
    pub mated_sd_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl MitigationSpec {
    pub fn targeted(strength: f64) -> Self {
        Self {
            version: CONFIG_VERSION,
            mode: MitigationMode::Targeted,
            targets: None,
            strength,
            reference_offset: 0.0,
            mated_sd_factor: 1.0,
        }
    }

    pub fn balanced(strength: f64) -> Self {
        Self {
            mode: MitigationMode::Balanced,
            ..Self::targeted(strength)
        }
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let m: Self = parse_doc("mitigation", doc)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(FairError::invalid(
                "strength",
                format!("strength {} outside [0, 1]", self.strength),
            ));
        }
        if !self.reference_offset.is_finite() {
            return Err(FairError::invalid("reference_offset", "must be finite"));
        }
        if !(self.mated_sd_factor.is_finite() && self.mated_sd_factor >= 1.0) {
            return Err(FairError::invalid(
                "mated_sd_factor",
                format!("must be >= 1, got {}", self.mated_sd_factor),
            ));
        }
        if self.mode == MitigationMode::Balanced && self.targets.is_some() {
            return Err(FairError::invalid("targets", "targets only apply to targeted mode"));
        }
        Ok(())
    }
}

/// Deterministic seed step between pipeline stages (SplitMix64 finalizer).
pub fn advance_seed(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lerp(from: f64, to: f64, s: f64) -> f64 {
    // exact at s = 0 and s = 1
    (1.0 - s) * from + s * to
}

/// Groups a mitigation will shift.
pub fn mitigation_targets(
    spec: &ScenarioSpec,
    mit: &MitigationSpec,
    biased: &[String],
) -> Result<Vec<String>> {
    match mit.mode {
        MitigationMode::Balanced => Ok(spec.group_ids()),
        MitigationMode::Targeted => {
            let targets = mit.targets.as_deref().unwrap_or(biased);
            if targets.is_empty() {
                return Err(FairError::invalid(
                    "targets",
                    "targeted mitigation needs at least one target group",
                ));
            }
            for t in targets {
                if spec.group(t).is_none() {
                    return Err(FairError::UnknownGroup(t.clone()));
                }
            }
            Ok(spec
                .group_ids()
                .into_iter()
                .filter(|g| targets.contains(g))
                .collect())
        }
    }
}

/// Applies the non-mated mean shift and advances the seed.
pub fn apply_mitigation(
    spec: &ScenarioSpec,
    mit: &MitigationSpec,
    biased: &[String],
) -> Result<ScenarioSpec> {
    spec.validate()?;
    mit.validate()?;
    let targets = mitigation_targets(spec, mit, biased)?;
    let reference_pool: Vec<f64> = match mit.mode {
        MitigationMode::Balanced => spec.groups.iter().map(|g| g.nonmated_mean).collect(),
        MitigationMode::Targeted => spec
            .groups
            .iter()
            .filter(|g| !targets.contains(&g.group))
            .map(|g| g.nonmated_mean)
            .collect(),
    };
    if reference_pool.is_empty() {
        return Err(FairError::invalid(
            "targets",
            "every group is targeted, no reference groups remain",
        ));
    }
    let reference =
        reference_pool.iter().sum::<f64>() / reference_pool.len() as f64 + mit.reference_offset;
    let sd_scale = lerp(1.0, mit.mated_sd_factor, mit.strength);

    let mut out = spec.clone();
    out.seed = advance_seed(spec.seed);
    for g in out.groups.iter_mut().filter(|g| targets.contains(&g.group)) {
        g.nonmated_mean = lerp(g.nonmated_mean, reference, mit.strength);
        g.mated_sd *= sd_scale;
    }
    out.validate()?;
    Ok(out)
}

/// Thresholds, rates, and metrics from one audit of a comparison set.
#[derive(Debug, Clone, PartialEq)]
pub struct StageAudit {
    pub thresholds: ThresholdSet,
    pub rates: GroupRateTable,
    pub metrics: FairnessReport,
}

/// Solves thresholds on the set's own pooled scores, then computes rates and metrics.
pub fn audit_set(
    set: &ComparisonSet,
    points: &OperationalPoints,
    cfg: &FairnessConfig,
) -> Result<StageAudit> {
    let validation = validate_set(set);
    if let Some(first) = validation.errors.first() {
        return Err(FairError::GroupRate {
            group: first.group.clone().unwrap_or_default(),
            reason: first.reason.clone(),
        });
    }
    let thresholds = solve_all(set, points)?;
    let rates = group_rates(set, &thresholds)?;
    let metrics = metric_suite(&rates, cfg)?;
    Ok(StageAudit {
        thresholds,
        rates,
        metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Improved,
    Unchanged,
    Regressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub label: String,
    #[serde(with = "frac4")]
    pub fdr_before: f64,
    #[serde(with = "frac4")]
    pub fdr_after: f64,
    #[serde(with = "frac4")]
    pub d_fdr: f64,
    #[serde(with = "ext4")]
    pub ir_before: f64,
    #[serde(with = "ext4")]
    pub ir_after: f64,
    #[serde(with = "ext4")]
    pub d_ir: f64,
    #[serde(with = "frac4")]
    pub garbe_before: f64,
    #[serde(with = "frac4")]
    pub garbe_after: f64,
    #[serde(with = "frac4")]
    pub d_garbe: f64,
    /// `d_garbe / garbe_before`; infinite when GARBE rises from 0.
    #[serde(with = "ext4")]
    pub garbe_rel_change: f64,
    pub garbe_verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDelta {
    pub group: String,
    pub label: String,
    #[serde(with = "frac4")]
    pub fmr_before: f64,
    #[serde(with = "frac4")]
    pub fmr_after: f64,
    #[serde(with = "frac4")]
    pub d_fmr: f64,
    #[serde(with = "frac4")]
    pub fnmr_before: f64,
    #[serde(with = "frac4")]
    pub fnmr_after: f64,
    #[serde(with = "frac4")]
    pub d_fnmr: f64,
}

/// Difference of extended reals; equal values (both infinite included) give 0.
pub fn ext_delta(before: f64, after: f64) -> f64 {
    if before == after {
        0.0
    } else {
        after - before
    }
}

fn rel_change(before: f64, after: f64) -> f64 {
    let d = after - before;
    if before == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(d)
        }
    } else {
        d / before
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub scenario_before: ScenarioSpec,
    pub scenario_after: ScenarioSpec,
    pub mitigation: MitigationSpec,
    pub before: StageAudit,
    pub after: StageAudit,
    /// Groups flagged on the pre-mitigation audit.
    pub biased_before: Vec<String>,
    /// Groups flagged on the post-mitigation audit.
    pub biased_after: Vec<String>,
    /// Groups whose distributions were shifted.
    pub mitigated: Vec<String>,
    pub metric_deltas: Vec<MetricDelta>,
    pub group_deltas: Vec<GroupDelta>,
}

impl PipelineReport {
    pub fn delta(&self, label: &str) -> Option<&MetricDelta> {
        self.metric_deltas.iter().find(|d| d.label == label)
    }

    pub fn group_delta(&self, group: &str, label: &str) -> Option<&GroupDelta> {
        self.group_deltas
            .iter()
            .find(|d| d.group == group && d.label == label)
    }
}

fn metric_deltas(before: &FairnessReport, after: &FairnessReport) -> Vec<MetricDelta> {
    before
        .rows
        .iter()
        .zip(&after.rows)
        .map(|(b, a)| {
            let d_garbe = a.garbe - b.garbe;
            let garbe_verdict = if d_garbe > GARBE_NOISE_BAND {
                Verdict::Regressed
            } else if d_garbe < -GARBE_NOISE_BAND {
                Verdict::Improved
            } else {
                Verdict::Unchanged
            };
            MetricDelta {
                label: b.label.clone(),
                fdr_before: b.fdr,
                fdr_after: a.fdr,
                d_fdr: a.fdr - b.fdr,
                ir_before: b.ir,
                ir_after: a.ir,
                d_ir: ext_delta(b.ir, a.ir),
                garbe_before: b.garbe,
                garbe_after: a.garbe,
                d_garbe,
                garbe_rel_change: rel_change(b.garbe, a.garbe),
                garbe_verdict,
            }
        })
        .collect()
}

fn group_deltas(before: &GroupRateTable, after: &GroupRateTable) -> Vec<GroupDelta> {
    let mut out = Vec::new();
    for (gi, group) in before.groups().iter().enumerate() {
        for (z, label) in before.threshold_labels().iter().enumerate() {
            let (fb, fa) = (before.fmr()[gi][z], after.fmr()[gi][z]);
            let (nb, na) = (before.fnmr()[gi][z], after.fnmr()[gi][z]);
            out.push(GroupDelta {
                group: group.clone(),
                label: label.clone(),
                fmr_before: fb,
                fmr_after: fa,
                d_fmr: fa - fb,
                fnmr_before: nb,
                fnmr_after: na,
                d_fnmr: na - nb,
            });
        }
    }
    out
}

/// Audit, identify biased groups, mitigate, regenerate, re-audit.
///
/// Thresholds are re-solved on each stage's own pooled scores.
pub fn run_pipeline(
    spec: &ScenarioSpec,
    mit: &MitigationSpec,
    points: &OperationalPoints,
    cfg: &FairnessConfig,
    policy: &BiasPolicy,
) -> Result<PipelineReport> {
    policy.validate().map_err(|e| e.in_stage("identify"))?;
    mit.validate().map_err(|e| e.in_stage("mitigate"))?;

    let before_set = generate_scenario(spec).map_err(|e| e.in_stage("generate-before"))?;
    let before = audit_set(&before_set, points, cfg).map_err(|e| e.in_stage("audit-before"))?;
    drop(before_set);
    let biased_before = identify_bias(&before.metrics, &before.rates, policy);

    let mitigated = mitigation_targets(spec, mit, &biased_before).map_err(|e| e.in_stage("mitigate"))?;
    let spec_after =
        apply_mitigation(spec, mit, &biased_before).map_err(|e| e.in_stage("mitigate"))?;

    let after_set = generate_scenario(&spec_after).map_err(|e| e.in_stage("generate-after"))?;
    let after = audit_set(&after_set, points, cfg).map_err(|e| e.in_stage("audit-after"))?;
    let biased_after = identify_bias(&after.metrics, &after.rates, policy);

    Ok(PipelineReport {
        metric_deltas: metric_deltas(&before.metrics, &after.metrics),
        group_deltas: group_deltas(&before.rates, &after.rates),
        scenario_before: spec.clone(),
        scenario_after: spec_after,
        mitigation: mit.clone(),
        before,
        after,
        biased_before,
        biased_after,
        mitigated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score_model::parse_rate_table;

    fn dist(group: &str, nonmated_mean: f64, n: usize) -> GroupDistribution {
        GroupDistribution {
            group: group.into(),
            mated_mean: 0.5,
            mated_sd: 0.15,
            nonmated_mean,
            nonmated_sd: 0.1,
            n_mated: n,
            n_nonmated: n,
        }
    }

    #[test]
    fn counts_are_preserved() {
        let mut a = dist("A", 0.0, 50);
        a.n_mated = 1;
        let mut b = dist("B", 0.0, 20);
        b.n_mated = 1;
        let spec = ScenarioSpec::new(3, vec![a, b]).unwrap();
        let set = generate_scenario(&spec).unwrap();
        let counts = set.counts();
        assert_eq!(counts["A"].mated, 1);
        assert_eq!(counts["B"].mated, 1);
        assert_eq!(counts["A"].nonmated, 50);
        assert!(set.records().iter().all(|r| (-1.0..=1.0).contains(&r.score)));
    }

    #[test]
    fn same_seed_same_scores() {
        let spec = ScenarioSpec::new(11, vec![dist("A", 0.0, 200), dist("B", 0.1, 200)]).unwrap();
        let a = generate_scenario(&spec).unwrap();
        let b = generate_scenario(&spec).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let other = ScenarioSpec { seed: 12, ..spec };
        assert_ne!(a.to_csv_string(), generate_scenario(&other).unwrap().to_csv_string());
    }

    #[test]
    fn truncation_handles_far_means() {
        let spec = ScenarioSpec::new(1, vec![dist("A", -40.0, 10), dist("B", 3.0, 10)]).unwrap();
        let set = generate_scenario(&spec).unwrap();
        for r in set.records().iter().filter(|r| !r.mated) {
            assert!((-1.0..=1.0).contains(&r.score));
            if r.group == "A" {
                assert_eq!(r.score, -1.0);
            } else {
                assert!(r.score > 0.5);
            }
        }
    }

    #[test]
    fn spec_validation_paths() {
        let mut bad = dist("B", 0.0, 10);
        bad.nonmated_sd = 0.0;
        match ScenarioSpec::new(1, vec![dist("A", 0.0, 10), bad]) {
            Err(FairError::Invalid { field, .. }) => assert_eq!(field, "groups[1].nonmated_sd"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ScenarioSpec::new(1, vec![dist("A", 0.0, 10)]).is_err());
        assert!(ScenarioSpec::new(1, vec![dist("A", 0.0, 10), dist("A", 0.0, 10)]).is_err());
        let unknown = r#"{"version":1,"seed":1,"groups":[],"extra":true}"#;
        assert!(matches!(ScenarioSpec::from_json(unknown), Err(FairError::Document { .. })));
    }

    #[test]
    fn identify_on_published_tables() {
        let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/published/");
        let load = |name: &str| {
            parse_rate_table(&std::fs::read_to_string(format!("{root}{name}.json")).unwrap()).unwrap()
        };
        let t = load("arcface_original_diveface");
        let r = metric_suite(&t, &FairnessConfig::default()).unwrap();
        let p = BiasPolicy::new(2.0, Some(vec!["t1".into()])).unwrap();
        assert_eq!(identify_bias(&r, &t, &p), ["AM"]);

        let t = load("arcface_original_rfw");
        let r = metric_suite(&t, &FairnessConfig::default()).unwrap();
        let p = BiasPolicy::new(1.5, Some(vec!["t2".into()])).unwrap();
        assert_eq!(identify_bias(&r, &t, &p), ["AS"]);
    }

    #[test]
    fn identify_on_equal_rates_is_empty() {
        let t = GroupRateTable::new(
            vec!["A".into(), "B".into()],
            vec!["t1".into()],
            vec![vec![0.1], vec![0.1]],
            vec![vec![0.02], vec![0.02]],
        )
        .unwrap()
        .with_overall(vec![0.1], vec![0.02])
        .unwrap();
        let r = metric_suite(&t, &FairnessConfig::default()).unwrap();
        assert!(identify_bias(&r, &t, &BiasPolicy::default()).is_empty());
    }

    #[test]
    fn kappa_must_exceed_one() {
        assert!(BiasPolicy::new(1.0, None).is_err());
    }

    #[test]
    fn mitigation_shifts() {
        let spec = ScenarioSpec::new(5, vec![dist("A", 0.3, 10), dist("B", 0.1, 10)]).unwrap();
        let biased = vec!["A".to_string()];

        let zero = apply_mitigation(&spec, &MitigationSpec::targeted(0.0), &biased).unwrap();
        assert_eq!(zero.groups, spec.groups);
        assert_ne!(zero.seed, spec.seed);

        let full = apply_mitigation(&spec, &MitigationSpec::targeted(1.0), &biased).unwrap();
        assert_eq!(full.groups[0].nonmated_mean, 0.1);
        assert_eq!(full.groups[1], spec.groups[1]);

        let bad = MitigationSpec::targeted(1.5);
        assert!(matches!(
            apply_mitigation(&spec, &bad, &biased),
            Err(FairError::Invalid { field, .. }) if field == "strength"
        ));
        assert!(matches!(
            apply_mitigation(&spec, &MitigationSpec::targeted(1.0), &["Z".to_string()]),
            Err(FairError::UnknownGroup(g)) if g == "Z"
        ));
        assert!(apply_mitigation(&spec, &MitigationSpec::targeted(1.0), &[]).is_err());
    }

    #[test]
    fn balanced_full_strength_equalizes() {
        let spec = ScenarioSpec::new(
            5,
            vec![dist("A", 0.3, 10), dist("B", 0.1, 10), dist("C", -0.05, 10)],
        )
        .unwrap();
        let out = apply_mitigation(&spec, &MitigationSpec::balanced(1.0), &[]).unwrap();
        let m = out.groups[0].nonmated_mean;
        assert!(out.groups.iter().all(|g| g.nonmated_mean == m));
    }

    #[test]
    fn overshoot_and_spread() {
        let spec = ScenarioSpec::new(5, vec![dist("A", 0.3, 10), dist("B", 0.1, 10)]).unwrap();
        let mit = MitigationSpec {
            reference_offset: -0.2,
            mated_sd_factor: 1.5,
            ..MitigationSpec::targeted(1.0)
        };
        let out = apply_mitigation(&spec, &mit, &["A".to_string()]).unwrap();
        assert!((out.groups[0].nonmated_mean - -0.1).abs() < 1e-12);
        assert!((out.groups[0].mated_sd - 0.225).abs() < 1e-12);
        assert_eq!(out.groups[1], spec.groups[1]);
    }

    #[test]
    fn extended_deltas() {
        assert_eq!(ext_delta(f64::INFINITY, f64::INFINITY), 0.0);
        assert_eq!(ext_delta(2.0, f64::INFINITY), f64::INFINITY);
        assert_eq!(ext_delta(f64::INFINITY, 2.0), f64::NEG_INFINITY);
        assert_eq!(ext_delta(2.0, 3.5), 1.5);
    }

    #[test]
    fn pipeline_stage_errors_are_tagged() {
        let spec = ScenarioSpec::new(5, vec![dist("A", 0.0, 100), dist("B", 0.0, 100)]).unwrap();
        // nothing biased and no explicit targets
        let err = run_pipeline(
            &spec,
            &MitigationSpec::targeted(1.0),
            &OperationalPoints::default(),
            &FairnessConfig::default(),
            &BiasPolicy::default(),
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("stage `mitigate`"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}
