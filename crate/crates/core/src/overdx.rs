//! Outcome comparison inside clusters and the overdiagnosis flagging rule.
//!
//! A cluster is a candidate when it leans towards negative cases, still holds
//! enough positives, and its positives are statistically indistinguishable
//! from its negatives in both SOFA score (rank-sum test) and mortality
//! (proportion test). The positives of candidate clusters are the potential
//! overdiagnosis cases.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::actitrac::ClusteringResult;
use crate::error::{Error, Result};
use crate::eventlog::{AttributeTable, CaseAttributes};
use crate::stats::{two_proportion_test, wilcoxon_rank_sum, TestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlagRule {
    pub max_pos_share: f64,
    pub min_pos: usize,
    pub alpha: f64,
}

impl Default for FlagRule {
    fn default() -> Self {
        FlagRule {
            max_pos_share: 0.5,
            min_pos: 10,
            alpha: 0.05,
        }
    }
}

impl FlagRule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_pos_share) {
            return Err(Error::Config(format!(
                "max_pos_share must be in [0, 1], got {}",
                self.max_pos_share
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Case ids per cluster, plus the residual cases.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMembership {
    pub clusters: Vec<(usize, Vec<String>)>,
    pub residual: Vec<String>,
}

impl<M> From<&ClusteringResult<M>> for ClusterMembership {
    fn from(result: &ClusteringResult<M>) -> Self {
        ClusterMembership {
            clusters: result
                .clusters
                .iter()
                .map(|c| (c.id, c.case_ids().map(str::to_owned).collect()))
                .collect(),
            residual: result
                .residual
                .iter()
                .flat_map(|v| v.member_case_ids.iter().cloned())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DischargeDistribution {
    pub positive: BTreeMap<String, f64>,
    pub negative: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutcomeSummary {
    pub cluster_id: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub pos_share: f64,
    pub deaths_pos: usize,
    pub deaths_neg: usize,
    pub mean_sofa_pos: Option<f64>,
    pub mean_sofa_neg: Option<f64>,
    /// `None` when either group is empty.
    pub sofa_test: Option<TestResult>,
    pub mortality_test: Option<TestResult>,
    pub discharge_distribution: DischargeDistribution,
}

fn proportions(labels: &[&str]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry((*l).to_owned()).or_default() += 1;
    }
    let n = labels.len() as f64;
    counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Outcome comparison of positives against negatives among `case_ids`.
pub fn summarize_cluster(
    cluster_id: usize,
    case_ids: &[String],
    attrs: &AttributeTable,
    continuity: bool,
) -> Result<ClusterOutcomeSummary> {
    let missing: Vec<String> = case_ids
        .iter()
        .filter(|id| !attrs.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAttributes(missing));
    }
    let (pos, neg): (Vec<&CaseAttributes>, Vec<&CaseAttributes>) =
        case_ids.iter().map(|id| &attrs[id]).partition(|a| a.y_true);
    let sofa = |g: &[&CaseAttributes]| g.iter().map(|a| f64::from(a.sofa_24h)).collect::<Vec<_>>();
    let deaths = |g: &[&CaseAttributes]| g.iter().filter(|a| a.died).count();
    let (sofa_pos, sofa_neg) = (sofa(&pos), sofa(&neg));
    let (deaths_pos, deaths_neg) = (deaths(&pos), deaths(&neg));

    let both = !pos.is_empty() && !neg.is_empty();
    let sofa_test = if both {
        Some(wilcoxon_rank_sum(&sofa_pos, &sofa_neg)?)
    } else {
        None
    };
    let mortality_test = if both {
        Some(two_proportion_test(
            deaths_pos as u64,
            pos.len() as u64,
            deaths_neg as u64,
            neg.len() as u64,
            continuity,
        )?)
    } else {
        None
    };
    let total = pos.len() + neg.len();
    let locations = |g: &[&CaseAttributes]| {
        proportions(
            &g.iter()
                .map(|a| a.discharge_location.as_str())
                .collect::<Vec<_>>(),
        )
    };
    Ok(ClusterOutcomeSummary {
        cluster_id,
        n_pos: pos.len(),
        n_neg: neg.len(),
        pos_share: if total == 0 {
            0.0
        } else {
            pos.len() as f64 / total as f64
        },
        deaths_pos,
        deaths_neg,
        mean_sofa_pos: mean(&sofa_pos),
        mean_sofa_neg: mean(&sofa_neg),
        sofa_test,
        mortality_test,
        discharge_distribution: DischargeDistribution {
            positive: locations(&pos),
            negative: locations(&neg),
        },
    })
}

pub fn is_candidate(summary: &ClusterOutcomeSummary, rule: &FlagRule) -> bool {
    let (Some(sofa), Some(mortality)) = (&summary.sofa_test, &summary.mortality_test) else {
        return false;
    };
    summary.pos_share < rule.max_pos_share
        && summary.n_pos >= rule.min_pos
        && sofa.p_value > rule.alpha
        && mortality.p_value > rule.alpha
}

pub fn flag_candidates(summaries: &[ClusterOutcomeSummary], rule: &FlagRule) -> BTreeSet<usize> {
    summaries
        .iter()
        .filter(|s| is_candidate(s, rule))
        .map(|s| s.cluster_id)
        .collect()
}

/// Where a report came from: configuration echo, content digests of the
/// inputs, and an optional generation time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config: serde_json::Value,
    /// Input name → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upstream: Option<Box<Provenance>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub n_cases: usize,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverdiagnosisReport {
    pub rule: FlagRule,
    /// Whether the mortality test used the Yates correction.
    pub continuity_correction: bool,
    pub n_cases: usize,
    /// Positives across clusters and residual; the rate denominator.
    pub total_positive: usize,
    pub residual: ResidualSummary,
    pub summaries: Vec<ClusterOutcomeSummary>,
    pub flagged_cluster_ids: Vec<usize>,
    pub flagged_case_ids: Vec<String>,
    pub count: usize,
    pub rate: f64,
    pub provenance: Provenance,
}

/// Summarizes every cluster, applies `rule`, and collects the positives of
/// flagged clusters. Residual cases are never flagged but count towards the
/// rate denominator.
pub fn overdiagnosis_report(
    membership: &ClusterMembership,
    attrs: &AttributeTable,
    rule: &FlagRule,
    continuity: bool,
) -> Result<OverdiagnosisReport> {
    rule.validate()?;
    let mut seen = BTreeSet::new();
    for id in membership
        .clusters
        .iter()
        .flat_map(|(_, ids)| ids)
        .chain(&membership.residual)
    {
        if !seen.insert(id.as_str()) {
            return Err(Error::Invalid(format!(
                "case {id:?} is assigned more than once"
            )));
        }
    }
    let summaries = membership
        .clusters
        .iter()
        .map(|(id, cases)| summarize_cluster(*id, cases, attrs, continuity))
        .collect::<Result<Vec<_>>>()?;

    let residual_missing: Vec<String> = membership
        .residual
        .iter()
        .filter(|id| !attrs.contains_key(*id))
        .cloned()
        .collect();
    if !residual_missing.is_empty() {
        return Err(Error::MissingAttributes(residual_missing));
    }
    let residual_pos = membership
        .residual
        .iter()
        .filter(|id| attrs[*id].y_true)
        .count();
    let residual = ResidualSummary {
        n_cases: membership.residual.len(),
        n_pos: residual_pos,
        n_neg: membership.residual.len() - residual_pos,
    };

    let flagged = flag_candidates(&summaries, rule);
    let mut flagged_case_ids: Vec<String> = membership
        .clusters
        .iter()
        .filter(|(id, _)| flagged.contains(id))
        .flat_map(|(_, cases)| cases.iter().filter(|c| attrs[*c].y_true).cloned())
        .collect();
    flagged_case_ids.sort();

    let total_positive = summaries.iter().map(|s| s.n_pos).sum::<usize>() + residual.n_pos;
    let count = flagged_case_ids.len();
    Ok(OverdiagnosisReport {
        rule: rule.clone(),
        continuity_correction: continuity,
        n_cases: seen.len(),
        total_positive,
        residual,
        summaries,
        flagged_cluster_ids: flagged.into_iter().collect(),
        flagged_case_ids,
        count,
        rate: if total_positive == 0 {
            0.0
        } else {
            count as f64 / total_positive as f64
        },
        provenance: Provenance::default(),
    })
}

fn fmt_p(t: &Option<TestResult>) -> String {
    t.as_ref()
        .map_or_else(|| "n/a".to_owned(), |t| format!("{:.4}", t.p_value))
}

/// Plain-text summary of a report.
pub fn render_text(report: &OverdiagnosisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Potential overdiagnosis report");
    let _ = writeln!(
        out,
        "cases: {}  positives: {}  clusters: {}  residual: {} ({} positive)",
        report.n_cases,
        report.total_positive,
        report.summaries.len(),
        report.residual.n_cases,
        report.residual.n_pos
    );
    let _ = writeln!(
        out,
        "rule: pos_share < {}, n_pos >= {}, p > {} (SOFA rank-sum, mortality chi-square{})",
        report.rule.max_pos_share,
        report.rule.min_pos,
        report.rule.alpha,
        if report.continuity_correction {
            " with Yates"
        } else {
            ""
        }
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:>7} {:>6} {:>6} {:>7} {:>9} {:>9} {:>7}",
        "cluster", "n_pos", "n_neg", "share", "p_sofa", "p_death", "flag"
    );
    for s in &report.summaries {
        let flag = report.flagged_cluster_ids.contains(&s.cluster_id);
        let _ = writeln!(
            out,
            "{:>7} {:>6} {:>6} {:>7.3} {:>9} {:>9} {:>7}",
            s.cluster_id,
            s.n_pos,
            s.n_neg,
            s.pos_share,
            fmt_p(&s.sofa_test),
            fmt_p(&s.mortality_test),
            if flag { "*" } else { "" }
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "flagged clusters: {:?}", report.flagged_cluster_ids);
    let _ = writeln!(
        out,
        "potential overdiagnosis: {} of {} positive cases ({:.2}%)",
        report.count,
        report.total_positive,
        100.0 * report.rate
    );
    out
}

/// One row per cluster.
pub fn write_summaries_csv<W: Write>(report: &OverdiagnosisReport, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "cluster_id",
        "n_pos",
        "n_neg",
        "pos_share",
        "deaths_pos",
        "deaths_neg",
        "sofa_statistic",
        "sofa_p",
        "sofa_method",
        "mortality_statistic",
        "mortality_p",
        "mortality_method",
        "flagged",
    ])?;
    let stat = |t: &Option<TestResult>| -> [String; 3] {
        match t {
            Some(t) => [
                t.statistic.to_string(),
                t.p_value.to_string(),
                serde_json::to_value(t.method)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default(),
            ],
            None => [String::new(), String::new(), "n/a".into()],
        }
    };
    for s in &report.summaries {
        let mut row = vec![
            s.cluster_id.to_string(),
            s.n_pos.to_string(),
            s.n_neg.to_string(),
            s.pos_share.to_string(),
            s.deaths_pos.to_string(),
            s.deaths_neg.to_string(),
        ];
        row.extend(stat(&s.sofa_test));
        row.extend(stat(&s.mortality_test));
        row.push(
            report
                .flagged_cluster_ids
                .contains(&s.cluster_id)
                .to_string(),
        );
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::TestMethod;

    fn case(id: &str, y_true: bool, sofa: u8, died: bool, loc: &str) -> (String, CaseAttributes) {
        (
            id.into(),
            CaseAttributes {
                case_id: id.into(),
                y_true,
                y_pred: y_true,
                sofa_24h: sofa,
                died,
                discharge_location: loc.into(),
            },
        )
    }

    fn test_result(p: f64) -> Option<TestResult> {
        Some(TestResult {
            statistic: 0.0,
            p_value: p,
            method: TestMethod::NormalApprox,
        })
    }

    fn summary(n_pos: usize, share: f64, p_sofa: f64, p_mort: f64) -> ClusterOutcomeSummary {
        ClusterOutcomeSummary {
            cluster_id: 1,
            n_pos,
            n_neg: 0,
            pos_share: share,
            deaths_pos: 0,
            deaths_neg: 0,
            mean_sofa_pos: None,
            mean_sofa_neg: None,
            sofa_test: test_result(p_sofa),
            mortality_test: test_result(p_mort),
            discharge_distribution: DischargeDistribution::default(),
        }
    }

    /// Positives and negatives with interleaved identical outcomes.
    fn balanced_fixture() -> (Vec<String>, AttributeTable) {
        let mut attrs = AttributeTable::new();
        let mut ids = Vec::new();
        for i in 0..12u8 {
            for (prefix, pos) in [("p", true), ("n", false)] {
                let id = format!("{prefix}{i}");
                let (k, v) = case(
                    &id,
                    pos,
                    i % 6,
                    i % 4 == 0,
                    if i % 2 == 0 { "HOME" } else { "SNF" },
                );
                attrs.insert(k, v);
                ids.push(id);
            }
        }
        for i in 0..12u8 {
            let id = format!("extra{i}");
            let (k, v) = case(&id, false, i % 6, i % 4 == 0, "HOME");
            attrs.insert(k, v);
            ids.push(id);
        }
        (ids, attrs)
    }

    #[test]
    fn identical_outcomes_are_not_significant() {
        let (ids, attrs) = balanced_fixture();
        let s = summarize_cluster(3, &ids, &attrs, true).unwrap();
        assert_eq!((s.n_pos, s.n_neg), (12, 24));
        assert_eq!(s.sofa_test.unwrap().statistic, 0.0);
        assert_eq!(s.sofa_test.unwrap().p_value, 1.0);
        assert!(s.mortality_test.unwrap().p_value >= 0.05);
        let total: f64 = s.discharge_distribution.positive.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((s.pos_share - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn negative_only_cluster_is_not_applicable() {
        let attrs: AttributeTable = [
            case("a", false, 2, false, "HOME"),
            case("b", false, 3, true, "HOME"),
        ]
        .into_iter()
        .collect();
        let s = summarize_cluster(1, &["a".into(), "b".into()], &attrs, true).unwrap();
        assert_eq!(s.pos_share, 0.0);
        assert!(s.sofa_test.is_none() && s.mortality_test.is_none());
        assert!(s.discharge_distribution.positive.is_empty());
        assert!(!is_candidate(&s, &FlagRule::default()));
    }

    #[test]
    fn missing_attributes_are_named() {
        let attrs: AttributeTable = [case("a", false, 2, false, "HOME")].into_iter().collect();
        match summarize_cluster(1, &["a".into(), "zz".into()], &attrs, true) {
            Err(Error::MissingAttributes(ids)) => assert_eq!(ids, ["zz"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flag_rule_examples() {
        let rule = FlagRule::default();
        assert!(is_candidate(&summary(12, 0.3, 0.4, 0.6), &rule));
        assert!(!is_candidate(&summary(9, 0.3, 0.9, 0.9), &rule));
        assert!(!is_candidate(&summary(30, 0.8, 0.9, 0.9), &rule));
        // strict inequalities
        assert!(!is_candidate(&summary(12, 0.5, 0.9, 0.9), &rule));
        assert!(!is_candidate(&summary(12, 0.3, 0.05, 0.9), &rule));
        assert!(!is_candidate(&summary(12, 0.3, 0.9, 0.05), &rule));
    }

    #[test]
    fn report_counts_and_rate() {
        let (ids, mut attrs) = balanced_fixture();
        // a second, clearly separated cluster and some residual positives
        let mut sick = Vec::new();
        for i in 0..10u8 {
            for (prefix, pos, sofa, died) in
                [("s", true, 15 + i % 5, true), ("h", false, i % 3, false)]
            {
                let id = format!("{prefix}{i}");
                let (k, v) = case(&id, pos, sofa, died, "HOME");
                attrs.insert(k, v);
                sick.push(id);
            }
        }
        let (k, v) = case("r1", true, 9, false, "HOME");
        attrs.insert(k, v);
        let membership = ClusterMembership {
            clusters: vec![(1, ids), (2, sick)],
            residual: vec!["r1".into()],
        };
        let report = overdiagnosis_report(&membership, &attrs, &FlagRule::default(), true).unwrap();
        assert_eq!(report.flagged_cluster_ids, [1]);
        assert_eq!(report.count, 12);
        assert!(report.flagged_case_ids.iter().all(|id| id.starts_with('p')));
        assert_eq!(report.total_positive, 12 + 10 + 1);
        assert!((report.rate - 12.0 / 23.0).abs() < 1e-12);
        assert_eq!(report.residual.n_pos, 1);

        let text = render_text(&report);
        assert!(text.contains("12 of 23 positive cases"));
        let mut csv = Vec::new();
        write_summaries_csv(&report, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn nothing_flagged_gives_zero_rate() {
        let attrs: AttributeTable = [case("a", true, 2, false, "HOME")].into_iter().collect();
        let membership = ClusterMembership {
            clusters: vec![(1, vec!["a".into()])],
            residual: vec![],
        };
        let r = overdiagnosis_report(&membership, &attrs, &FlagRule::default(), true).unwrap();
        assert_eq!((r.count, r.rate), (0, 0.0));
    }

    #[test]
    fn duplicate_assignment_is_rejected() {
        let attrs: AttributeTable = [case("a", true, 2, false, "HOME")].into_iter().collect();
        let membership = ClusterMembership {
            clusters: vec![(1, vec!["a".into()])],
            residual: vec!["a".into()],
        };
        assert!(overdiagnosis_report(&membership, &attrs, &FlagRule::default(), true).is_err());
    }
}
