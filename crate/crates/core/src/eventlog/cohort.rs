use log::warn;
use serde::{Deserialize, Serialize};

use super::{AttributeTable, EventLog};
use crate::error::{Error, Result};

/// Handling of cases present in the event log but absent from the
/// attribute table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingAttributes {
    #[default]
    Drop,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortPolicy {
    /// Minimum number of distinct activity names a trace must contain.
    pub min_distinct: usize,
    pub missing_attributes: MissingAttributes,
}

impl Default for CohortPolicy {
    fn default() -> Self {
        CohortPolicy {
            min_distinct: 3,
            missing_attributes: MissingAttributes::Drop,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortStats {
    pub input_cases: usize,
    pub kept_positive: usize,
    pub kept_negative: usize,
    pub dropped_misclassified: usize,
    pub dropped_too_few_activities: usize,
    pub dropped_missing_attributes: usize,
}

impl CohortStats {
    pub fn kept(&self) -> usize {
        self.kept_positive + self.kept_negative
    }
}

/// Keeps correctly labelled cases (true positives and true negatives) whose
/// trace has at least `policy.min_distinct` distinct activities.
pub fn filter_cohort(
    log: &EventLog,
    attrs: &AttributeTable,
    policy: &CohortPolicy,
) -> Result<(EventLog, CohortStats)> {
    let missing: Vec<String> = log
        .case_ids()
        .filter(|id| !attrs.contains_key(*id))
        .map(str::to_owned)
        .collect();
    if !missing.is_empty() {
        match policy.missing_attributes {
            MissingAttributes::Error => return Err(Error::MissingAttributes(missing)),
            MissingAttributes::Drop => warn!(
                "dropping {} case(s) without attributes, first: {}",
                missing.len(),
                missing[0]
            ),
        }
    }

    let mut stats = CohortStats {
        input_cases: log.len(),
        dropped_missing_attributes: missing.len(),
        ..CohortStats::default()
    };
    let mut traces = Vec::new();
    for trace in &log.traces {
        let Some(a) = attrs.get(&trace.case_id) else {
            continue;
        };
        if !a.is_correct() {
            stats.dropped_misclassified += 1;
            continue;
        }
        if trace.distinct_activities() < policy.min_distinct {
            stats.dropped_too_few_activities += 1;
            continue;
        }
        if a.y_true {
            stats.kept_positive += 1;
        } else {
            stats.kept_negative += 1;
        }
        traces.push(trace.clone());
    }
    Ok((
        EventLog {
            traces,
            vocabulary: log.vocabulary.clone(),
        },
        stats,
    ))
}
