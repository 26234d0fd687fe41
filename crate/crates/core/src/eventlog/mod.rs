//! Clinical event logs: parsing, cohort filtering and variant extraction.
//!
//! A log is a set of traces, one per ICU stay, each holding the
//! timestamp-ordered activities recorded for that stay. Downstream stages work
//! on [`TraceVariant`]s, i.e. distinct activity sequences weighted by how many
//! cases followed them.

mod cohort;
mod csv_io;
mod xes;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

pub use cohort::{filter_cohort, CohortPolicy, CohortStats, MissingAttributes};
pub use csv_io::{
    apply_predictions, parse_attributes_csv, parse_event_csv, write_attributes_csv,
    write_event_csv, ColumnMap,
};
pub use xes::parse_xes;

use crate::error::{Error, Result};

/// Activities of the sepsis treatment log: lactate testing, crystalloid
/// fluids, five vasopressors and six antibiotic groups.
pub const SEPSIS_ACTIVITIES: [&str; 13] = [
    "lactate",
    "fluids crystalloids",
    "norepinephrine",
    "epinephrine",
    "vasopressin",
    "dopamine",
    "dobutamine",
    "vancomycin",
    "other antibiotics",
    "cefepime",
    "piperacillin-tazobactam",
    "ceftriaxone",
    "cefazolin",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub activity: String,
    pub timestamp: DateTime<Utc>,
}

/// Events of a single case, sorted by timestamp (ties keep input order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }

    pub fn activity_sequence(&self) -> Vec<String> {
        self.activities().map(str::to_owned).collect()
    }

    pub fn distinct_activities(&self) -> usize {
        self.activities().collect::<BTreeSet<_>>().len()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Set of admissible activity names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary(BTreeSet<String>);

impl Vocabulary {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Vocabulary(names.into_iter().map(Into::into).collect())
    }

    pub fn sepsis() -> Self {
        Self::new(SEPSIS_ACTIVITIES)
    }

    pub fn contains(&self, activity: &str) -> bool {
        self.0.contains(activity)
    }

    pub fn insert(&mut self, activity: &str) -> bool {
        self.0.insert(activity.to_owned())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::sepsis()
    }
}

/// What to do with an activity that is not in the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabularyPolicy {
    /// Reject the input.
    Strict,
    /// Add the activity to the vocabulary.
    #[default]
    Extend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub vocabulary: Vocabulary,
}

impl EventLog {
    pub fn empty(vocabulary: Vocabulary) -> Self {
        EventLog {
            traces: Vec::new(),
            vocabulary,
        }
    }

    /// Groups events by case id. Traces appear in order of each case's first
    /// event in the input; events within a trace are stably sorted by time.
    pub fn from_events<I>(events: I, vocabulary: Vocabulary) -> Result<Self>
    where
        I: IntoIterator<Item = Event>,
    {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut traces: Vec<Trace> = Vec::new();
        for event in events {
            if event.activity.is_empty() {
                return Err(Error::Invalid(format!(
                    "case {:?} has an event with an empty activity",
                    event.case_id
                )));
            }
            if !vocabulary.contains(&event.activity) {
                return Err(Error::Invalid(format!(
                    "activity {:?} is not in the vocabulary",
                    event.activity
                )));
            }
            let slot = *index.entry(event.case_id.clone()).or_insert_with(|| {
                traces.push(Trace {
                    case_id: event.case_id.clone(),
                    events: Vec::new(),
                });
                traces.len() - 1
            });
            traces[slot].events.push(TraceEvent {
                activity: event.activity,
                timestamp: event.timestamp,
            });
        }
        for trace in &mut traces {
            trace.events.sort_by_key(|e| e.timestamp);
        }
        Ok(EventLog { traces, vocabulary })
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.traces.iter().map(|t| t.case_id.as_str())
    }
}

/// Per-case ground truth, model label and outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseAttributes {
    pub case_id: String,
    pub y_true: bool,
    pub y_pred: bool,
    pub sofa_24h: u8,
    pub died: bool,
    pub discharge_location: String,
}

impl CaseAttributes {
    pub const MAX_SOFA: u8 = 24;

    pub fn is_correct(&self) -> bool {
        self.y_true == self.y_pred
    }
}

pub type AttributeTable = BTreeMap<String, CaseAttributes>;

/// A distinct activity sequence together with the cases that followed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceVariant {
    pub activities: Vec<String>,
    pub frequency: usize,
    pub member_case_ids: BTreeSet<String>,
}

impl TraceVariant {
    pub fn new(activities: Vec<String>, member_case_ids: BTreeSet<String>) -> Self {
        let frequency = member_case_ids.len();
        TraceVariant {
            activities,
            frequency,
            member_case_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }
}

/// Canonical variant order: frequency descending, then activity sequence
/// ascending.
pub fn canonical_order(a: &TraceVariant, b: &TraceVariant) -> std::cmp::Ordering {
    b.frequency
        .cmp(&a.frequency)
        .then_with(|| a.activities.cmp(&b.activities))
}

/// Deduplicates traces into variants in canonical order.
pub fn variants(log: &EventLog) -> Vec<TraceVariant> {
    let mut groups: BTreeMap<Vec<String>, BTreeSet<String>> = BTreeMap::new();
    for trace in &log.traces {
        groups
            .entry(trace.activity_sequence())
            .or_default()
            .insert(trace.case_id.clone());
    }
    let mut out: Vec<TraceVariant> = groups
        .into_iter()
        .map(|(activities, members)| TraceVariant::new(activities, members))
        .collect();
    out.sort_by(canonical_order);
    out
}

/// Parses an ISO-8601 instant. Accepts RFC 3339 with an offset, or a naive
/// date-time (taken as UTC) with `T` or space as separator, or a bare date.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}
