use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    format_timestamp, parse_timestamp, AttributeTable, CaseAttributes, Event, EventLog, Vocabulary,
    VocabularyPolicy,
};
use crate::error::{Error, Result};

/// Header names of the case id, activity and timestamp columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub case_id: String,
    pub activity: String,
    pub timestamp: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            case_id: "case_id".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Reads an events CSV into an [`EventLog`].
pub fn parse_event_csv<R: Read>(
    reader: R,
    columns: &ColumnMap,
    vocabulary: &Vocabulary,
    policy: VocabularyPolicy,
) -> Result<EventLog> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let case_col = column(&headers, &columns.case_id)?;
    let act_col = column(&headers, &columns.activity)?;
    let ts_col = column(&headers, &columns.timestamp)?;

    let mut vocabulary = vocabulary.clone();
    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let field = |idx: usize, name: &str| {
            record
                .get(idx)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Row {
                    line,
                    message: format!("empty {name}"),
                })
        };
        let case_id = field(case_col, "case id")?;
        let activity = field(act_col, "activity")?;
        let raw_ts = field(ts_col, "timestamp")?;
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| Error::Row {
            line,
            message: format!("unparsable timestamp {raw_ts:?}"),
        })?;
        if !vocabulary.contains(activity) {
            match policy {
                VocabularyPolicy::Strict => {
                    return Err(Error::Vocabulary {
                        line,
                        activity: activity.to_owned(),
                    })
                }
                VocabularyPolicy::Extend => {
                    vocabulary.insert(activity);
                }
            }
        }
        events.push(Event {
            case_id: case_id.to_owned(),
            activity: activity.to_owned(),
            timestamp,
        });
    }
    EventLog::from_events(events, vocabulary)
}

/// Writes `case_id,activity,timestamp` rows, trace by trace.
pub fn write_event_csv<W: Write>(log: &EventLog, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["case_id", "activity", "timestamp"])?;
    for trace in &log.traces {
        for event in &trace.events {
            wtr.write_record([
                trace.case_id.as_str(),
                event.activity.as_str(),
                &format_timestamp(&event.timestamp),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn parse_flag(raw: &str, name: &str, line: u64) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(Error::Row {
            line,
            message: format!("{name} must be 0 or 1, got {other:?}"),
        }),
    }
}

const ATTRIBUTE_COLUMNS: [&str; 6] = [
    "case_id",
    "y_true",
    "y_pred",
    "sofa_24h",
    "died",
    "discharge_location",
];

/// Reads `case_id,y_true,y_pred,sofa_24h,died,discharge_location`.
pub fn parse_attributes_csv<R: Read>(reader: R) -> Result<AttributeTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = ATTRIBUTE_COLUMNS
        .iter()
        .map(|name| column(&headers, name))
        .collect::<Result<_>>()?;

    let mut table = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let get = |i: usize| record.get(idx[i]).unwrap_or("").trim();
        let case_id = get(0);
        if case_id.is_empty() {
            return Err(Error::Row {
                line,
                message: "empty case id".into(),
            });
        }
        let sofa: u8 = get(3)
            .parse()
            .ok()
            .filter(|s| *s <= CaseAttributes::MAX_SOFA)
            .ok_or_else(|| Error::Row {
                line,
                message: format!("sofa_24h must be an integer in 0..=24, got {:?}", get(3)),
            })?;
        let attrs = CaseAttributes {
            case_id: case_id.to_owned(),
            y_true: parse_flag(get(1), "y_true", line)?,
            y_pred: parse_flag(get(2), "y_pred", line)?,
            sofa_24h: sofa,
            died: parse_flag(get(4), "died", line)?,
            discharge_location: get(5).to_owned(),
        };
        if table.insert(case_id.to_owned(), attrs).is_some() {
            return Err(Error::DuplicateCase(case_id.to_owned()));
        }
    }
    Ok(table)
}

pub fn write_attributes_csv<'a, W, I>(attrs: I, writer: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a CaseAttributes>,
{
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ATTRIBUTE_COLUMNS)?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for a in attrs {
        wtr.write_record([
            a.case_id.as_str(),
            flag(a.y_true),
            flag(a.y_pred),
            &a.sofa_24h.to_string(),
            flag(a.died),
            a.discharge_location.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Overrides `y_pred` with externally imported predictions. Cases without a
/// prediction keep their recorded label.
pub fn apply_predictions(attrs: &mut AttributeTable, predictions: &HashMap<String, bool>) -> usize {
    let mut updated = 0;
    for (case_id, a) in attrs.iter_mut() {
        if let Some(&y) = predictions.get(case_id) {
            a.y_pred = y;
            updated += 1;
        }
    }
    updated
}
