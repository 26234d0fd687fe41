//! Reader for the subset of XES used by process-mining tools: `log`,
//! `trace` and `event` elements carrying `concept:name` and
//! `time:timestamp` attributes. Other attributes, extensions, globals and
//! classifiers are skipped.

use std::io::BufRead;

use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{parse_timestamp, Event, EventLog, Vocabulary, VocabularyPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Log,
    Trace,
    Event,
    Other,
}

#[derive(Default)]
struct PendingEvent {
    name: Option<String>,
    timestamp: Option<String>,
}

fn key_value(tag: &BytesStart<'_>) -> Result<(Option<String>, Option<String>)> {
    let mut key = None;
    let mut value = None;
    for attr in tag.attributes() {
        let attr = attr.map_err(|e| Error::Xes(e.to_string()))?;
        let text = attr
            .unescape_value()
            .map_err(|e| Error::Xes(e.to_string()))?
            .into_owned();
        match attr.key.as_ref() {
            b"key" => key = Some(text),
            b"value" => value = Some(text),
            _ => {}
        }
    }
    Ok((key, value))
}

/// Parses an XES document into an [`EventLog`] with the same semantics as the
/// CSV reader. A trace without `concept:name` gets the id `trace-<n>` (its
/// 1-based position in the document).
pub fn parse_xes<R: BufRead>(
    reader: R,
    vocabulary: &Vocabulary,
    policy: VocabularyPolicy,
) -> Result<EventLog> {
    let mut xml = Reader::from_reader(reader);
    xml.config_mut().trim_text(true);

    let mut vocabulary = vocabulary.clone();
    let mut events: Vec<Event> = Vec::new();
    let mut stack: Vec<Scope> = Vec::new();
    let mut seen_log = false;
    let mut trace_no = 0usize;
    let mut trace_name: Option<String> = None;
    let mut trace_events: Vec<PendingEvent> = Vec::new();
    let mut current: Option<PendingEvent> = None;
    let mut buf = Vec::new();

    let mut finish_trace = |trace_name: Option<String>,
                            pending: Vec<PendingEvent>,
                            trace_no: usize,
                            vocabulary: &mut Vocabulary|
     -> Result<()> {
        let case_id = trace_name.unwrap_or_else(|| format!("trace-{trace_no}"));
        for (i, ev) in pending.into_iter().enumerate() {
            let activity = ev.name.filter(|n| !n.is_empty()).ok_or_else(|| {
                Error::Xes(format!(
                    "event {} of trace {case_id:?} has no concept:name",
                    i + 1
                ))
            })?;
            let raw = ev.timestamp.ok_or_else(|| {
                Error::Xes(format!(
                    "event {} of trace {case_id:?} has no time:timestamp",
                    i + 1
                ))
            })?;
            let timestamp = parse_timestamp(&raw)
                .ok_or_else(|| Error::Xes(format!("unparsable timestamp {raw:?}")))?;
            if !vocabulary.contains(&activity) {
                match policy {
                    VocabularyPolicy::Strict => {
                        return Err(Error::Xes(format!(
                            "activity {activity:?} is not in the vocabulary"
                        )))
                    }
                    VocabularyPolicy::Extend => {
                        vocabulary.insert(&activity);
                    }
                }
            }
            events.push(Event {
                case_id: case_id.clone(),
                activity,
                timestamp,
            });
        }
        Ok(())
    };

    loop {
        let ev = xml
            .read_event_into(&mut buf)
            .map_err(|e| Error::Xes(format!("at byte {}: {e}", xml.buffer_position())))?;
        let (tag, empty) = match &ev {
            XmlEvent::Start(t) => (Some(t.clone().into_owned()), false),
            XmlEvent::Empty(t) => (Some(t.clone().into_owned()), true),
            _ => (None, false),
        };
        if let Some(tag) = tag {
            let parent = stack.last().copied();
            let scope = match (parent, tag.local_name().as_ref()) {
                (None, b"log") => {
                    seen_log = true;
                    Scope::Log
                }
                (None, other) => {
                    return Err(Error::Xes(format!(
                        "root element must be <log>, found <{}>",
                        String::from_utf8_lossy(other)
                    )))
                }
                (Some(Scope::Log), b"trace") => {
                    trace_no += 1;
                    trace_name = None;
                    trace_events.clear();
                    Scope::Trace
                }
                (Some(Scope::Trace), b"event") => {
                    current = Some(PendingEvent::default());
                    Scope::Event
                }
                (Some(Scope::Trace), _) => {
                    let (key, value) = key_value(&tag)?;
                    if key.as_deref() == Some("concept:name") {
                        trace_name = value;
                    }
                    Scope::Other
                }
                (Some(Scope::Event), _) => {
                    let (key, value) = key_value(&tag)?;
                    if let Some(pending) = current.as_mut() {
                        match key.as_deref() {
                            Some("concept:name") => pending.name = value,
                            Some("time:timestamp") => pending.timestamp = value,
                            _ => {}
                        }
                    }
                    Scope::Other
                }
                _ => Scope::Other,
            };
            if empty {
                close(
                    scope,
                    &mut current,
                    &mut trace_events,
                    &mut trace_name,
                    trace_no,
                    &mut vocabulary,
                    &mut finish_trace,
                )?;
            } else {
                stack.push(scope);
            }
            buf.clear();
            continue;
        }
        match ev {
            XmlEvent::End(_) => {
                let scope = stack
                    .pop()
                    .ok_or_else(|| Error::Xes("unbalanced closing tag".into()))?;
                close(
                    scope,
                    &mut current,
                    &mut trace_events,
                    &mut trace_name,
                    trace_no,
                    &mut vocabulary,
                    &mut finish_trace,
                )?;
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(Error::Xes("unexpected end of document".into()));
    }
    if !seen_log {
        return Err(Error::Xes("no <log> element".into()));
    }
    EventLog::from_events(events, vocabulary)
}

#[allow(clippy::too_many_arguments)]
fn close<F>(
    scope: Scope,
    current: &mut Option<PendingEvent>,
    trace_events: &mut Vec<PendingEvent>,
    trace_name: &mut Option<String>,
    trace_no: usize,
    vocabulary: &mut Vocabulary,
    finish_trace: &mut F,
) -> Result<()>
where
    F: FnMut(Option<String>, Vec<PendingEvent>, usize, &mut Vocabulary) -> Result<()>,
{
    match scope {
        Scope::Event => {
            if let Some(ev) = current.take() {
                trace_events.push(ev);
            }
        }
        Scope::Trace => {
            finish_trace(
                trace_name.take(),
                std::mem::take(trace_events),
                trace_no,
                vocabulary,
            )?;
        }
        Scope::Log | Scope::Other => {}
    }
    Ok(())
}
