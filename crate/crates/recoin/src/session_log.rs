//! Append-only session log and self-report CSV export.
//!
//! The log is one JSON object per line, tagged by `event`:
//!
//! ```text
//! {"event":"start","session_id":"..","condition":"C4","item":"A3","started_at":"2026-01-01T00:00:00.000Z","limit_secs":600,"index_fingerprint":".."}
//! {"event":"edit","session_id":"..","property":"P2","value":"..","via_recoin":true,"at":".."}
//! {"event":"finalize","session_id":"..","at":"..","result":{"relevance":25.0,"usage":2,"grade":{"letter":"B","delta":25.0},"edit_count":2}}
//! {"event":"report","session_id":"..","at":"..","record":{...}}
//! ```
//!
//! Timestamps are RFC 3339 with millisecond precision. Replaying a log
//! against the index it was written with recomputes every task result and
//! checks it against the logged one.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use recoin_core::session::ReportRecord;
use recoin_core::stats::SessionRow;
use recoin_core::{ClassIndex, Condition, EditSession, EntityStore, ItemId, PropertyId, TaskResult};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_FILE: &str = "sessions.jsonl";
pub const CSV_FILE: &str = "self_reports.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Start {
        session_id: String,
        condition: Condition,
        item: ItemId,
        started_at: String,
        limit_secs: u64,
        index_fingerprint: String,
    },
    Edit {
        session_id: String,
        property: PropertyId,
        value: String,
        via_recoin: bool,
        at: String,
    },
    Finalize {
        session_id: String,
        at: String,
        result: TaskResult,
    },
    Report {
        session_id: String,
        at: String,
        record: ReportRecord,
    },
}

impl SessionEvent {
    pub fn session_id(&self) -> &str {
        match self {
            Self::Start { session_id, .. }
            | Self::Edit { session_id, .. }
            | Self::Finalize { session_id, .. }
            | Self::Report { session_id, .. } => session_id,
        }
    }
}

pub fn to_rfc3339(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .unwrap_or_default()
        .to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn from_rfc3339(s: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|t| t.timestamp_millis())
}

pub fn now_ms() -> i64 {
    Utc::now().timestamp_millis()
}

/// Appends events to `<dir>/sessions.jsonl`, one flushed line per event.
pub struct SessionLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl SessionLog {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOG_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, event: &SessionEvent) -> Result<()> {
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(line.as_bytes())
            .and_then(|()| file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn events(&self) -> Result<Vec<SessionEvent>> {
        read_events_file(&self.path)
    }
}

pub fn read_events_file(path: &Path) -> Result<Vec<SessionEvent>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(BufReader::new(file))
}

pub fn read_events(reader: impl BufRead) -> Result<Vec<SessionEvent>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| Error::Log {
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.push(event);
    }
    Ok(out)
}

fn timestamp(line: u64, s: &str) -> Result<i64> {
    from_rfc3339(s).ok_or_else(|| Error::Log {
        line,
        message: format!("bad timestamp {s:?}"),
    })
}

/// Rebuilds every session by re-running its operations.
///
/// Sessions are returned in order of their start events. A finalize whose
/// recomputed result differs from the logged one is an error.
pub fn replay(events: &[SessionEvent], store: &EntityStore, index: &ClassIndex) -> Result<Vec<EditSession>> {
    let mut order: Vec<String> = Vec::new();
    let mut sessions: HashMap<String, EditSession> = HashMap::new();
    for (i, event) in events.iter().enumerate() {
        let line = i as u64 + 1;
        let log_err = |message: String| Error::Log { line, message };
        if let SessionEvent::Start {
            session_id,
            condition,
            item,
            started_at,
            limit_secs,
            index_fingerprint,
        } = event
        {
            if index_fingerprint != index.fingerprint() {
                return Err(log_err(format!(
                    "session {session_id} was run against index {index_fingerprint}"
                )));
            }
            let start = timestamp(line, started_at)?;
            let s = EditSession::start(
                session_id.clone(),
                *condition,
                item.as_str(),
                store,
                index,
                start,
                *limit_secs,
            )?;
            if sessions.insert(session_id.clone(), s).is_some() {
                return Err(log_err(format!("session {session_id} started twice")));
            }
            order.push(session_id.clone());
            continue;
        }
        let session = sessions
            .get_mut(event.session_id())
            .ok_or_else(|| log_err(format!("unknown session {}", event.session_id())))?;
        match event {
            SessionEvent::Start { .. } => unreachable!("handled above"),
            SessionEvent::Edit {
                property,
                value,
                via_recoin,
                at,
                ..
            } => {
                let at = timestamp(line, at)?;
                session.apply_edit(property.as_str(), value, *via_recoin, at)?;
            }
            SessionEvent::Finalize { result, .. } => {
                let recomputed = session.finalize(index)?;
                if recomputed != *result {
                    return Err(log_err(format!(
                        "session {} recomputes to {recomputed:?}, log has {result:?}",
                        session.id
                    )));
                }
            }
            SessionEvent::Report { record, .. } => {
                session.record_self_report(record.report.clone())?;
            }
        }
    }
    Ok(order
        .into_iter()
        .filter_map(|id| sessions.remove(&id))
        .collect())
}

pub fn row_of(record: &ReportRecord) -> SessionRow {
    SessionRow {
        condition: record.condition,
        grade: record.result.grade.letter,
        relevance: record.result.relevance,
        usage: record.result.usage,
        comprehension: record.report.comprehension,
        fairness: record.report.fairness,
        accuracy: record.report.accuracy,
        trust: record.report.trust,
    }
}

/// One row per reported session (the latest report wins), ordered by each
/// session's first report.
pub fn report_rows(events: &[SessionEvent]) -> Vec<SessionRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut latest: BTreeMap<&str, &ReportRecord> = BTreeMap::new();
    for event in events {
        if let SessionEvent::Report { session_id, record, .. } = event {
            if latest.insert(session_id, record).is_none() {
                order.push(session_id);
            }
        }
    }
    order.into_iter().map(|id| row_of(latest[id])).collect()
}

/// CSV with header `condition,grade,relevance,usage,comprehension,fairness,accuracy,trust`.
pub fn write_csv(writer: impl Write, rows: &[SessionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record([
            "condition",
            "grade",
            "relevance",
            "usage",
            "comprehension",
            "fairness",
            "accuracy",
            "trust",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, rows: &[SessionRow]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    write_csv(file, rows)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_csv(reader: impl Read) -> Result<Vec<SessionRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let rows = r.deserialize().collect::<std::result::Result<Vec<SessionRow>, _>>()?;
    for row in &rows {
        let report = recoin_core::SelfReport::new(row.comprehension, row.fairness, row.accuracy, row.trust);
        report.validate()?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use recoin_core::entity::astro_mini;
    use recoin_core::index::build_index;
    use recoin_core::recommender::GradeLetter;
    use recoin_core::{IndexConfig, SelfReport};

    #[test]
    fn timestamps_round_trip_at_millisecond_precision() {
        let ms = 1_760_000_000_123;
        let s = to_rfc3339(ms);
        assert_eq!(s, "2025-10-09T08:53:20.123Z");
        assert_eq!(from_rfc3339(&s), Some(ms));
        assert_eq!(from_rfc3339("yesterday"), None);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let rows = vec![SessionRow {
            condition: Condition::C4,
            grade: GradeLetter::B,
            relevance: 21.000000000000004,
            usage: 3,
            comprehension: 3,
            fairness: 6,
            accuracy: 6,
            trust: 5,
        }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("condition,grade,relevance,usage,comprehension,fairness,accuracy,trust\n"));
        assert!(text.contains("C4,B,21.000000000000004,3,3,6,6,5"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
        let bad = "condition,grade,relevance,usage,comprehension,fairness,accuracy,trust\nC4,B,1,0,6,1,1,1\n";
        assert!(read_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn replay_detects_tampered_results() {
        let store = astro_mini();
        let index = build_index(&store, &IndexConfig::default());
        let t0 = 1_700_000_000_000;
        let mut s = EditSession::start("s", Condition::C1, "A3", &store, &index, t0, 600).unwrap();
        s.apply_edit("P2", "v", true, t0 + 10).unwrap();
        let result = s.finalize(&index).unwrap();
        let record = s.record_self_report(SelfReport::new(2, 3, 4, 5)).unwrap();
        let mut events = vec![
            SessionEvent::Start {
                session_id: "s".into(),
                condition: Condition::C1,
                item: "A3".into(),
                started_at: to_rfc3339(t0),
                limit_secs: 600,
                index_fingerprint: index.fingerprint().into(),
            },
            SessionEvent::Edit {
                session_id: "s".into(),
                property: "P2".into(),
                value: "v".into(),
                via_recoin: true,
                at: to_rfc3339(t0 + 10),
            },
            SessionEvent::Finalize {
                session_id: "s".into(),
                at: to_rfc3339(t0 + 20),
                result,
            },
            SessionEvent::Report {
                session_id: "s".into(),
                at: to_rfc3339(t0 + 30),
                record,
            },
        ];
        let replayed = replay(&events, &store, &index).unwrap();
        assert_eq!(replayed, vec![s]);
        assert_eq!(report_rows(&events).len(), 1);

        if let SessionEvent::Finalize { result, .. } = &mut events[2] {
            result.usage = 7;
        }
        assert!(matches!(replay(&events, &store, &index), Err(Error::Log { line: 3, .. })));
        assert!(matches!(replay(&events[1..], &store, &index), Err(Error::Log { line: 1, .. })));
    }
}
