//! Append-only JSON Lines event log with periodic snapshots.
//!
//! `judgments.jsonl` holds one `{"seq": n, "event": …}` object per line;
//! `snapshot.json` holds the full state as of some `seq`. On open the
//! snapshot is loaded and later log entries are replayed on top of it. A
//! torn final line (crash mid-write) is dropped and truncated away.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use biaseval_core::bws::Tuple;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{AnnotationState, Applied, Event, Rejection, StateError, TupleRecord};

pub const LOG_FILE: &str = "judgments.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 100;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("log entry {seq} does not replay: {rejection}")]
    Replay { seq: u64, rejection: Rejection },
    #[error("log entry at line {line} has seq {found}, expected {expected}")]
    Sequence { line: usize, expected: u64, found: u64 },
    #[error("snapshot was taken over a different schedule")]
    ScheduleMismatch,
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub event: Event,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    tuples: Vec<Tuple>,
    records: Vec<TupleRecord>,
}

/// Applies events in order to a fresh state over `tuples`.
pub fn replay<'a>(
    tuples: Vec<Tuple>,
    events: impl IntoIterator<Item = &'a Event>,
) -> Result<AnnotationState, LogError> {
    let mut state = AnnotationState::new(tuples)?;
    for (i, e) in events.into_iter().enumerate() {
        state.apply(e).map_err(|rejection| LogError::Replay {
            seq: i as u64 + 1,
            rejection,
        })?;
    }
    Ok(state)
}

/// Serialized appender. Without a directory, events are only counted.
#[derive(Debug)]
pub struct EventLog {
    dir: Option<PathBuf>,
    file: Option<File>,
    seq: u64,
    snapshot_every: u64,
    since_snapshot: u64,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            file: None,
            seq: 0,
            snapshot_every: 0,
            since_snapshot: 0,
        }
    }

    /// Opens (or creates) the log in `dir` and rebuilds the state.
    pub fn open(
        dir: impl AsRef<Path>,
        tuples: Vec<Tuple>,
        snapshot_every: u64,
    ) -> Result<(AnnotationState, Self), LogError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;

        let snap_path = dir.join(SNAPSHOT_FILE);
        let (mut state, mut seq) = match fs::read_to_string(&snap_path) {
            Ok(text) => {
                let snap: Snapshot = serde_json::from_str(&text).map_err(|source| LogError::Json {
                    path: snap_path.clone(),
                    line: 1,
                    source,
                })?;
                if snap.tuples != tuples {
                    return Err(LogError::ScheduleMismatch);
                }
                (AnnotationState::restore(snap.tuples, snap.records)?, snap.seq)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => (AnnotationState::new(tuples)?, 0),
            Err(e) => return Err(io_err(&snap_path)(e)),
        };

        let log_path = dir.join(LOG_FILE);
        let text = match fs::read_to_string(&log_path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(&log_path)(e)),
        };
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        let mut replayed = 0u64;
        for (n, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: LogEntry = serde_json::from_str(line).map_err(|source| LogError::Json {
                path: log_path.clone(),
                line: n + 1,
                source,
            })?;
            if entry.seq <= seq {
                continue; // covered by the snapshot
            }
            if entry.seq != seq + 1 {
                return Err(LogError::Sequence {
                    line: n + 1,
                    expected: seq + 1,
                    found: entry.seq,
                });
            }
            state.apply(&entry.event).map_err(|rejection| LogError::Replay {
                seq: entry.seq,
                rejection,
            })?;
            seq = entry.seq;
            replayed += 1;
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        if complete < text.len() {
            file.set_len(complete as u64).map_err(io_err(&log_path))?;
        }
        Ok((
            state,
            Self {
                dir: Some(dir.to_path_buf()),
                file: Some(file),
                seq,
                snapshot_every,
                since_snapshot: replayed,
            },
        ))
    }

    /// Sequence number of the last appended event.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Validates, persists, then applies `event`. Nothing is written when
    /// the event is rejected.
    pub fn commit(&mut self, state: &mut AnnotationState, event: Event) -> Result<Result<Applied, Rejection>, LogError> {
        if let Err(r) = state.check(&event) {
            return Ok(Err(r));
        }
        let entry = LogEntry {
            seq: self.seq + 1,
            event,
        };
        if let (Some(file), Some(dir)) = (&mut self.file, &self.dir) {
            let mut line = serde_json::to_vec(&entry).expect("events always serialize");
            line.push(b'\n');
            let path = dir.join(LOG_FILE);
            file.write_all(&line).map_err(io_err(&path))?;
            file.sync_data().map_err(io_err(&path))?;
        }
        self.seq = entry.seq;
        let applied = state.apply(&entry.event).expect("checked above");
        self.since_snapshot += 1;
        if self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every {
            self.snapshot(state)?;
        }
        Ok(Ok(applied))
    }

    /// Writes the snapshot atomically (temp file + rename).
    pub fn snapshot(&mut self, state: &AnnotationState) -> Result<(), LogError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let snap = Snapshot {
            seq: self.seq,
            tuples: state.tuples().to_vec(),
            records: state.records().to_vec(),
        };
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let body = serde_json::to_vec(&snap).expect("snapshots always serialize");
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        let path = dir.join(SNAPSHOT_FILE);
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        self.since_snapshot = 0;
        Ok(())
    }
}

/// Reads every entry of a log file.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogEntry>, LogError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|source| LogError::Json {
                path: path.to_path_buf(),
                line: n + 1,
                source,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use biaseval_core::bws::Judgment;
    use chrono::{DateTime, Utc};

    fn tuples() -> Vec<Tuple> {
        (1..=3)
            .map(|i| Tuple {
                tuple_id: i,
                text_ids: ["a", "b", "c", "d"].map(|x| format!("{x}{i}")).to_vec(),
                round: 1,
            })
            .collect()
    }

    fn judged(t: u32, who: &str, best: &str, worst: &str) -> Event {
        Event::Judged(Judgment {
            tuple_id: t,
            annotator_id: who.into(),
            best_id: format!("{best}{t}"),
            worst_id: format!("{worst}{t}"),
            timestamp: DateTime::<Utc>::from_timestamp(1_700_000_000, 0).unwrap(),
        })
    }

    #[test]
    fn reopen_replays_and_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let events = [
            judged(1, "x", "a", "b"),
            judged(1, "y", "a", "c"),
            judged(2, "x", "d", "b"),
            Event::Arbitrated(match judged(1, "z", "b", "c") {
                Event::Judged(j) => j,
                _ => unreachable!(),
            }),
            judged(3, "x", "a", "b"),
        ];
        let (mut state, mut log) = EventLog::open(dir.path(), tuples(), 2).unwrap();
        for e in &events {
            log.commit(&mut state, e.clone()).unwrap().unwrap();
        }
        // Rejected events are not written.
        assert!(log.commit(&mut state, judged(3, "x", "a", "c")).unwrap().is_err());
        assert_eq!(log.seq(), 5);
        assert!(dir.path().join(SNAPSHOT_FILE).exists());
        assert_eq!(read_log(dir.path().join(LOG_FILE)).unwrap().len(), 5);

        let (reopened, log2) = EventLog::open(dir.path(), tuples(), 2).unwrap();
        assert_eq!(reopened, state);
        assert_eq!(log2.seq(), 5);
        assert_eq!(replay(tuples(), &events).unwrap(), state);

        // Without the snapshot, the log alone is enough.
        fs::remove_file(dir.path().join(SNAPSHOT_FILE)).unwrap();
        let (from_log, _) = EventLog::open(dir.path(), tuples(), 0).unwrap();
        assert_eq!(from_log, state);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let (mut state, mut log) = EventLog::open(dir.path(), tuples(), 0).unwrap();
        log.commit(&mut state, judged(1, "x", "a", "b")).unwrap().unwrap();
        drop(log);
        let path = dir.path().join(LOG_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"seq":2,"event":{"kind":"jud"#).unwrap();
        drop(f);
        let (reopened, mut log) = EventLog::open(dir.path(), tuples(), 0).unwrap();
        assert_eq!(reopened, state);
        let mut s = reopened;
        log.commit(&mut s, judged(2, "x", "a", "b")).unwrap().unwrap();
        let entries = read_log(&path).unwrap();
        assert_eq!(entries.iter().map(|e| e.seq).collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn corrupt_or_foreign_logs_fail() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LOG_FILE), "{\"seq\":1,\"event\":{\"kind\":\"served\",\"tuple_id\":9,\"annotator_id\":\"x\"}}\n").unwrap();
        assert!(matches!(
            EventLog::open(dir.path(), tuples(), 0),
            Err(LogError::Replay { seq: 1, rejection: Rejection::UnknownTuple(9) })
        ));
        fs::write(dir.path().join(LOG_FILE), "not json\n").unwrap();
        assert!(matches!(EventLog::open(dir.path(), tuples(), 0), Err(LogError::Json { line: 1, .. })));

        let dir = tempfile::tempdir().unwrap();
        let (mut state, mut log) = EventLog::open(dir.path(), tuples(), 1).unwrap();
        log.commit(&mut state, judged(1, "x", "a", "b")).unwrap().unwrap();
        let mut other = tuples();
        other.pop();
        assert!(matches!(EventLog::open(dir.path(), other, 1), Err(LogError::ScheduleMismatch)));
    }
}
