//! The append-only event log: one JSON object per line, corrections and
//! survey responses interleaved and told apart by a `type` tag.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ttifair_core::ingest::CorrectionEvent;
use ttifair_core::manifest::sha256_hex;

use crate::survey::SurveyResponse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogEntry {
    Correction(CorrectionEvent),
    Survey(SurveyResponse),
}

impl LogEntry {
    pub fn event_id(&self) -> Option<&str> {
        match self {
            LogEntry::Correction(c) => c.event_id.as_deref(),
            LogEntry::Survey(s) => s.event_id.as_deref(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("event log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event log {path} line {line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

/// Content hash used as the id of events submitted without one, so a
/// resubmitted event is recognized as a duplicate.
pub fn content_id<T: Serialize>(event: &T) -> String {
    let bytes = serde_json::to_vec(event).expect("event serializes");
    sha256_hex(&bytes)[..32].to_owned()
}

/// Effective state after replaying the log. Cheap to clone behind an `Arc`.
#[derive(Debug, Clone, Default)]
pub struct LogState {
    pub corrections: Vec<CorrectionEvent>,
    pub surveys: Vec<SurveyResponse>,
    seen: HashSet<String>,
}

impl LogState {
    pub fn contains(&self, event_id: &str) -> bool {
        self.seen.contains(event_id)
    }

    pub fn len(&self) -> usize {
        self.corrections.len() + self.surveys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies one entry; returns false for an already-seen event id.
    pub fn apply(&mut self, entry: LogEntry) -> bool {
        if let Some(id) = entry.event_id() {
            if !self.seen.insert(id.to_owned()) {
                return false;
            }
        }
        match entry {
            LogEntry::Correction(c) => self.corrections.push(c),
            LogEntry::Survey(s) => self.surveys.push(s),
        }
        true
    }
}

/// Owns the log file. All appends go through one instance.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (creating if needed) and replays the log. A trailing line cut
    /// short by a crash is dropped and truncated away.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, LogState), LogError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| LogError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io)?;

        let mut state = LogState::default();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut lineno = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(io)?;
            if n == 0 {
                break;
            }
            lineno += 1;
            if !line.ends_with('\n') {
                break;
            }
            good_len += n as u64;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LogEntry =
                serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
                    path: path.display().to_string(),
                    line: lineno,
                    message: e.to_string(),
                })?;
            state.apply(entry);
        }
        drop(reader);
        if file.metadata().map_err(io)?.len() > good_len {
            file.set_len(good_len).map_err(io)?;
            file.seek(SeekFrom::End(0)).map_err(io)?;
        }
        Ok((Self { path, file }, state))
    }

    /// Writes one line and fsyncs before returning.
    pub fn append(&mut self, entry: &LogEntry) -> Result<(), LogError> {
        let mut line = serde_json::to_vec(entry).expect("entry serializes");
        line.push(b'\n');
        let io = |source| LogError::Io {
            path: self.path.display().to_string(),
            source,
        };
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
