//! JSON Lines event log: a header line, then one event per line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::events::{LogHeader, MissionEvent};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot write log {path}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cannot read log {path}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
}

pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self, LogError> {
        let file = File::create(path).map_err(|source| LogError::Write {
            path: path.into(),
            source,
        })?;
        let mut w = Self {
            path: path.into(),
            out: BufWriter::new(file),
        };
        w.line(&serde_json::to_string(header).expect("header serializes"))?;
        Ok(w)
    }

    fn line(&mut self, text: &str) -> Result<(), LogError> {
        self.out
            .write_all(text.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|source| LogError::Write {
                path: self.path.clone(),
                source,
            })
    }

    pub fn append(&mut self, events: &[MissionEvent]) -> Result<(), LogError> {
        for e in events {
            self.line(&serde_json::to_string(e).expect("event serializes"))?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        self.out.flush().map_err(|source| LogError::Write {
            path: self.path.clone(),
            source,
        })
    }
}

/// Renders a whole log in memory.
pub fn render_log(header: &LogHeader, events: &[MissionEvent]) -> String {
    let mut s = serde_json::to_string(header).expect("header serializes");
    s.push('\n');
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("event serializes"));
        s.push('\n');
    }
    s
}

/// A parsed log. An empty input has no header and no events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLog {
    pub header: Option<LogHeader>,
    pub events: Vec<MissionEvent>,
}

/// Parses log text. Line numbers in errors are 1-based. Sequence numbers
/// must strictly increase.
pub fn parse_log(text: &str) -> Result<ParsedLog, LogError> {
    let mut log = ParsedLog::default();
    let mut last_seq = 0;
    for (idx, line) in text.split_inclusive('\n').enumerate() {
        let n = idx + 1;
        let Some(body) = line.strip_suffix('\n') else {
            return Err(LogError::CorruptLog {
                line: n,
                reason: "truncated line".into(),
            });
        };
        if idx == 0 {
            let header: LogHeader = serde_json::from_str(body).map_err(|e| LogError::CorruptLog {
                line: n,
                reason: format!("bad header: {e}"),
            })?;
            log.header = Some(header);
            continue;
        }
        let event: MissionEvent = serde_json::from_str(body).map_err(|e| LogError::CorruptLog {
            line: n,
            reason: e.to_string(),
        })?;
        if event.seq <= last_seq {
            return Err(LogError::CorruptLog {
                line: n,
                reason: format!("seq {} after {}", event.seq, last_seq),
            });
        }
        last_seq = event.seq;
        log.events.push(event);
    }
    Ok(log)
}

pub fn read_log(path: &Path) -> Result<ParsedLog, LogError> {
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Read {
        path: path.into(),
        source,
    })?;
    parse_log(&text)
}
