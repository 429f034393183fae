//! Append-only session event log.
//!
//! One JSON object per line. Sessions are rebuilt on start by replaying
//! their events against the model; a snapshot is written whenever a session
//! stops.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::adaptive::StoppingConfig;
use crate::error::{Error, Result};
use crate::inference::ConversationState;

use super::Status;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session: Uuid,
        config: StoppingConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        questions: Option<Vec<String>>,
        at_ms: u64,
    },
    Answered {
        session: Uuid,
        question_id: String,
        answer_id: String,
        at_ms: u64,
    },
    Snapshot {
        session: Uuid,
        status: Status,
        state: ConversationState,
        at_ms: u64,
    },
}

impl Event {
    pub fn session(&self) -> Uuid {
        match self {
            Event::Created { session, .. } | Event::Answered { session, .. } | Event::Snapshot { session, .. } => *session,
        }
    }
}

#[derive(Debug)]
pub struct EventStore {
    path: PathBuf,
    file: Mutex<File>,
}

impl EventStore {
    pub fn open(path: impl AsRef<Path>) -> Result<EventStore> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(EventStore {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()?;
        Ok(())
    }

    pub fn read_all(&self) -> Result<Vec<Event>> {
        let reader = BufReader::new(File::open(&self.path)?);
        let mut events = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(&line).map_err(|e| Error::Log {
                line: k + 1,
                message: e.to_string(),
            })?;
            events.push(event);
        }
        Ok(events)
    }
}
