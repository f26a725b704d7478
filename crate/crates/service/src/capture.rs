//! Mouse-event batches posted by the in-page capture script.

use std::collections::BTreeMap;
use std::sync::Mutex;

use proctor_core::ingest::{write_mouse_events, MouseRecord};
use proctor_core::MouseEvent;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureBatch {
    pub sequence: u64,
    pub events: Vec<MouseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureAck {
    pub token: String,
    pub sequence: u64,
    /// False when this sequence number was already stored.
    pub accepted: bool,
    pub batches: usize,
    pub events: usize,
}

#[derive(Default)]
pub struct CaptureStore {
    sessions: Mutex<BTreeMap<String, BTreeMap<u64, Vec<MouseEvent>>>>,
}

impl CaptureStore {
    /// Stores a batch. Redelivered sequence numbers are acknowledged without
    /// being stored twice.
    pub fn append(&self, token: &str, batch: CaptureBatch) -> Result<CaptureAck, ApiError> {
        let events = batch
            .events
            .iter()
            .enumerate()
            .map(|(i, r)| r.to_event(i + 1))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ApiError::InvalidRequest(format!("batch {}: {e}", batch.sequence)))?;
        if events.windows(2).any(|w| w[0].timestamp_ms > w[1].timestamp_ms) {
            return Err(ApiError::InvalidRequest(format!("batch {} is not time-ordered", batch.sequence)));
        }
        let mut sessions = self.sessions.lock().expect("capture lock poisoned");
        let batches = sessions.entry(token.to_owned()).or_default();
        let accepted = !batches.contains_key(&batch.sequence);
        if accepted {
            batches.insert(batch.sequence, events);
        }
        Ok(CaptureAck {
            token: token.to_owned(),
            sequence: batch.sequence,
            accepted,
            batches: batches.len(),
            events: batches.values().map(Vec::len).sum(),
        })
    }

    /// All stored events of `token`, ordered by sequence then timestamp.
    pub fn events(&self, token: &str) -> Option<Vec<MouseEvent>> {
        let sessions = self.sessions.lock().expect("capture lock poisoned");
        let mut events: Vec<MouseEvent> = sessions.get(token)?.values().flatten().cloned().collect();
        events.sort_by_key(|e| e.timestamp_ms);
        Some(events)
    }

    /// The session's events in the mouse-event JSONL format.
    pub fn jsonl(&self, token: &str) -> Option<Vec<u8>> {
        let events = self.events(token)?;
        let mut out = Vec::new();
        write_mouse_events(&mut out, &events).expect("writing to memory");
        Some(out)
    }
}
