use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EntityId, EntityKind};
use crate::error::SimError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub round: u64,
    pub actor: EntityId,
    pub label: String,
    pub payload: Value,
}

impl TraceEvent {
    /// Events addressed to or produced by the adversary.
    pub fn adversary_visible(&self) -> bool {
        self.actor.kind == EntityKind::Adversary
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, round: u64, actor: EntityId, label: &str, payload: Value) {
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent {
            seq,
            round,
            actor,
            label: label.to_string(),
            payload,
        });
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TraceEvent = serde_json::from_str(line).map_err(|err| SimError::Trace {
                line: i + 1,
                msg: err.to_string(),
            })?;
            events.push(e);
        }
        Ok(Self { events })
    }

    pub fn with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| e.label == label)
    }

    /// Checks sequence numbering and the clock monotonicity rule.
    pub fn check_well_formed(&self) -> Result<(), String> {
        let mut prev_round = 0u64;
        for (i, e) in self.events.iter().enumerate() {
            if e.seq != i as u64 {
                return Err(format!("event {i} has seq {}", e.seq));
            }
            if e.round < prev_round || e.round > prev_round + 1 {
                return Err(format!("event {i} jumps from round {prev_round} to {}", e.round));
            }
            if e.round == prev_round + 1 && e.label != "round_advanced" {
                return Err(format!("event {i} enters round {} without a round_advanced event", e.round));
            }
            prev_round = e.round;
        }
        Ok(())
    }
}
