//! Session events, derived deterministically from session state so that sequence
//! numbers are stable across restarts.

use mind_core::session::{classify_failure, Ablation, Phase, SessionState};
use mind_core::{SessionId, SessionStatus};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ScenarioReady,
    ThoughtReady,
    GuidanceReady,
    AwaitingComfort,
    ProgressionReady,
    SessionEnded,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ScenarioReady => "ScenarioReady",
            EventKind::ThoughtReady => "ThoughtReady",
            EventKind::GuidanceReady => "GuidanceReady",
            EventKind::AwaitingComfort => "AwaitingComfort",
            EventKind::ProgressionReady => "ProgressionReady",
            EventKind::SessionEnded => "SessionEnded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: SessionId,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Value,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("domain values serialize")
}

/// All events the session has produced so far, numbered from 0.
pub fn derive_events(state: &SessionState) -> Vec<SessionEvent> {
    let mut raw: Vec<(EventKind, Value)> = Vec::new();
    let guided = state.ablation != Ablation::NoGuide;
    for r in &state.rounds {
        raw.push((EventKind::ScenarioReady, to_value(&r.scenario)));
        raw.push((EventKind::ThoughtReady, to_value(&r.thought)));
        if guided {
            raw.push((EventKind::GuidanceReady, to_value(&r.guidance)));
        }
        raw.push((EventKind::AwaitingComfort, json!({ "round": r.round })));
        raw.push((EventKind::ProgressionReady, to_value(&r.progression)));
    }
    if let Some(p) = &state.in_progress {
        if let Some(s) = &p.scenario {
            raw.push((EventKind::ScenarioReady, to_value(s)));
        }
        if let Some(t) = &p.thought {
            raw.push((EventKind::ThoughtReady, to_value(t)));
        }
        if guided {
            if let Some(g) = &p.guidance {
                raw.push((EventKind::GuidanceReady, to_value(g)));
            }
        }
        if p.comfort.is_some() || state.phase == Phase::AwaitingComfort {
            raw.push((EventKind::AwaitingComfort, json!({ "round": p.round })));
        }
    }
    if state.status != SessionStatus::Active {
        let outcome = state.outcome();
        raw.push((
            EventKind::SessionEnded,
            json!({ "status": outcome.status, "rounds": outcome.rounds, "failure": classify_failure(&outcome) }),
        ));
    }
    raw.into_iter()
        .enumerate()
        .map(|(seq, (kind, payload))| SessionEvent { session_id: state.id.clone(), seq: seq as u64, kind, payload })
        .collect()
}
