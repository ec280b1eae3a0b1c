//! Session state machine for one healing session.
//!
//! A session cycles through `AwaitingScenario -> AwaitingThought -> AwaitingGuidance ->
//! AwaitingComfort -> AwaitingProgression` once per round. The guide phase is skipped
//! under [`Ablation::NoGuide`] and the progression phase under
//! [`Ablation::NoStrategist`], where an identity progression is synthesized instead.
//! [`SessionState::step`] is the only way to move a session forward; it validates the
//! input against the phase and round and never leaves a half-applied round behind.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::domain::{
    AgentRole, Author, Comfort, Concern, DistortedThought, DistortionType, Guidance,
    PersonalityProfile, Progression, Scenario, Theme,
};
use crate::memory::{summary_line, MemoryState};

pub const DEFAULT_MAX_ROUNDS: u32 = 10;

/// Outputs longer than this are logged, never rejected.
pub const WORD_WARNING_THRESHOLD: usize = 250;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    pub fn new(id: impl Into<String>) -> Self {
        SessionId(id.into())
    }

    pub fn generate() -> Self {
        SessionId(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Ids double as file names, so only `[A-Za-z0-9_-]` is accepted.
    pub fn is_path_safe(&self) -> bool {
        !self.0.is_empty()
            && self.0.len() <= 128
            && self.0.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    AwaitingScenario,
    AwaitingThought,
    AwaitingGuidance,
    AwaitingComfort,
    AwaitingProgression,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionStatus {
    Active,
    CompletedGoal,
    MaxRoundsReached,
    SafetyTerminated,
}

/// Component removed from the pipeline for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum Ablation {
    #[default]
    None,
    NoMemory,
    NoStrategist,
    NoGuide,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::None,
        Ablation::NoMemory,
        Ablation::NoStrategist,
        Ablation::NoGuide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "None",
            Ablation::NoMemory => "NoMemory",
            Ablation::NoStrategist => "NoStrategist",
            Ablation::NoGuide => "NoGuide",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = crate::domain::normalize_label(s);
        Ablation::ALL
            .into_iter()
            .find(|a| crate::domain::normalize_label(a.as_str()) == key)
            .ok_or_else(|| format!("unknown ablation `{s}` (expected None, NoMemory, NoStrategist or NoGuide)"))
    }
}

/// The five per-round fields, in acceptance order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    Scenario,
    Thought,
    Guidance,
    Comfort,
    Progression,
}

/// Records that `field` was accepted as the `seq`-th step of the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepMark {
    pub field: FieldKind,
    pub seq: u64,
}

/// Text returned by a backend for one agent call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentOutput {
    pub role: AgentRole,
    pub raw: String,
    /// Earlier answers that failed to parse and triggered a re-ask.
    pub rejected: Vec<String>,
}

/// A fully completed round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub scenario: Scenario,
    pub thought: DistortedThought,
    pub guidance: Guidance,
    pub comfort: Comfort,
    pub progression: Progression,
    pub raw_outputs: BTreeMap<AgentRole, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rejected_outputs: BTreeMap<AgentRole, Vec<String>>,
    pub steps: Vec<StepMark>,
}

/// The round currently being assembled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialRound {
    pub round: u32,
    pub scenario: Option<Scenario>,
    pub thought: Option<DistortedThought>,
    pub guidance: Option<Guidance>,
    pub comfort: Option<Comfort>,
    pub raw_outputs: BTreeMap<AgentRole, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rejected_outputs: BTreeMap<AgentRole, Vec<String>>,
    pub steps: Vec<StepMark>,
}

impl PartialRound {
    fn new(round: u32) -> Self {
        PartialRound {
            round,
            scenario: None,
            thought: None,
            guidance: None,
            comfort: None,
            raw_outputs: BTreeMap::new(),
            rejected_outputs: BTreeMap::new(),
            steps: Vec::new(),
        }
    }
}

/// Input accepted by [`SessionState::step`]; the variant must match the phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhaseInput {
    Scenario(Scenario),
    Thought(DistortedThought),
    Guidance(Guidance),
    Comfort(Comfort),
    Progression(Progression),
}

impl PhaseInput {
    pub fn kind(&self) -> FieldKind {
        match self {
            PhaseInput::Scenario(_) => FieldKind::Scenario,
            PhaseInput::Thought(_) => FieldKind::Thought,
            PhaseInput::Guidance(_) => FieldKind::Guidance,
            PhaseInput::Comfort(_) => FieldKind::Comfort,
            PhaseInput::Progression(_) => FieldKind::Progression,
        }
    }

    pub fn round(&self) -> u32 {
        match self {
            PhaseInput::Scenario(v) => v.round,
            PhaseInput::Thought(v) => v.round,
            PhaseInput::Guidance(v) => v.round,
            PhaseInput::Comfort(v) => v.round,
            PhaseInput::Progression(v) => v.round,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionOptions {
    pub max_rounds: u32,
    pub facilitation_enabled: bool,
    pub ablation: Ablation,
    /// Fixed id, e.g. when replaying a recorded session.
    pub id: Option<SessionId>,
    pub created_at: Option<DateTime<Utc>>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            max_rounds: DEFAULT_MAX_ROUNDS,
            facilitation_enabled: false,
            ablation: Ablation::None,
            id: None,
            created_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("concern must not be empty")]
    EmptyConcern,
    #[error("invalid session options: {0}")]
    InvalidOptions(String),
    #[error("session is not active (status {0:?})")]
    SessionNotActive(SessionStatus),
    #[error("phase mismatch: session is in {phase:?}, got {got:?} input")]
    PhaseMismatch { phase: Phase, got: FieldKind },
    #[error("round index mismatch: session is at round {expected}, input carries {got}")]
    RoundIndexMismatch { expected: u32, got: u32 },
    #[error("invalid {field:?} input: {reason}")]
    InvalidInput { field: FieldKind, reason: String },
}

/// Result of driving a session to a terminal status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub session_id: SessionId,
    pub status: SessionStatus,
    pub rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: SessionId,
    pub theme: Theme,
    pub concern: Concern,
    pub personality: PersonalityProfile,
    pub round: u32,
    pub phase: Phase,
    pub rounds: Vec<RoundRecord>,
    pub memory: MemoryState,
    pub status: SessionStatus,
    pub max_rounds: u32,
    pub facilitation_enabled: bool,
    pub ablation: Ablation,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub in_progress: Option<PartialRound>,
    #[serde(default)]
    pub step_count: u64,
}

/// Creates an inert session at round 0. No agent is consulted until the session is driven.
pub fn create_session(
    theme: Theme,
    concern: &str,
    personality: PersonalityProfile,
    options: SessionOptions,
) -> Result<SessionState, SessionError> {
    let concern = Concern::new(concern).map_err(|_| SessionError::EmptyConcern)?;
    if options.max_rounds == 0 {
        return Err(SessionError::InvalidOptions("max_rounds must be at least 1".into()));
    }
    personality
        .validate()
        .map_err(|e| SessionError::InvalidOptions(e.to_string()))?;
    let id = options.id.unwrap_or_else(SessionId::generate);
    if !id.is_path_safe() {
        return Err(SessionError::InvalidOptions(format!("session id `{id}` must match [A-Za-z0-9_-]{{1,128}}")));
    }
    Ok(SessionState {
        id,
        theme,
        concern,
        personality,
        round: 0,
        phase: Phase::AwaitingScenario,
        rounds: Vec::new(),
        memory: MemoryState::default(),
        status: SessionStatus::Active,
        max_rounds: options.max_rounds,
        facilitation_enabled: options.facilitation_enabled,
        ablation: options.ablation,
        created_at: options.created_at.unwrap_or_else(Utc::now),
        in_progress: None,
        step_count: 0,
    })
}

/// A finished session counts as failed unless the therapeutic goal was reached.
pub fn classify_failure(outcome: &SessionOutcome) -> bool {
    matches!(
        outcome.status,
        SessionStatus::MaxRoundsReached | SessionStatus::SafetyTerminated
    )
}

fn expected_kind(phase: Phase) -> Option<FieldKind> {
    match phase {
        Phase::AwaitingScenario => Some(FieldKind::Scenario),
        Phase::AwaitingThought => Some(FieldKind::Thought),
        Phase::AwaitingGuidance => Some(FieldKind::Guidance),
        Phase::AwaitingComfort => Some(FieldKind::Comfort),
        Phase::AwaitingProgression => Some(FieldKind::Progression),
        Phase::Completed => None,
    }
}

fn warn_if_long(field: FieldKind, text: &str) {
    let words = text.split_whitespace().count();
    if words > WORD_WARNING_THRESHOLD {
        warn!(?field, words, "agent output exceeds {WORD_WARNING_THRESHOLD} words");
    }
}

fn invalid(field: FieldKind, reason: impl Into<String>) -> SessionError {
    SessionError::InvalidInput { field, reason: reason.into() }
}

impl SessionState {
    pub fn is_active(&self) -> bool {
        self.status == SessionStatus::Active
    }

    pub fn remembers(&self) -> bool {
        self.ablation != Ablation::NoMemory
    }

    pub fn outcome(&self) -> SessionOutcome {
        SessionOutcome {
            session_id: self.id.clone(),
            status: self.status,
            rounds: self.rounds.len() as u32,
        }
    }

    /// Round-0 distortion type, once classified.
    pub fn distortion_type(&self) -> Option<DistortionType> {
        self.rounds
            .first()
            .map(|r| r.thought.distortion_type)
            .or_else(|| {
                self.in_progress
                    .as_ref()
                    .filter(|p| p.round == 0)
                    .and_then(|p| p.thought.as_ref())
                    .map(|t| t.distortion_type)
            })
    }

    pub fn last_round(&self) -> Option<&RoundRecord> {
        self.rounds.last()
    }

    /// The input kind the current phase expects, if any.
    pub fn expected_input(&self) -> Option<FieldKind> {
        if self.is_active() {
            expected_kind(self.phase)
        } else {
            None
        }
    }

    pub fn step(&mut self, input: PhaseInput) -> Result<(), SessionError> {
        self.step_with_output(input, None)
    }

    /// Applies one phase input, optionally recording the raw backend text it came from.
    pub fn step_with_output(
        &mut self,
        input: PhaseInput,
        output: Option<AgentOutput>,
    ) -> Result<(), SessionError> {
        if !self.is_active() {
            return Err(SessionError::SessionNotActive(self.status));
        }
        let got = input.kind();
        if expected_kind(self.phase) != Some(got) {
            return Err(SessionError::PhaseMismatch { phase: self.phase, got });
        }
        if input.round() != self.round {
            return Err(SessionError::RoundIndexMismatch { expected: self.round, got: input.round() });
        }
        self.validate(&input)?;

        let seq = self.step_count;
        let round = self.round;
        let partial = self.in_progress.get_or_insert_with(|| PartialRound::new(round));
        partial.steps.push(StepMark { field: got, seq });
        if let Some(out) = output {
            if !out.rejected.is_empty() {
                partial.rejected_outputs.insert(out.role, out.rejected);
            }
            partial.raw_outputs.insert(out.role, out.raw);
        }
        self.step_count += 1;

        let remember = self.remembers();
        match input {
            PhaseInput::Scenario(s) => {
                warn_if_long(got, &s.scene);
                if remember {
                    self.memory.memory_scene.push(s.scene.clone());
                }
                self.partial_mut().scenario = Some(s);
                self.phase = Phase::AwaitingThought;
            }
            PhaseInput::Thought(t) => {
                warn_if_long(got, &t.thoughts);
                if remember {
                    self.memory.memory_thought.push(t.thoughts.clone());
                }
                self.partial_mut().thought = Some(t);
                if self.ablation == Ablation::NoGuide {
                    let placeholder = Guidance::placeholder(round);
                    if remember {
                        self.memory.memory_guide.push(placeholder.help.clone());
                    }
                    self.partial_mut().guidance = Some(placeholder);
                    self.memory.summary = self.compose_summary();
                    self.phase = Phase::AwaitingComfort;
                } else {
                    self.phase = Phase::AwaitingGuidance;
                }
            }
            PhaseInput::Guidance(g) => {
                warn_if_long(got, &g.help);
                if remember {
                    self.memory.memory_guide.push(g.help.clone());
                }
                self.partial_mut().guidance = Some(g);
                self.memory.summary = self.compose_summary();
                self.phase = Phase::AwaitingComfort;
            }
            PhaseInput::Comfort(c) => {
                if remember {
                    self.memory.memory_comforting.push(c.comforting_words.clone());
                }
                self.partial_mut().comfort = Some(c);
                if self.ablation == Ablation::NoStrategist {
                    let passthrough = self.passthrough_progression();
                    self.finish_round(passthrough);
                } else {
                    self.phase = Phase::AwaitingProgression;
                }
            }
            PhaseInput::Progression(p) => {
                warn_if_long(got, &p.next_scene);
                self.finish_round(p);
            }
        }
        Ok(())
    }

    /// Replaces the condensed summary, e.g. with the output of a summarizer pass.
    pub fn set_summary(&mut self, summary: impl Into<String>) {
        self.memory.summary = summary.into();
    }

    /// Ends the session because the player stopped engaging. The partial round is
    /// discarded and the session is reported as having run out of rounds.
    pub fn withdraw(&mut self) -> Result<(), SessionError> {
        if !self.is_active() {
            return Err(SessionError::SessionNotActive(self.status));
        }
        self.in_progress = None;
        if self.remembers() {
            self.memory.truncate(self.rounds.len());
        }
        self.memory.summary = self.compose_summary();
        self.status = SessionStatus::MaxRoundsReached;
        self.phase = Phase::Completed;
        Ok(())
    }

    /// Recomputes the summary from the guide's per-round condensations (or the raw
    /// scene and thoughts when the guide is ablated). Without memory only the latest
    /// round contributes.
    pub fn compose_summary(&self) -> String {
        let mut lines: Vec<String> = self
            .rounds
            .iter()
            .map(|r| line_for(self.ablation, &r.scenario, &r.thought, Some(&r.guidance)))
            .collect();
        if let Some(p) = &self.in_progress {
            if let (Some(s), Some(t)) = (&p.scenario, &p.thought) {
                lines.push(line_for(self.ablation, s, t, p.guidance.as_ref()));
            }
        }
        if !self.remembers() {
            let last = lines.pop();
            lines = last.into_iter().collect();
        }
        lines.join("\n")
    }

    fn partial_mut(&mut self) -> &mut PartialRound {
        let round = self.round;
        self.in_progress.get_or_insert_with(|| PartialRound::new(round))
    }

    fn passthrough_progression(&self) -> Progression {
        let p = self.in_progress.as_ref();
        Progression {
            round: self.round,
            next_scene: p.and_then(|p| p.scenario.as_ref()).map(|s| s.scene.clone()).unwrap_or_default(),
            next_thoughts: p.and_then(|p| p.thought.as_ref()).map(|t| t.thoughts.clone()).unwrap_or_default(),
            is_end: false,
            reasons: "strategist disabled: scene and thoughts carried forward".into(),
            safety_stop: None,
        }
    }

    fn finish_round(&mut self, progression: Progression) {
        let partial = self
            .in_progress
            .take()
            .expect("a round in progress when its progression arrives");
        let record = RoundRecord {
            round: partial.round,
            scenario: partial.scenario.expect("scenario accepted before progression"),
            thought: partial.thought.expect("thought accepted before progression"),
            guidance: partial.guidance.expect("guidance accepted before progression"),
            comfort: partial.comfort.expect("comfort accepted before progression"),
            raw_outputs: partial.raw_outputs,
            rejected_outputs: partial.rejected_outputs,
            steps: partial.steps,
            progression,
        };
        let stop = record.progression.safety_stop.is_some();
        let goal = record.progression.is_end;
        self.rounds.push(record);

        self.status = if stop {
            SessionStatus::SafetyTerminated
        } else if goal {
            SessionStatus::CompletedGoal
        } else if self.round + 1 >= self.max_rounds {
            SessionStatus::MaxRoundsReached
        } else {
            SessionStatus::Active
        };
        if self.is_active() {
            self.round += 1;
            self.phase = Phase::AwaitingScenario;
        } else {
            self.phase = Phase::Completed;
        }
    }

    fn validate(&self, input: &PhaseInput) -> Result<(), SessionError> {
        let field = input.kind();
        match input {
            PhaseInput::Scenario(s) => {
                if s.changes.is_some() != (s.round > 0) {
                    return Err(invalid(field, "`changes` must be present exactly when round > 0"));
                }
            }
            PhaseInput::Thought(t) => {
                if let Some(first) = self.distortion_type() {
                    if t.round > 0 && t.distortion_type != first {
                        return Err(invalid(
                            field,
                            format!("distortion type {} differs from round-0 type {}", t.distortion_type, first),
                        ));
                    }
                }
            }
            PhaseInput::Guidance(_) => {}
            PhaseInput::Comfort(c) => {
                if c.comforting_words.trim().is_empty() {
                    return Err(invalid(field, "comforting words must not be empty"));
                }
                if c.author == Author::Simulated && c.reasons.is_none() {
                    return Err(invalid(field, "simulated comfort must carry reasons"));
                }
            }
            PhaseInput::Progression(p) => {
                if p.safety_stop.is_some() && !self.facilitation_enabled {
                    return Err(invalid(field, "safety stop requires the facilitation protocol"));
                }
            }
        }
        Ok(())
    }
}

fn line_for(
    ablation: Ablation,
    scenario: &Scenario,
    thought: &DistortedThought,
    guidance: Option<&Guidance>,
) -> String {
    match guidance {
        Some(g) if ablation != Ablation::NoGuide => summary_line(&g.summary_scene, &g.summary_thoughts),
        _ => summary_line(&scenario.scene, &thought.thoughts),
    }
}
