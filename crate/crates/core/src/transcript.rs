//! Line-delimited JSON transcripts: a header line, one line per round, and a footer
//! line once the session has ended.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{record_replay_rounds, BackendError, ScriptedBackend};
use crate::baselines::{Character, ChatbotSession, EmpathyPhase, EmpathySession, Speaker};
use crate::domain::{Author, Concern, PersonalityProfile, Theme};
use crate::parse::ReversalPoint;
use crate::session::{classify_failure, Ablation, RoundRecord, SessionId, SessionOptions, SessionOutcome, SessionState, SessionStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Mind,
    Chatbot,
    Empathy,
}

impl Paradigm {
    pub const ALL: [Paradigm; 3] = [Paradigm::Mind, Paradigm::Chatbot, Paradigm::Empathy];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Mind => "mind",
            Paradigm::Chatbot => "chatbot",
            Paradigm::Empathy => "empathy",
        }
    }
}

impl std::fmt::Display for Paradigm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Paradigm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Paradigm::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown paradigm `{s}` (expected mind, chatbot or empathy)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub session_id: SessionId,
    pub paradigm: Paradigm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theme: Option<Theme>,
    pub concern: Concern,
    pub ablation: Ablation,
    pub facilitation: bool,
    pub max_rounds: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personality: Option<PersonalityProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character: Option<Character>,
    pub created_at: DateTime<Utc>,
    pub template_set: String,
    pub backend_model: String,
}

impl TranscriptHeader {
    /// Options that recreate the recorded session, id and creation time included.
    pub fn session_options(&self) -> SessionOptions {
        SessionOptions {
            max_rounds: self.max_rounds,
            facilitation_enabled: self.facilitation,
            ablation: self.ablation,
            id: Some(self.session_id.clone()),
            created_at: Some(self.created_at),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptFooter {
    pub status: SessionStatus,
    pub rounds: u32,
    pub failure: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpathyRound {
    pub round: u32,
    pub comfort: String,
    pub behavior: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReversalEntry {
    pub points: Vec<ReversalPoint>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub round: u32,
    pub user: String,
    pub bot: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum TranscriptEntry {
    Round(RoundRecord),
    EmpathyRound(EmpathyRound),
    Reversal(ReversalEntry),
    ChatExchange(ChatExchange),
}

impl TranscriptEntry {
    fn counts_as_round(&self) -> bool {
        !matches!(self, TranscriptEntry::Reversal(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
enum Line {
    Header(TranscriptHeader),
    Footer(TranscriptFooter),
    #[serde(untagged)]
    Entry(TranscriptEntry),
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("transcript has no header")]
    MissingHeader,
    #[error("footer reports {footer} rounds but the body holds {body}")]
    RoundCountMismatch { footer: u32, body: u32 },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub entries: Vec<TranscriptEntry>,
    pub footer: Option<TranscriptFooter>,
}

impl Transcript {
    pub fn for_session(session: &SessionState, template_set: &str, backend_model: &str) -> Self {
        let header = TranscriptHeader {
            session_id: session.id.clone(),
            paradigm: Paradigm::Mind,
            theme: Some(session.theme),
            concern: session.concern.clone(),
            ablation: session.ablation,
            facilitation: session.facilitation_enabled,
            max_rounds: session.max_rounds,
            personality: Some(session.personality),
            character: None,
            created_at: session.created_at,
            template_set: template_set.to_string(),
            backend_model: backend_model.to_string(),
        };
        let footer = (!session.is_active()).then(|| {
            let outcome = session.outcome();
            TranscriptFooter { status: outcome.status, rounds: outcome.rounds, failure: classify_failure(&outcome) }
        });
        Transcript { header, entries: session.rounds.iter().cloned().map(TranscriptEntry::Round).collect(), footer }
    }

    /// `header` supplies the identifying fields; paradigm and character are set here.
    pub fn for_empathy(mut header: TranscriptHeader, session: &EmpathySession) -> Self {
        header.paradigm = Paradigm::Empathy;
        header.character = Some(session.character);
        let mut entries: Vec<TranscriptEntry> = session
            .memory_comforting
            .iter()
            .zip(&session.memory_behavior)
            .enumerate()
            .map(|(i, (comfort, behavior))| {
                TranscriptEntry::EmpathyRound(EmpathyRound {
                    round: i as u32,
                    comfort: comfort.clone(),
                    behavior: behavior.clone(),
                    raw: session.raw_behaviors.get(i).cloned().unwrap_or_default(),
                })
            })
            .collect();
        if let (Some(points), Some(raw)) = (&session.reversal_report, &session.raw_reversal) {
            entries.push(TranscriptEntry::Reversal(ReversalEntry { points: points.clone(), raw: raw.clone() }));
        }
        let footer = (session.phase == EmpathyPhase::Completed).then(|| TranscriptFooter {
            status: SessionStatus::CompletedGoal,
            rounds: session.rounds() as u32,
            failure: false,
        });
        Transcript { header, entries, footer }
    }

    /// A chatbot conversation; `finished` writes the footer.
    pub fn for_chatbot(mut header: TranscriptHeader, session: &ChatbotSession, finished: bool) -> Self {
        header.paradigm = Paradigm::Chatbot;
        let entries: Vec<TranscriptEntry> = session
            .history
            .chunks(2)
            .enumerate()
            .filter(|(_, pair)| pair.len() == 2 && pair[0].speaker == Speaker::User)
            .map(|(i, pair)| {
                TranscriptEntry::ChatExchange(ChatExchange { round: i as u32, user: pair[0].text.clone(), bot: pair[1].text.clone() })
            })
            .collect();
        let rounds = entries.len() as u32;
        let footer = finished.then_some(TranscriptFooter { status: SessionStatus::CompletedGoal, rounds, failure: false });
        Transcript { header, entries, footer }
    }

    pub fn round_count(&self) -> u32 {
        self.entries.iter().filter(|e| e.counts_as_round()).count() as u32
    }

    pub fn mind_rounds(&self) -> Vec<RoundRecord> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TranscriptEntry::Round(r) => Some(r.clone()),
                _ => None,
            })
            .collect()
    }

    /// Outcome recorded in the footer, for failure-rate statistics.
    pub fn outcome(&self) -> Option<SessionOutcome> {
        self.footer.map(|f| SessionOutcome { session_id: self.header.session_id.clone(), status: f.status, rounds: f.rounds })
    }

    /// Scripted backend answering exactly the recorded agent calls.
    pub fn replay_backend(&self) -> Result<ScriptedBackend, BackendError> {
        record_replay_rounds(&self.mind_rounds())
    }

    /// Recorded human comfort lines, or `None` when the simulated patient comforted.
    pub fn human_comfort(&self) -> Option<Vec<String>> {
        let rounds = self.mind_rounds();
        let human = rounds.iter().any(|r| r.comfort.author == Author::Human);
        human.then(|| rounds.iter().map(|r| r.comfort.comforting_words.clone()).collect())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("transcript lines serialize"));
            out.push('\n');
        };
        push(&Line::Header(self.header.clone()));
        for entry in &self.entries {
            push(&Line::Entry(entry.clone()));
        }
        if let Some(f) = self.footer {
            push(&Line::Footer(f));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut header = None;
        let mut entries = Vec::new();
        let mut footer = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| TranscriptError::Malformed { line, message };
            if footer.is_some() {
                return Err(malformed("content after the footer".into()));
            }
            match serde_json::from_str::<Line>(raw).map_err(|e| malformed(e.to_string()))? {
                Line::Header(h) if header.is_none() && line == 1 => header = Some(h),
                Line::Header(_) => return Err(malformed("unexpected header".into())),
                _ if header.is_none() => return Err(TranscriptError::MissingHeader),
                Line::Entry(e) => entries.push(e),
                Line::Footer(f) => footer = Some(f),
            }
        }
        let transcript = Transcript { header: header.ok_or(TranscriptError::MissingHeader)?, entries, footer };
        if let Some(f) = transcript.footer {
            let body = transcript.round_count();
            if f.rounds != body {
                return Err(TranscriptError::RoundCountMismatch { footer: f.rounds, body });
            }
        }
        Ok(transcript)
    }

    pub fn read(path: &Path) -> Result<Self, TranscriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| TranscriptError::Io(format!("reading {}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    /// Writes through a temporary file and a rename, so readers never see a torn file.
    pub fn write(&self, path: &Path) -> Result<(), TranscriptError> {
        write_atomic(path, self.to_jsonl().as_bytes()).map_err(|e| TranscriptError::Io(format!("writing {}: {e}", path.display())))
    }
}

/// Replaces `path` with `bytes` via a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
