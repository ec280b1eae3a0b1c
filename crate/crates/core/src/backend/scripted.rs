use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;

use super::{Backend, BackendError, ChatRequest, ChatResponse};
use crate::domain::AgentRole;
use crate::session::{RoundRecord, SessionState};

/// Decides whether a rule answers a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    Any,
    Role(AgentRole),
    /// Substring of the user message.
    Contains(String),
}

impl Matcher {
    fn matches(&self, request: &ChatRequest) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Role(role) => request.role == Some(*role),
            Matcher::Contains(needle) => request.user.contains(needle.as_str()),
        }
    }
}

/// Canned answers for matching requests, handed out in order.
#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub matcher: Matcher,
    pub responses: Vec<String>,
    /// When set, running past the last response is an error instead of repeating it.
    pub strict: bool,
}

impl ScriptRule {
    pub fn new(matcher: Matcher, responses: Vec<String>) -> Self {
        ScriptRule { matcher, responses, strict: false }
    }
}

#[derive(Debug)]
struct ScriptState {
    cursors: Vec<usize>,
    call_log: Vec<ChatRequest>,
}

/// Deterministic backend for tests, offline simulations and replays.
///
/// The first rule whose matcher accepts a request answers it with its next response;
/// a non-strict rule repeats its last response once exhausted. Requests no rule
/// matches get the default response, or [`BackendError::ScriptExhausted`] without one.
#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    default: Option<String>,
    model: String,
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>, default: Option<String>) -> Self {
        let cursors = vec![0; rules.len()];
        ScriptedBackend {
            rules,
            default,
            model: "scripted".into(),
            state: Mutex::new(ScriptState { cursors, call_log: Vec::new() }),
        }
    }

    /// One rule per role.
    pub fn by_role(responses: impl IntoIterator<Item = (AgentRole, Vec<String>)>) -> Self {
        let rules = responses
            .into_iter()
            .map(|(role, texts)| ScriptRule::new(Matcher::Role(role), texts))
            .collect();
        Self::new(rules, None)
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    /// Loads `<role>.txt` files from `dir` (role names as in [`AgentRole::as_str`]);
    /// answers inside a file are separated by lines consisting of `---`. An optional
    /// `default.txt` answers anything else.
    pub fn from_dir(dir: &Path) -> Result<Self, BackendError> {
        if !dir.is_dir() {
            return Err(BackendError::InvalidConfig(format!("script directory {} does not exist", dir.display())));
        }
        let read = |path: &Path| {
            std::fs::read_to_string(path)
                .map_err(|e| BackendError::InvalidConfig(format!("reading {}: {e}", path.display())))
        };
        let mut rules = Vec::new();
        for role in AgentRole::ALL {
            let path = dir.join(format!("{}.txt", role.as_str()));
            if path.exists() {
                let responses = split_script(&read(&path)?);
                if responses.is_empty() {
                    return Err(BackendError::InvalidConfig(format!("{} holds no answers", path.display())));
                }
                rules.push(ScriptRule::new(Matcher::Role(role), responses));
            }
        }
        let default_path = dir.join("default.txt");
        let default = if default_path.exists() { Some(read(&default_path)?.trim().to_string()) } else { None };
        if rules.is_empty() && default.is_none() {
            return Err(BackendError::InvalidConfig(format!("no script files found in {}", dir.display())));
        }
        Ok(Self::new(rules, default))
    }

    pub fn call_log(&self) -> Vec<ChatRequest> {
        self.state.lock().expect("script state poisoned").call_log.clone()
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().expect("script state poisoned").call_log.len()
    }

    fn answer(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut state = self.state.lock().expect("script state poisoned");
        state.call_log.push(request.clone());
        for (idx, rule) in self.rules.iter().enumerate() {
            if !rule.matcher.matches(request) {
                continue;
            }
            let cursor = state.cursors[idx];
            let text = match rule.responses.get(cursor) {
                Some(t) => t.clone(),
                None if rule.strict || rule.responses.is_empty() => {
                    return Err(BackendError::ScriptExhausted(describe(request)));
                }
                None => rule.responses.last().cloned().unwrap_or_default(),
            };
            state.cursors[idx] = cursor + 1;
            return Ok(text);
        }
        self.default
            .clone()
            .ok_or_else(|| BackendError::ScriptExhausted(describe(request)))
    }
}

fn describe(request: &ChatRequest) -> String {
    match request.role {
        Some(role) => format!("role {role}"),
        None => "an untagged request".to_string(),
    }
}

fn split_script(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        if line.trim() == "---" {
            out.push(current.join("\n"));
            current.clear();
        } else {
            current.push(line);
        }
    }
    out.push(current.join("\n"));
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

#[async_trait]
impl Backend for ScriptedBackend {
    async fn complete(&self, request: ChatRequest) -> Result<ChatResponse, BackendError> {
        let text = self.answer(&request)?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyResponse);
        }
        Ok(ChatResponse { text, usage: None, latency: Duration::ZERO })
    }

    fn model(&self) -> &str {
        &self.model
    }
}

/// Builds a backend that answers exactly the calls a recorded session made, per role
/// and in round order, including answers that were rejected and re-asked.
pub fn record_replay(session: &SessionState) -> Result<ScriptedBackend, BackendError> {
    record_replay_rounds(&session.rounds)
}

/// [`record_replay`] over the round entries of a transcript.
pub fn record_replay_rounds(rounds: &[RoundRecord]) -> Result<ScriptedBackend, BackendError> {
    if rounds.is_empty() {
        return Err(BackendError::IncompleteTranscript("no completed rounds".into()));
    }
    let mut per_role: BTreeMap<AgentRole, Vec<String>> = BTreeMap::new();
    for record in rounds {
        if record.raw_outputs.is_empty() {
            return Err(BackendError::IncompleteTranscript(format!("round {} has no raw outputs", record.round)));
        }
        for (role, raw) in &record.raw_outputs {
            let queue = per_role.entry(*role).or_default();
            if let Some(rejected) = record.rejected_outputs.get(role) {
                queue.extend(rejected.iter().cloned());
            }
            queue.push(raw.clone());
        }
    }
    let rules = per_role
        .into_iter()
        .map(|(role, responses)| ScriptRule { matcher: Matcher::Role(role), responses, strict: true })
        .collect();
    Ok(ScriptedBackend::new(rules, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(role: AgentRole, text: &str) -> ChatRequest {
        ChatRequest::new(role, text)
    }

    #[tokio::test]
    async fn first_matching_rule_answers() {
        let backend = ScriptedBackend::new(
            vec![
                ScriptRule::new(Matcher::Contains("planner".into()), vec!["rule one".into()]),
                ScriptRule::new(Matcher::Any, vec!["rule two".into()]),
            ],
            None,
        );
        let r = backend.complete(req(AgentRole::Strategist, "story planner")).await.unwrap();
        assert_eq!(r.text, "rule one");
        assert_eq!(backend.call_count(), 1);
        let r = backend.complete(req(AgentRole::Guide, "counselor")).await.unwrap();
        assert_eq!(r.text, "rule two");
    }

    #[tokio::test]
    async fn responses_advance_then_repeat() {
        let backend = ScriptedBackend::by_role([(AgentRole::Trigger, vec!["a".into(), "b".into()])]);
        let mut got = Vec::new();
        for _ in 0..4 {
            got.push(backend.complete(req(AgentRole::Trigger, "x")).await.unwrap().text);
        }
        assert_eq!(got, ["a", "b", "b", "b"]);
    }

    #[tokio::test]
    async fn unmatched_without_default_is_exhausted() {
        let backend = ScriptedBackend::by_role([(AgentRole::Trigger, vec!["a".into()])]);
        let err = backend.complete(req(AgentRole::Devil, "x")).await.unwrap_err();
        assert!(matches!(err, BackendError::ScriptExhausted(_)));
        let backend = ScriptedBackend::new(vec![], Some("fallback".into()));
        assert_eq!(backend.complete(req(AgentRole::Devil, "x")).await.unwrap().text, "fallback");
    }

    #[tokio::test]
    async fn identical_sequences_are_deterministic() {
        let make = || ScriptedBackend::by_role([(AgentRole::Guide, vec!["1".into(), "2".into(), "3".into()])]);
        let (a, b) = (make(), make());
        for _ in 0..5 {
            let x = a.complete(req(AgentRole::Guide, "q")).await.unwrap().text;
            let y = b.complete(req(AgentRole::Guide, "q")).await.unwrap().text;
            assert_eq!(x, y);
        }
    }

    #[test]
    fn script_files_split_on_separator() {
        assert_eq!(split_script("a\nb\n---\nc\n---\n"), vec!["a\nb".to_string(), "c".to_string()]);
        assert!(split_script("  \n---\n").is_empty());
    }

    #[tokio::test]
    async fn loads_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("trigger.txt"), "Scene: s\nReasons: r\n---\nScene: t\nReasons: r").unwrap();
        std::fs::write(dir.path().join("default.txt"), "fallback").unwrap();
        let backend = ScriptedBackend::from_dir(dir.path()).unwrap();
        assert_eq!(backend.complete(req(AgentRole::Trigger, "")).await.unwrap().text, "Scene: s\nReasons: r");
        assert_eq!(backend.complete(req(AgentRole::Chatbot, "")).await.unwrap().text, "fallback");
        assert!(ScriptedBackend::from_dir(&dir.path().join("missing")).is_err());
    }
}
