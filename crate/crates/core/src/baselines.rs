//! The two comparison paradigms: a single-agent therapist chatbot and role-reversal
//! empathy training, where the player comforts a crying character and then hears the
//! comfort from the character's side.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, AgentSuite, Context};
use crate::domain::{normalize_label, AgentRole, Concern};
use crate::memory::render_stream;
use crate::parse::{parse_reversal_report, parse_sections, ParseError, ReversalPoint};
use crate::template::TemplateKey;

/// Comforting rounds before the role reversal is forced.
pub const EMPATHY_MAX_ROUNDS: usize = 10;

/// Behavior phrases that count as the character having stopped crying.
pub const DEFAULT_CESSATION_KEYWORDS: [&str; 4] = ["stops crying", "stopped crying", "no longer crying", "no longer cries"];

/// Behavior assumed before the first comfort, taken from the patient scenario.
pub const INITIAL_BEHAVIOR: &str = "Crouched in a corner, crying, with chaotic thoughts, low mood, and passive behavior.";

/// Persona for the chatbot baseline. Not given by the original study; this default is ours.
pub const DEFAULT_CHATBOT_PERSONA: &str = "You are a warm, professional virtual therapist trained in cognitive behavioral therapy. \
Listen carefully, reflect the user's feelings, gently identify any cognitive distortions in what they say \
(such as catastrophizing, labeling or should statements), offer comfort, and suggest one small, concrete way \
to look at the situation more realistically. Keep each reply under 150 words.";

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("comforting words must not be empty")]
    EmptyComfort,
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Character {
    #[default]
    LittleGirl,
    LittleBoy,
    Woman,
    Man,
    MirrorSelf,
}

impl Character {
    pub const ALL: [Character; 5] =
        [Character::LittleGirl, Character::LittleBoy, Character::Woman, Character::Man, Character::MirrorSelf];

    pub fn as_str(self) -> &'static str {
        match self {
            Character::LittleGirl => "LittleGirl",
            Character::LittleBoy => "LittleBoy",
            Character::Woman => "Woman",
            Character::Man => "Man",
            Character::MirrorSelf => "MirrorSelf",
        }
    }

    fn noun(self) -> &'static str {
        match self {
            Character::LittleGirl => "little girl",
            Character::LittleBoy => "little boy",
            Character::Woman => "woman",
            Character::Man => "man",
            Character::MirrorSelf => "mirror image of yourself",
        }
    }

    fn object_pronoun(self) -> &'static str {
        match self {
            Character::LittleGirl | Character::Woman => "her",
            Character::LittleBoy | Character::Man => "him",
            Character::MirrorSelf => "them",
        }
    }

    /// Rewrites a prompt written for the little-girl character.
    pub fn adapt(self, prompt: &str) -> String {
        if self == Character::LittleGirl {
            return prompt.to_string();
        }
        let article_fixed = if self.noun().starts_with(['a', 'e', 'i', 'o', 'u']) { "an " } else { "a " };
        prompt
            .replace("a little girl", &format!("{article_fixed}{}", self.noun()))
            .replace("little girl", self.noun())
            .replace(" her ", &format!(" {} ", self.object_pronoun()))
    }
}

impl fmt::Display for Character {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Character {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_label(s);
        Character::ALL
            .into_iter()
            .find(|c| normalize_label(c.as_str()) == key || normalize_label(c.noun()) == key)
            .ok_or_else(|| format!("unknown character `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmpathyPhase {
    Comforting,
    RoleReversed,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpathySession {
    pub concerns: Concern,
    pub character: Character,
    pub phase: EmpathyPhase,
    pub memory_behavior: Vec<String>,
    pub memory_comforting: Vec<String>,
    pub reversal_report: Option<Vec<ReversalPoint>>,
    /// Raw backend text per comforting round (behavior), in order.
    pub raw_behaviors: Vec<String>,
    pub raw_reversal: Option<String>,
    pub cessation_keywords: Vec<String>,
}

impl EmpathySession {
    pub fn new(concerns: Concern, character: Character) -> Self {
        EmpathySession {
            concerns,
            character,
            phase: EmpathyPhase::Comforting,
            memory_behavior: Vec::new(),
            memory_comforting: Vec::new(),
            reversal_report: None,
            raw_behaviors: Vec::new(),
            raw_reversal: None,
            cessation_keywords: DEFAULT_CESSATION_KEYWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn rounds(&self) -> usize {
        self.memory_comforting.len()
    }

    /// The character's latest behavior, or the initial crying state.
    pub fn current_behavior(&self) -> &str {
        self.memory_behavior.last().map(String::as_str).unwrap_or(INITIAL_BEHAVIOR)
    }

    pub fn indicates_cessation(&self, behavior: &str) -> bool {
        let lower = behavior.to_lowercase();
        self.cessation_keywords.iter().any(|k| lower.contains(&k.to_lowercase()))
    }
}

/// One comforting round: the character reacts to `comfort` with a behavior.
pub async fn empathy_patient_step(
    session: &mut EmpathySession,
    comfort: &str,
    suite: &AgentSuite,
) -> Result<String, BaselineError> {
    if session.phase != EmpathyPhase::Comforting {
        return Err(BaselineError::Precondition(format!("phase is {:?}, expected Comforting", session.phase)));
    }
    let comfort = comfort.trim();
    if comfort.is_empty() {
        return Err(BaselineError::EmptyComfort);
    }
    let role = AgentRole::BaselinePatient;
    let key = TemplateKey::BaselinePatient;
    let mut comforting = session.memory_comforting.clone();
    comforting.push(comfort.to_string());
    let mut ctx = Context::default();
    ctx.set("concerns", session.concerns.as_str())
        .set("memory_behavior", render_stream(&session.memory_behavior))
        .set("memory_comforting", render_stream(&comforting));
    let prompt = session.character.adapt(&suite.render(role, key, &ctx)?);
    let g = suite.ask_prompt(role, prompt, None, |raw| Ok(parse_sections(key, raw)?.req("Behavior"))).await?;
    session.memory_comforting = comforting;
    session.memory_behavior.push(g.value.clone());
    session.raw_behaviors.push(g.output.raw);
    if session.indicates_cessation(&g.value) || session.rounds() >= EMPATHY_MAX_ROUNDS {
        session.phase = EmpathyPhase::RoleReversed;
    }
    Ok(g.value)
}

/// The player takes the character's place and reports, round by round, how the
/// recorded comfort lands.
pub async fn empathy_role_reverse(
    session: &mut EmpathySession,
    suite: &AgentSuite,
) -> Result<Vec<ReversalPoint>, BaselineError> {
    if session.phase != EmpathyPhase::RoleReversed {
        return Err(BaselineError::Precondition(format!("phase is {:?}, expected RoleReversed", session.phase)));
    }
    let rounds = session.rounds();
    if rounds == 0 {
        return Err(BaselineError::Precondition("no comforting rounds to reverse".into()));
    }
    let role = AgentRole::BaselineChangeRole;
    let mut ctx = Context::default();
    ctx.set("concerns", session.concerns.as_str())
        .set("memory_comforting", render_stream(&session.memory_comforting))
        .set("memory_behavior", render_stream(&session.memory_behavior));
    let prompt = session.character.adapt(&suite.render(role, TemplateKey::BaselineChangeRole, &ctx)?);
    let g = suite.ask_prompt(role, prompt, None, |raw| parse_reversal_report(raw, rounds)).await?;
    session.reversal_report = Some(g.value.clone());
    session.raw_reversal = Some(g.output.raw);
    session.phase = EmpathyPhase::Completed;
    Ok(g.value)
}

/// Comfort written by the simulated player for the character's current behavior.
pub async fn empathy_simulated_comfort(session: &EmpathySession, suite: &AgentSuite) -> Result<String, BaselineError> {
    let role = AgentRole::BaselineUser;
    let key = TemplateKey::BaselineUser;
    let mut ctx = Context::default();
    ctx.set("concerns", session.concerns.as_str())
        .set("behavior", session.current_behavior())
        .set("memory_comforting", render_stream(&session.memory_comforting));
    let prompt = session.character.adapt(&suite.render(role, key, &ctx)?);
    let g = suite.ask_prompt(role, prompt, None, |raw| Ok(parse_sections(key, raw)?.req("Comforting_words"))).await?;
    Ok(g.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatbotSession {
    pub history: Vec<ChatTurn>,
}

impl ChatbotSession {
    pub fn new() -> Self {
        Self::default()
    }

    /// Completed user/bot exchanges.
    pub fn exchanges(&self) -> usize {
        self.history.len() / 2
    }

    fn render_history(&self) -> String {
        self.history
            .iter()
            .map(|t| match t.speaker {
                Speaker::User => format!("User: {}", t.text),
                Speaker::Bot => format!("Therapist: {}", t.text),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Sends the user's message with the running history and appends both turns.
pub async fn chatbot_respond(
    session: &mut ChatbotSession,
    user_text: &str,
    suite: &AgentSuite,
) -> Result<String, BaselineError> {
    if session.history.last().is_some_and(|t| t.speaker == Speaker::User) {
        return Err(BaselineError::Precondition("the bot has not answered the previous user turn".into()));
    }
    let user_text = user_text.trim();
    if user_text.is_empty() {
        return Err(BaselineError::Precondition("user message must not be empty".into()));
    }
    let history = session.render_history();
    let prompt = if history.is_empty() {
        format!("User: {user_text}\nTherapist:")
    } else {
        format!("Conversation so far:\n{history}\n\nUser: {user_text}\nTherapist:")
    };
    let g = suite
        .ask_prompt(AgentRole::Chatbot, prompt, Some(DEFAULT_CHATBOT_PERSONA), |raw| {
            let t = raw.trim();
            if t.is_empty() {
                Err(ParseError::Empty)
            } else {
                Ok(raw.to_string())
            }
        })
        .await?;
    session.history.push(ChatTurn { speaker: Speaker::User, text: user_text.to_string() });
    session.history.push(ChatTurn { speaker: Speaker::Bot, text: g.value.clone() });
    Ok(g.value)
}

/// Next message of a simulated client talking to the chatbot about `concern`.
pub async fn chatbot_simulated_user(
    session: &ChatbotSession,
    concern: &Concern,
    suite: &AgentSuite,
) -> Result<String, BaselineError> {
    let history = session.render_history();
    let prompt = format!(
        "You are a person experiencing cognitive distortions, and your concern is: {}.\n\nYou are talking with a virtual therapist. The conversation so far:\n{}\n\nWrite your next message to the therapist in the first person, in one short paragraph, without repeating earlier messages.",
        concern.as_str(),
        if history.is_empty() { "(none yet)".to_string() } else { history }
    );
    let g = suite
        .ask_prompt(AgentRole::BaselineUser, prompt, None, |raw| {
            let t = raw.trim();
            if t.is_empty() {
                Err(ParseError::Empty)
            } else {
                Ok(t.to_string())
            }
        })
        .await?;
    Ok(g.value)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::template::TemplateSet;

    fn suite(backend: Arc<ScriptedBackend>) -> AgentSuite {
        AgentSuite::new(backend, Arc::new(TemplateSet::builtin()))
    }

    fn empathy(character: Character) -> EmpathySession {
        EmpathySession::new(Concern::new("I always fail exams").unwrap(), character)
    }

    #[test]
    fn character_adaptation() {
        let text = "there is a little girl with the same concerns. help her gradually improve";
        assert_eq!(Character::LittleGirl.adapt(text), text);
        assert_eq!(
            Character::LittleBoy.adapt(text),
            "there is a little boy with the same concerns. help him gradually improve"
        );
        assert!(Character::Woman.adapt(text).contains("a woman with"));
        assert!(Character::MirrorSelf.adapt(text).contains("a mirror image of yourself"));
        assert_eq!("little boy".parse::<Character>().unwrap(), Character::LittleBoy);
    }

    #[tokio::test]
    async fn patient_step_appends_both_streams() {
        let backend = Arc::new(ScriptedBackend::by_role([(AgentRole::BaselinePatient, vec!["Behavior: sniffles\nReasons: r".into()])]));
        let mut s = empathy(Character::LittleGirl);
        let b = empathy_patient_step(&mut s, "You are not alone", &suite(backend.clone())).await.unwrap();
        assert_eq!(b, "sniffles");
        assert_eq!(s.memory_behavior.len(), 1);
        assert_eq!(s.memory_comforting, vec!["You are not alone".to_string()]);
        assert!(backend.call_log()[0].user.contains("Round 1: You are not alone"));
    }

    #[tokio::test]
    async fn empty_comfort_rejected_before_backend() {
        let backend = Arc::new(ScriptedBackend::new(vec![], Some("Behavior: x\nReasons: y".into())));
        let mut s = empathy(Character::Man);
        assert!(matches!(empathy_patient_step(&mut s, "  ", &suite(backend.clone())).await, Err(BaselineError::EmptyComfort)));
        assert_eq!(backend.call_count(), 0);
    }

    #[tokio::test]
    async fn cap_and_cessation_move_to_reversal() {
        let backend = Arc::new(ScriptedBackend::new(vec![], Some("Behavior: still crying\nReasons: r".into())));
        let su = suite(backend);
        let mut s = empathy(Character::LittleGirl);
        for i in 0..EMPATHY_MAX_ROUNDS {
            assert_eq!(s.phase, EmpathyPhase::Comforting, "round {i}");
            empathy_patient_step(&mut s, "there there", &su).await.unwrap();
            assert_eq!(s.memory_behavior.len(), s.memory_comforting.len());
        }
        assert_eq!(s.phase, EmpathyPhase::RoleReversed);

        let backend = Arc::new(ScriptedBackend::new(vec![], Some("Behavior: She stops crying and smiles\nReasons: r".into())));
        let mut s = empathy(Character::LittleGirl);
        empathy_patient_step(&mut s, "there there", &suite(backend)).await.unwrap();
        assert_eq!(s.phase, EmpathyPhase::RoleReversed);
    }

    #[tokio::test]
    async fn role_reversal_checks_point_count() {
        let three = "Round 1:\nThoughts: a\nReasons: b\nRound 2:\nThoughts: c\nReasons: d\nRound 3:\nThoughts: e\nReasons: f";
        let two = "Round 1:\nThoughts: a\nReasons: b\nRound 2:\nThoughts: c\nReasons: d";
        for (report, ok) in [(three, true), (two, false)] {
            let backend = Arc::new(ScriptedBackend::by_role([
                (AgentRole::BaselinePatient, vec!["Behavior: calmer\nReasons: r".into()]),
                (AgentRole::BaselineChangeRole, vec![report.to_string()]),
            ]));
            let su = suite(backend);
            let mut s = empathy(Character::LittleGirl);
            for _ in 0..3 {
                empathy_patient_step(&mut s, "it is fine", &su).await.unwrap();
            }
            s.phase = EmpathyPhase::RoleReversed;
            let got = empathy_role_reverse(&mut s, &su).await;
            if ok {
                assert_eq!(got.unwrap().len(), 3);
                assert_eq!(s.phase, EmpathyPhase::Completed);
            } else {
                let err = got.unwrap_err();
                assert!(matches!(
                    err,
                    BaselineError::Agent(AgentError { kind: crate::agents::AgentErrorKind::Parse(ParseError::RoundCountMismatch { expected: 3, got: 2 }), .. })
                ));
            }
        }
    }

    #[tokio::test]
    async fn role_reversal_needs_rounds() {
        let backend = Arc::new(ScriptedBackend::new(vec![], Some("x".into())));
        let mut s = empathy(Character::LittleGirl);
        s.phase = EmpathyPhase::RoleReversed;
        assert!(matches!(empathy_role_reverse(&mut s, &suite(backend)).await, Err(BaselineError::Precondition(_))));
    }

    #[tokio::test]
    async fn chatbot_alternates_and_appends_verbatim() {
        let backend = Arc::new(ScriptedBackend::by_role([(AgentRole::Chatbot, vec!["I hear you.".into()])]));
        let su = suite(backend.clone());
        let mut s = ChatbotSession::new();
        let reply = chatbot_respond(&mut s, "I failed again", &su).await.unwrap();
        assert_eq!(reply, "I hear you.");
        assert_eq!(s.history.len(), 2);
        assert_eq!(backend.call_log()[0].system.as_deref(), Some(DEFAULT_CHATBOT_PERSONA));

        s.history.push(ChatTurn { speaker: Speaker::User, text: "dangling".into() });
        assert!(matches!(chatbot_respond(&mut s, "again", &su).await, Err(BaselineError::Precondition(_))));
    }
}
