//! The five agent roles: template selection, binding, one backend call (plus at most
//! one re-ask when the answer cannot be parsed) and conversion to typed values.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;
use tracing::debug;

use crate::backend::{Backend, BackendError, ChatRequest};
use crate::domain::{AgentRole, Author, Comfort, DistortedThought, Guidance, Progression, Scenario};
use crate::memory::render_stream;
use crate::parse::{parse_distortion, parse_is_end, parse_sections, parse_termination, ParseError, Sections};
use crate::session::{Ablation, AgentOutput, Phase, SessionState};
use crate::template::{render_prompt, TemplateError, TemplateKey, TemplateSet};

/// Backend requests per agent call: the first ask and one corrective re-ask.
pub const MAX_REQUESTS_PER_CALL: usize = 2;

#[derive(Debug, Error)]
pub enum AgentErrorKind {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable answer after re-ask: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
#[error("{role} agent failed: {kind}")]
pub struct AgentError {
    pub role: AgentRole,
    #[source]
    pub kind: AgentErrorKind,
}

impl AgentError {
    pub fn new(role: AgentRole, kind: impl Into<AgentErrorKind>) -> Self {
        AgentError { role, kind: kind.into() }
    }

    fn config(role: AgentRole, msg: impl Into<String>) -> Self {
        AgentError { role, kind: AgentErrorKind::Config(msg.into()) }
    }
}

/// A typed agent result with the text it was parsed from.
#[derive(Debug, Clone)]
pub struct Generated<T> {
    pub value: T,
    pub output: AgentOutput,
    /// The prompt of the final request.
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentConfig {
    /// Ask the backend to merge the guide's per-round condensations into a summary
    /// instead of concatenating them. Off by default to keep runs reproducible.
    pub summarize_with_backend: bool,
}

/// Template for `role` at `round` under the given session configuration, or `None`
/// when the ablation removes the role. Pure function of its arguments.
pub fn select_template(role: AgentRole, round: u32, ablation: Ablation, facilitation: bool) -> Option<TemplateKey> {
    use TemplateKey::*;
    match role {
        AgentRole::Trigger if round == 0 => Some(Trigger0),
        AgentRole::Trigger => Some(match ablation {
            Ablation::NoMemory => TriggerI_NoMemory,
            Ablation::NoStrategist => TriggerI_NoStrategist,
            Ablation::None | Ablation::NoGuide => TriggerI,
        }),
        AgentRole::Devil if round == 0 => Some(Devil0),
        AgentRole::Devil => Some(DevilI),
        AgentRole::Guide => (ablation != Ablation::NoGuide).then_some(Guide),
        AgentRole::Strategist => match ablation {
            Ablation::NoStrategist => None,
            Ablation::NoMemory => Some(Strategist_NoMemory),
            _ if facilitation => Some(StrategistFacilitated),
            _ => Some(Strategist),
        },
        AgentRole::Patient => Some(if ablation == Ablation::NoGuide { SimulatedPatient_NoGuide } else { SimulatedPatient }),
        AgentRole::BaselinePatient => Some(BaselinePatient),
        AgentRole::BaselineChangeRole => Some(BaselineChangeRole),
        AgentRole::BaselineUser => Some(BaselineUser),
        AgentRole::Summarizer | AgentRole::Chatbot => None,
    }
}

/// Values available for binding; each template takes the subset it declares.
#[derive(Debug, Default)]
pub(crate) struct Context(BTreeMap<&'static str, String>);

impl Context {
    pub(crate) fn set(&mut self, name: &'static str, value: impl Into<String>) -> &mut Self {
        self.0.insert(name, value.into());
        self
    }

    fn bindings_for(&self, templates: &TemplateSet, key: TemplateKey) -> Result<BTreeMap<String, String>, TemplateError> {
        templates
            .get(key)
            .placeholders()
            .iter()
            .map(|name| {
                self.0
                    .get(name.as_str())
                    .map(|v| (name.clone(), v.clone()))
                    .ok_or_else(|| TemplateError::MissingBinding(name.clone()))
            })
            .collect()
    }
}

fn insert_before_format(prompt: &str, paragraph: &str) -> String {
    const ANCHOR: &str = "Please provide your answer";
    match prompt.rfind(ANCHOR) {
        Some(idx) => format!("{}{}\n\n{}", &prompt[..idx], paragraph, &prompt[idx..]),
        None => format!("{}\n\n{}", prompt.trim_end(), paragraph),
    }
}

fn reask_prompt(prompt: &str, err: &ParseError) -> String {
    format!(
        "{prompt}\n\nYour previous answer could not be used ({err}). Answer again using exactly the format above, starting each section on its own line with its label followed by a colon."
    )
}

const SUMMARIZER_PROMPT: &str = "You maintain the memory of an interactive healing story. Compare the existing memory with the newest round, merge redundant information, and keep the key events, emotional states and cognitive distortion patterns, including how the protagonist's thinking is shifting.";

pub struct AgentSuite {
    backend: Arc<dyn Backend>,
    templates: Arc<TemplateSet>,
    config: AgentConfig,
}

impl fmt::Debug for AgentSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentSuite")
            .field("model", &self.backend.model())
            .field("templates", &self.templates.id())
            .field("config", &self.config)
            .finish()
    }
}

impl AgentSuite {
    pub fn new(backend: Arc<dyn Backend>, templates: Arc<TemplateSet>) -> Self {
        AgentSuite { backend, templates, config: AgentConfig::default() }
    }

    pub fn with_config(mut self, config: AgentConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> AgentConfig {
        self.config
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Renders `key` from `ctx`, sends it, and parses the answer with `parse`,
    /// re-asking once on a parse failure.
    pub(crate) async fn ask<T>(
        &self,
        role: AgentRole,
        key: TemplateKey,
        ctx: &Context,
        extra_paragraph: Option<&str>,
        system: Option<&str>,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<Generated<T>, AgentError> {
        let mut prompt = self.render(role, key, ctx)?;
        if let Some(paragraph) = extra_paragraph {
            prompt = insert_before_format(&prompt, paragraph);
        }
        self.ask_prompt(role, prompt, system, parse).await
    }

    pub(crate) fn render(&self, role: AgentRole, key: TemplateKey, ctx: &Context) -> Result<String, AgentError> {
        let bindings = ctx.bindings_for(&self.templates, key).map_err(|e| AgentError::new(role, e))?;
        render_prompt(self.templates.get(key), &bindings).map_err(|e| AgentError::new(role, e))
    }

    pub(crate) async fn ask_prompt<T>(
        &self,
        role: AgentRole,
        prompt: String,
        system: Option<&str>,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<Generated<T>, AgentError> {
        let mut rejected = Vec::new();
        let mut current = prompt.clone();
        loop {
            let mut request = ChatRequest::new(role, current.clone());
            request.system = system.map(str::to_string);
            let response = self.backend.complete(request).await.map_err(|e| AgentError::new(role, e))?;
            match parse(&response.text) {
                Ok(value) => {
                    return Ok(Generated {
                        value,
                        output: AgentOutput { role, raw: response.text, rejected },
                        prompt: current,
                    })
                }
                Err(err) if rejected.len() + 1 < MAX_REQUESTS_PER_CALL => {
                    debug!(%role, %err, "re-asking after unparseable answer");
                    current = reask_prompt(&prompt, &err);
                    rejected.push(response.text);
                }
                Err(err) => return Err(AgentError::new(role, err)),
            }
        }
    }

    fn check_phase(role: AgentRole, session: &SessionState, phase: Phase) -> Result<(), AgentError> {
        if !session.is_active() || session.phase != phase {
            return Err(AgentError::config(
                role,
                format!("session is in {:?} ({:?}), expected {phase:?}", session.phase, session.status),
            ));
        }
        Ok(())
    }

    fn history(session: &SessionState, stream: impl Fn(&crate::memory::MemoryState) -> &Vec<String>, last: impl Fn(&crate::session::RoundRecord) -> String) -> String {
        if session.remembers() {
            render_stream(stream(&session.memory))
        } else {
            render_stream(&session.last_round().map(last).into_iter().collect::<Vec<_>>())
        }
    }

    /// Trigger: S_0 from (W, T); S_i from the strategist's next scene and the history.
    pub async fn trigger_generate(&self, session: &SessionState) -> Result<Generated<Scenario>, AgentError> {
        let role = AgentRole::Trigger;
        Self::check_phase(role, session, Phase::AwaitingScenario)?;
        let round = session.round;
        let key = select_template(role, round, session.ablation, session.facilitation_enabled).expect("trigger always runs");
        let mut ctx = Context::default();
        ctx.set("topic", session.theme.topic()).set("worries", session.concern.as_str());
        if round > 0 {
            let last = session.last_round().expect("round > 0 has a previous round");
            ctx.set("type", session.distortion_type().map(|d| d.label()).unwrap_or_default())
                .set("next_scene", last.progression.next_scene.clone())
                .set("memory_scene", render_stream(&session.memory.memory_scene))
                .set("memory_thought", render_stream(&session.memory.memory_thought));
        }
        let schema_key = key;
        self.ask(role, key, &ctx, None, None, |raw| {
            let s = parse_sections(schema_key, raw)?;
            Ok(Scenario {
                round,
                scene: s.req("Scene"),
                changes: (round > 0).then(|| s.req("Changes")),
                reasons: s.req("Reasons"),
            })
        })
        .await
    }

    /// Devil: first-person distorted thoughts. The distortion type is classified in
    /// round 0 and carried forward afterwards, whatever later answers claim.
    pub async fn devil_generate(&self, session: &SessionState) -> Result<Generated<DistortedThought>, AgentError> {
        let role = AgentRole::Devil;
        Self::check_phase(role, session, Phase::AwaitingThought)?;
        let round = session.round;
        let key = select_template(role, round, session.ablation, session.facilitation_enabled).expect("devil always runs");
        let scene = session
            .in_progress
            .as_ref()
            .and_then(|p| p.scenario.as_ref())
            .map(|s| s.scene.clone())
            .unwrap_or_default();
        let mut ctx = Context::default();
        ctx.set("worries", session.concern.as_str())
            .set("concerns", session.concern.as_str())
            .set("scene", scene);
        let carried = session.distortion_type();
        if round == 0 {
            ctx.set("comforting_words", "");
        } else {
            let last = session.last_round().expect("round > 0 has a previous round");
            let memory_thought = Self::history(session, |m| &m.memory_thought, |r| r.thought.thoughts.clone());
            ctx.set("type", carried.map(|d| d.label()).unwrap_or_default())
                .set("comforting_words", last.comfort.comforting_words.clone())
                .set("next_thoughts", last.progression.next_thoughts.clone())
                .set("memory_thought", memory_thought)
                .set("count", round.to_string());
        }
        let personality = session.personality.describe();
        self.ask(role, key, &ctx, Some(&personality), None, |raw| {
            let s = parse_sections(key, raw)?;
            let distortion_type = match (round, carried) {
                (0, _) | (_, None) => parse_distortion(&s.req("Type"))?,
                (_, Some(t)) => t,
            };
            Ok(DistortedThought { round, distortion_type, thoughts: s.req("Thoughts"), reasons: s.req("Reasons") })
        })
        .await
    }

    /// Guide: restructuring advice plus the per-round condensation used for the summary.
    pub async fn guide_generate(&self, session: &SessionState) -> Result<Generated<Guidance>, AgentError> {
        let role = AgentRole::Guide;
        Self::check_phase(role, session, Phase::AwaitingGuidance)?;
        let round = session.round;
        let key = select_template(role, round, session.ablation, session.facilitation_enabled)
            .ok_or_else(|| AgentError::config(role, "guide is ablated in this session"))?;
        let partial = session.in_progress.as_ref();
        let mut ctx = Context::default();
        ctx.set("scene", partial.and_then(|p| p.scenario.as_ref()).map(|s| s.scene.clone()).unwrap_or_default())
            .set("thoughts", partial.and_then(|p| p.thought.as_ref()).map(|t| t.thoughts.clone()).unwrap_or_default())
            .set("type", session.distortion_type().map(|d| d.label()).unwrap_or_default())
            .set("memory_guide", Self::history(session, |m| &m.memory_guide, |r| r.guidance.help.clone()));
        self.ask(role, key, &ctx, None, None, |raw| {
            let s = parse_sections(key, raw)?;
            Ok(Guidance {
                round,
                summary_scene: s.req("SummaryScene"),
                summary_thoughts: s.req("SummaryThoughts"),
                help: s.req("Help"),
                changes: s.req("Changes"),
                reasons: s.req("Reasons"),
            })
        })
        .await
    }

    /// Optional backend pass that rewrites the summary after the guide has answered.
    pub async fn summarize(&self, session: &SessionState) -> Result<Generated<String>, AgentError> {
        let role = AgentRole::Summarizer;
        let previous = session.rounds.iter().map(|r| r.guidance.summary_scene.clone()).collect::<Vec<_>>().join("\n");
        let latest = session.compose_summary();
        let latest = latest.lines().last().unwrap_or_default();
        let prompt = format!(
            "{SUMMARIZER_PROMPT}\n\nExisting memory:\n{previous}\n\nNewest round:\n{latest}\n\nPlease provide your answer in the following format:\n\nSummary: <The merged memory>"
        );
        self.ask_prompt(role, prompt, None, |raw| {
            let text = raw.trim();
            let body = text
                .split_once(':')
                .filter(|(head, _)| head.trim().eq_ignore_ascii_case("summary"))
                .map(|(_, rest)| rest.trim())
                .unwrap_or(text);
            if body.is_empty() {
                Err(ParseError::MissingSection("Summary".into()))
            } else {
                Ok(body.to_string())
            }
        })
        .await
    }

    /// Strategist: next scene, next thoughts and termination.
    ///
    /// `facilitation` requests the facilitation-protocol template; asking for it on a
    /// session created without the protocol is a configuration error.
    pub async fn strategist_plan(&self, session: &SessionState, facilitation: bool) -> Result<Generated<Progression>, AgentError> {
        let role = AgentRole::Strategist;
        Self::check_phase(role, session, Phase::AwaitingProgression)?;
        if facilitation && !session.facilitation_enabled {
            return Err(AgentError::config(role, "facilitation template requested for a session without the facilitation protocol"));
        }
        let round = session.round;
        let key = select_template(role, round, session.ablation, facilitation)
            .ok_or_else(|| AgentError::config(role, "strategist is ablated in this session"))?;
        let comfort = session
            .in_progress
            .as_ref()
            .and_then(|p| p.comfort.as_ref())
            .map(|c| c.comforting_words.clone())
            .unwrap_or_default();
        let mut ctx = Context::default();
        ctx.set("summary", session.memory.summary.clone())
            .set("comforting_words", comfort)
            .set("memory_scene", render_stream(&session.memory.memory_scene))
            .set("memory_thought", render_stream(&session.memory.memory_thought));
        let facilitated = key == TemplateKey::StrategistFacilitated;
        self.ask(role, key, &ctx, None, None, |raw| {
            let s: Sections = parse_sections(key, raw)?;
            let safety_stop = match s.get("Termination") {
                Some(t) if facilitated => parse_termination(t)?,
                _ => None,
            };
            Ok(Progression {
                round,
                next_scene: s.req("Next_scene"),
                next_thoughts: s.req("Next_thoughts"),
                is_end: parse_is_end(&s.req("Is_end"))?,
                reasons: s.req("Reasons"),
                safety_stop,
            })
        })
        .await
    }

    /// Simulated patient standing in for the human player.
    pub async fn simulated_patient_comfort(&self, session: &SessionState) -> Result<Generated<Comfort>, AgentError> {
        let role = AgentRole::Patient;
        Self::check_phase(role, session, Phase::AwaitingComfort)?;
        let round = session.round;
        let key = select_template(role, round, session.ablation, session.facilitation_enabled).expect("patient template exists");
        let partial = session.in_progress.as_ref();
        let mut ctx = Context::default();
        ctx.set("concerns", session.concern.as_str())
            .set("scene", partial.and_then(|p| p.scenario.as_ref()).map(|s| s.scene.clone()).unwrap_or_default())
            .set("thoughts", partial.and_then(|p| p.thought.as_ref()).map(|t| t.thoughts.clone()).unwrap_or_default());
        if session.ablation != Ablation::NoGuide {
            ctx.set("help_text", partial.and_then(|p| p.guidance.as_ref()).map(|g| g.help.clone()).unwrap_or_default());
        }
        self.ask(role, key, &ctx, None, None, |raw| {
            let s = parse_sections(key, raw)?;
            Ok(Comfort {
                round,
                comforting_words: s.req("Comforting_words"),
                reasons: Some(s.req("Reasons")),
                author: Author::Simulated,
            })
        })
        .await
    }
}
