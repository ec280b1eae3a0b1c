//! Drives a session through its rounds: Trigger, Devil and Guide, then the comfort
//! input, then the Strategist.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use thiserror::Error;

use crate::agents::{AgentError, AgentSuite};
use crate::domain::{AgentRole, Comfort};
use crate::session::{AgentOutput, Phase, PhaseInput, SessionError, SessionOutcome, SessionState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("comfort provider failed: {0}")]
    Comfort(String),
}

impl EngineError {
    /// The role whose call failed, if an agent failed.
    pub fn role(&self) -> Option<AgentRole> {
        match self {
            EngineError::Agent(e) => Some(e.role),
            _ => None,
        }
    }
}

/// Comfort for the current round plus the backend text it came from, if any.
#[derive(Debug, Clone)]
pub struct ProvidedComfort {
    pub comfort: Comfort,
    pub output: Option<AgentOutput>,
}

/// Source of the player's comforting words. `Ok(None)` means the player withdrew.
#[async_trait]
pub trait ComfortProvider: Send + Sync {
    async fn comfort(&self, session: &SessionState) -> Result<Option<ProvidedComfort>, EngineError>;
}

/// Pre-written comfort lines, one per round; withdraws when they run out.
#[derive(Debug, Default)]
pub struct ScriptedComfort {
    lines: Mutex<VecDeque<String>>,
}

impl ScriptedComfort {
    pub fn new(lines: impl IntoIterator<Item = String>) -> Self {
        ScriptedComfort { lines: Mutex::new(lines.into_iter().collect()) }
    }

    /// One line per non-empty line of `text`.
    pub fn from_text(text: &str) -> Self {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string))
    }
}

#[async_trait]
impl ComfortProvider for ScriptedComfort {
    async fn comfort(&self, session: &SessionState) -> Result<Option<ProvidedComfort>, EngineError> {
        let next = self.lines.lock().expect("comfort lines poisoned").pop_front();
        Ok(next.map(|words| ProvidedComfort { comfort: Comfort::human(session.round, words), output: None }))
    }
}

/// The simulated patient agent plays the comforter.
#[derive(Debug)]
pub struct SimulatedComfort {
    suite: Arc<AgentSuite>,
}

impl SimulatedComfort {
    pub fn new(suite: Arc<AgentSuite>) -> Self {
        SimulatedComfort { suite }
    }
}

#[async_trait]
impl ComfortProvider for SimulatedComfort {
    async fn comfort(&self, session: &SessionState) -> Result<Option<ProvidedComfort>, EngineError> {
        let g = self.suite.simulated_patient_comfort(session).await?;
        Ok(Some(ProvidedComfort { comfort: g.value, output: Some(g.output) }))
    }
}

/// What a single [`Engine::step_once`] call did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepResult {
    /// An agent answered and the session advanced.
    Advanced(AgentRole),
    /// The session waits for comfort from the player.
    NeedsComfort,
    /// The session has ended.
    Finished,
}

#[derive(Debug, Clone)]
pub struct Engine {
    suite: Arc<AgentSuite>,
}

impl Engine {
    pub fn new(suite: Arc<AgentSuite>) -> Self {
        Engine { suite }
    }

    pub fn suite(&self) -> &Arc<AgentSuite> {
        &self.suite
    }

    /// Runs the one agent the current phase calls for.
    pub async fn step_once(&self, session: &mut SessionState) -> Result<StepResult, EngineError> {
        if !session.is_active() {
            return Ok(StepResult::Finished);
        }
        let suite = &self.suite;
        let (role, input, output) = match session.phase {
            Phase::AwaitingScenario => {
                let g = suite.trigger_generate(session).await?;
                (AgentRole::Trigger, PhaseInput::Scenario(g.value), g.output)
            }
            Phase::AwaitingThought => {
                let g = suite.devil_generate(session).await?;
                (AgentRole::Devil, PhaseInput::Thought(g.value), g.output)
            }
            Phase::AwaitingGuidance => {
                let g = suite.guide_generate(session).await?;
                (AgentRole::Guide, PhaseInput::Guidance(g.value), g.output)
            }
            Phase::AwaitingProgression => {
                let g = suite.strategist_plan(session, session.facilitation_enabled).await?;
                (AgentRole::Strategist, PhaseInput::Progression(g.value), g.output)
            }
            Phase::AwaitingComfort => return Ok(StepResult::NeedsComfort),
            Phase::Completed => return Ok(StepResult::Finished),
        };
        let summarize = role == AgentRole::Guide && suite.config().summarize_with_backend;
        session.step_with_output(input, Some(output))?;
        if summarize {
            let g = suite.summarize(session).await?;
            session.set_summary(g.value);
            if let Some(partial) = session.in_progress.as_mut() {
                partial.raw_outputs.insert(AgentRole::Summarizer, g.output.raw);
                if !g.output.rejected.is_empty() {
                    partial.rejected_outputs.insert(AgentRole::Summarizer, g.output.rejected);
                }
            }
        }
        Ok(StepResult::Advanced(role))
    }

    /// Runs agents until the session needs comfort or has ended.
    pub async fn advance_to_comfort(&self, session: &mut SessionState) -> Result<StepResult, EngineError> {
        loop {
            match self.step_once(session).await? {
                StepResult::Advanced(_) if session.phase != Phase::AwaitingProgression => continue,
                StepResult::Advanced(_) => return Ok(StepResult::NeedsComfort),
                other => return Ok(other),
            }
        }
    }

    /// Accepts the round's comfort and, unless the strategist is ablated, plans the
    /// next round. `None` withdraws the player and ends the session.
    pub async fn submit_comfort(
        &self,
        session: &mut SessionState,
        comfort: Option<ProvidedComfort>,
    ) -> Result<(), EngineError> {
        match comfort {
            None => session.withdraw()?,
            Some(provided) => {
                session.step_with_output(PhaseInput::Comfort(provided.comfort), provided.output)?;
                if session.is_active() && session.phase == Phase::AwaitingProgression {
                    self.step_once(session).await?;
                }
            }
        }
        Ok(())
    }

    /// Plays one full round with comfort from `provider`.
    pub async fn run_round(
        &self,
        session: &mut SessionState,
        provider: &dyn ComfortProvider,
    ) -> Result<(), EngineError> {
        if !session.is_active() {
            return Err(SessionError::SessionNotActive(session.status).into());
        }
        if self.advance_to_comfort(session).await? == StepResult::Finished {
            return Ok(());
        }
        if session.phase == Phase::AwaitingComfort {
            let comfort = provider.comfort(session).await?;
            self.submit_comfort(session, comfort).await?;
        } else if session.phase == Phase::AwaitingProgression {
            self.step_once(session).await?;
        }
        Ok(())
    }

    /// Plays rounds until the session reaches a terminal status.
    pub async fn advance_until_done(
        &self,
        session: &mut SessionState,
        provider: &dyn ComfortProvider,
    ) -> Result<SessionOutcome, EngineError> {
        while session.is_active() {
            self.run_round(session, provider).await?;
        }
        Ok(session.outcome())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::domain::{PersonalityProfile, Theme};
    use crate::session::{create_session, SessionOptions, SessionStatus};
    use crate::template::TemplateSet;

    fn backend(is_end_after: usize) -> ScriptedBackend {
        let mut strategist: Vec<String> = (0..is_end_after)
            .map(|i| format!("Next_scene: ns{i}\nNext_thoughts: nt{i}\nIs_end: No\nReasons: r"))
            .collect();
        strategist.push("Next_scene: end\nNext_thoughts: end\nIs_end: Yes\nReasons: r".into());
        ScriptedBackend::by_role([
            (AgentRole::Trigger, vec!["Scene: s\nChanges: c\nReasons: r".into()]),
            (AgentRole::Devil, vec!["Type: Labeling\nThoughts: t\nReasons: r".into()]),
            (
                AgentRole::Guide,
                vec!["SummaryScene: ss\nSummaryThoughts: st\nHelp: h\nChanges: c\nReasons: r".into()],
            ),
            (AgentRole::Strategist, strategist),
        ])
    }

    fn engine(backend: ScriptedBackend) -> Engine {
        Engine::new(Arc::new(AgentSuite::new(Arc::new(backend), Arc::new(TemplateSet::builtin()))))
    }

    fn session() -> SessionState {
        create_session(Theme::InterpersonalIssues, "my friends ignore me", PersonalityProfile::balanced(), SessionOptions::default()).unwrap()
    }

    #[tokio::test]
    async fn runs_until_goal() {
        let e = engine(backend(2));
        let mut s = session();
        let comfort = ScriptedComfort::new((0..5).map(|i| format!("c{i}")));
        let outcome = e.advance_until_done(&mut s, &comfort).await.unwrap();
        assert_eq!(outcome.status, SessionStatus::CompletedGoal);
        assert_eq!(outcome.rounds, 3);
        assert_eq!(s.rounds[1].comfort.comforting_words, "c1");
    }

    #[tokio::test]
    async fn withdrawal_ends_the_session() {
        let e = engine(backend(8));
        let mut s = session();
        let comfort = ScriptedComfort::new(["only one".to_string()]);
        let outcome = e.advance_until_done(&mut s, &comfort).await.unwrap();
        assert_eq!(outcome.status, SessionStatus::MaxRoundsReached);
        assert_eq!(outcome.rounds, 1);
        assert!(s.in_progress.is_none());
    }

    #[tokio::test]
    async fn advance_stops_at_comfort() {
        let e = engine(backend(3));
        let mut s = session();
        assert_eq!(e.advance_to_comfort(&mut s).await.unwrap(), StepResult::NeedsComfort);
        assert_eq!(s.phase, Phase::AwaitingComfort);
        assert_eq!(e.step_once(&mut s).await.unwrap(), StepResult::NeedsComfort);
    }
}
