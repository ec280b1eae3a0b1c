//! Multi-agent inner-dialogue engine: session state machine, agent roles, prompt
//! templates, LLM backends, baseline paradigms and evaluation tooling.

pub mod agents;
pub mod backend;
pub mod baselines;
pub mod domain;
pub mod engine;
pub mod eval;
pub mod memory;
pub mod parse;
pub mod scripting;
pub mod session;
pub mod template;
pub mod transcript;

pub use agents::{select_template, AgentConfig, AgentError, AgentErrorKind, AgentSuite, Generated};
pub use backend::{Backend, BackendConfig, BackendError, ChatRequest, ChatResponse, OpenAiBackend, ScriptedBackend};
pub use domain::{
    AgentRole, Author, Comfort, Concern, DistortedThought, DistortionType, Guidance, PersonalityProfile, Progression,
    SafetyStop, Scenario, Theme,
};
pub use engine::{ComfortProvider, Engine, EngineError, ProvidedComfort, ScriptedComfort, SimulatedComfort, StepResult};
pub use memory::MemoryState;
pub use session::{
    classify_failure, create_session, Ablation, Phase, PhaseInput, SessionError, SessionId, SessionOptions,
    SessionOutcome, SessionState, SessionStatus,
};
pub use template::{TemplateKey, TemplateSet};
pub use transcript::{Paradigm, Transcript, TranscriptEntry, TranscriptFooter, TranscriptHeader};
