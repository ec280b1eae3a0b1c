use std::collections::BTreeMap;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use mind_core::baselines::{
    chatbot_respond, chatbot_simulated_user, empathy_patient_step, empathy_role_reverse, empathy_simulated_comfort,
    ChatbotSession, EmpathyPhase, EmpathySession, EMPATHY_MAX_ROUNDS,
};
use mind_core::eval::{failure_rate, format_failure_table};
use mind_core::transcript::{Paradigm, Transcript, TranscriptHeader};
use mind_core::{
    create_session, Ablation, AgentSuite, ComfortProvider, Concern, Engine, PersonalityProfile, ScriptedComfort, SessionId,
    SessionOptions, SessionOutcome, SimulatedComfort, Theme,
};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::{ComfortSource, SimulateArgs};

/// Concern used for a theme when none is given on the command line.
pub fn default_concern(theme: Theme) -> &'static str {
    match theme {
        Theme::WorkIssues => "I made a mistake in front of my team and I keep replaying it.",
        Theme::InterpersonalIssues => "My closest friend stopped answering my messages.",
        Theme::EconomicIssues => "I am behind on rent and cannot see a way to catch up.",
        Theme::RandomNegativeEvents => "My bike was stolen and it feels like everything goes wrong for me.",
        Theme::FamilyIssues => "My parents argue constantly and I feel responsible.",
        Theme::PhysicalStress => "I sleep badly and my body aches all the time.",
        Theme::IdealRealityDiscrepancy => "I am thirty and my life looks nothing like I planned.",
    }
}

#[derive(Debug, Clone)]
struct RunSpec {
    id: SessionId,
    theme: Theme,
    concern: String,
    ablation: Ablation,
    facilitation: bool,
}

impl RunSpec {
    fn cell(&self, paradigm: Paradigm) -> String {
        format!("{paradigm} ablation={} facilitation={}", self.ablation.as_str(), if self.facilitation { "on" } else { "off" })
    }
}

struct RunResult {
    spec: RunSpec,
    outcome: Result<SessionOutcome, String>,
}

/// The shared pieces every run reads.
struct Plan<'a> {
    settings: &'a Settings,
    args: &'a SimulateArgs,
    comfort_lines: Option<String>,
}

fn run_id(paradigm: Paradigm, spec_ablation: Ablation, facilitation: bool, theme: Theme, sample: u32) -> SessionId {
    if paradigm != Paradigm::Mind {
        return SessionId::new(format!("{paradigm}-{}-{sample:03}", theme.as_str()));
    }
    let fac = if facilitation { "fac" } else { "nofac" };
    SessionId::new(format!("{paradigm}-{}-{fac}-{}-{sample:03}", spec_ablation.as_str(), theme.as_str()))
}

fn baseline_header(plan: &Plan<'_>, spec: &RunSpec, concern: &Concern, max_rounds: u32, model: &str) -> TranscriptHeader {
    TranscriptHeader {
        session_id: spec.id.clone(),
        paradigm: plan.args.paradigm,
        theme: Some(spec.theme),
        concern: concern.clone(),
        ablation: Ablation::None,
        facilitation: false,
        max_rounds,
        personality: None,
        character: None,
        created_at: plan.settings.clock().unwrap_or_else(chrono::Utc::now),
        template_set: plan.settings.templates.id().to_string(),
        backend_model: model.to_string(),
    }
}

fn write(plan: &Plan<'_>, transcript: &Transcript) -> Result<(), String> {
    let path = plan.settings.transcripts_dir().join(format!("{}.jsonl", transcript.header.session_id));
    transcript.write(&path).map_err(|e| e.to_string())
}

async fn run_mind(plan: &Plan<'_>, spec: &RunSpec, suite: Arc<AgentSuite>, model: &str) -> Result<SessionOutcome, String> {
    let options = SessionOptions {
        max_rounds: plan.args.max_rounds,
        facilitation_enabled: spec.facilitation,
        ablation: spec.ablation,
        id: Some(spec.id.clone()),
        created_at: plan.settings.clock(),
    };
    let mut state =
        create_session(spec.theme, &spec.concern, PersonalityProfile::balanced(), options).map_err(|e| e.to_string())?;
    let provider: Box<dyn ComfortProvider> = match &plan.comfort_lines {
        Some(text) => Box::new(ScriptedComfort::from_text(text)),
        None => Box::new(SimulatedComfort::new(suite.clone())),
    };
    let result = Engine::new(suite).advance_until_done(&mut state, provider.as_ref()).await;
    write(plan, &Transcript::for_session(&state, plan.settings.templates.id(), model))?;
    result.map_err(|e| e.to_string())
}

async fn run_empathy(plan: &Plan<'_>, spec: &RunSpec, suite: Arc<AgentSuite>, model: &str) -> Result<SessionOutcome, String> {
    let concern = Concern::new(spec.concern.as_str()).map_err(|e| e.to_string())?;
    let mut session = EmpathySession::new(concern.clone(), plan.args.character);
    let mut lines = plan.comfort_lines.as_deref().map(|t| t.lines().map(str::trim).filter(|l| !l.is_empty()));
    let result: Result<(), String> = async {
        while session.phase == EmpathyPhase::Comforting {
            let comfort = match lines.as_mut() {
                Some(it) => match it.next() {
                    Some(l) => l.to_string(),
                    None => return Err("comfort file ran out before the session finished".to_string()),
                },
                None => empathy_simulated_comfort(&session, &suite).await.map_err(|e| e.to_string())?,
            };
            empathy_patient_step(&mut session, &comfort, &suite).await.map_err(|e| e.to_string())?;
        }
        empathy_role_reverse(&mut session, &suite).await.map_err(|e| e.to_string())?;
        Ok(())
    }
    .await;
    let header = baseline_header(plan, spec, &concern, EMPATHY_MAX_ROUNDS as u32, model);
    let transcript = Transcript::for_empathy(header, &session);
    write(plan, &transcript)?;
    result?;
    transcript.outcome().ok_or_else(|| "session did not finish".to_string())
}

async fn run_chatbot(plan: &Plan<'_>, spec: &RunSpec, suite: Arc<AgentSuite>, model: &str) -> Result<SessionOutcome, String> {
    let concern = Concern::new(spec.concern.as_str()).map_err(|e| e.to_string())?;
    let mut session = ChatbotSession::new();
    let mut lines = plan.comfort_lines.as_deref().map(|t| t.lines().map(str::trim).filter(|l| !l.is_empty()));
    let turns = plan.args.chat_turns;
    let result: Result<(), String> = async {
        for _ in 0..turns {
            let user = match lines.as_mut() {
                Some(it) => match it.next() {
                    Some(l) => l.to_string(),
                    None => return Err("user file ran out before the conversation finished".to_string()),
                },
                None => chatbot_simulated_user(&session, &concern, &suite).await.map_err(|e| e.to_string())?,
            };
            chatbot_respond(&mut session, &user, &suite).await.map_err(|e| e.to_string())?;
        }
        Ok(())
    }
    .await;
    let header = baseline_header(plan, spec, &concern, turns, model);
    let transcript = Transcript::for_chatbot(header, &session, result.is_ok());
    write(plan, &transcript)?;
    result?;
    transcript.outcome().ok_or_else(|| "conversation did not finish".to_string())
}

async fn run_one(plan: &Plan<'_>, spec: RunSpec) -> RunResult {
    let outcome = async {
        let backend = plan.settings.backend().map_err(|e| e.to_string())?;
        let model = backend.model().to_string();
        let suite = plan.settings.suite(backend);
        match plan.args.paradigm {
            Paradigm::Mind => run_mind(plan, &spec, suite, &model).await,
            Paradigm::Empathy => run_empathy(plan, &spec, suite, &model).await,
            Paradigm::Chatbot => run_chatbot(plan, &spec, suite, &model).await,
        }
    }
    .await;
    RunResult { spec, outcome }
}

fn specs(args: &SimulateArgs) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for &ablation in &args.ablation {
        for facilitation in args.facilitation.values() {
            for &theme in &args.themes.0 {
                for sample in 0..args.samples_per_theme {
                    out.push(RunSpec {
                        id: run_id(args.paradigm, ablation, facilitation, theme, sample),
                        theme,
                        concern: args.concern.clone().unwrap_or_else(|| default_concern(theme).to_string()),
                        ablation,
                        facilitation,
                    });
                }
            }
        }
    }
    out
}

/// Report text: one failure-rate row per (ablation, facilitation) cell, then errored runs.
fn report(paradigm: Paradigm, results: &[RunResult]) -> String {
    let mut cells: BTreeMap<(usize, String), Vec<SessionOutcome>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in results {
        let cell = r.spec.cell(paradigm);
        let idx = order.iter().position(|c| *c == cell).unwrap_or_else(|| {
            order.push(cell.clone());
            order.len() - 1
        });
        let entry = cells.entry((idx, cell)).or_default();
        if let Ok(o) = &r.outcome {
            entry.push(o.clone());
        }
    }
    let rows: Vec<(String, mind_core::eval::Ratio)> =
        cells.into_iter().filter_map(|((_, cell), outcomes)| failure_rate(&outcomes).ok().map(|r| (cell, r))).collect();
    let mut text = String::new();
    if !rows.is_empty() {
        text.push_str(&format_failure_table(&rows));
    }
    let errored: Vec<&RunResult> = results.iter().filter(|r| r.outcome.is_err()).collect();
    text.push_str(&format!("runs: {}  completed: {}  errored: {}\n", results.len(), results.len() - errored.len(), errored.len()));
    for r in errored {
        if let Err(e) = &r.outcome {
            text.push_str(&format!("failed run {}: {e}\n", r.spec.id));
        }
    }
    text
}

pub async fn simulate(settings: &Settings, args: SimulateArgs) -> CliResult<()> {
    if args.paradigm != Paradigm::Mind && (args.ablation.iter().any(|a| *a != Ablation::None) || args.facilitation.values() != [false]) {
        return Err(CliError::config("ablation and facilitation settings apply only to the mind paradigm"));
    }
    if args.max_rounds == 0 {
        return Err(CliError::config("--max-rounds must be at least 1"));
    }
    // Surface missing credentials once, before any run starts.
    settings.backend()?;
    let comfort_lines = match &args.comfort {
        ComfortSource::Simulated => None,
        ComfortSource::File(path) => {
            Some(std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?)
        }
    };
    let workers = args
        .workers
        .map(|w| w as usize)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let plan = Plan { settings, args: &args, comfort_lines };
    let specs = specs(&args);
    let total = specs.len();
    let plan = &plan;
    let mut indexed: Vec<(usize, RunResult)> = stream::iter(specs.into_iter().enumerate())
        .map(|(i, spec)| async move { (i, run_one(plan, spec).await) })
        .buffer_unordered(workers)
        .collect()
        .await;
    indexed.sort_by_key(|(i, _)| *i);
    let results: Vec<RunResult> = indexed.into_iter().map(|(_, r)| r).collect();

    let text = report(args.paradigm, &results);
    print!("{text}");
    let report_path = settings.data_dir.join("reports").join(format!("simulate-{}.txt", args.paradigm));
    mind_core::transcript::write_atomic(&report_path, text.as_bytes()).map_err(|e| CliError::data(format!("{}: {e}", report_path.display())))?;
    let errored = results.iter().filter(|r| r.outcome.is_err()).count();
    if errored > 0 {
        return Err(CliError::data(format!("{errored} of {total} runs failed")));
    }
    Ok(())
}
