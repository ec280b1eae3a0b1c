use std::sync::Arc;

use mind_core::transcript::{Paradigm, Transcript};
use mind_core::{
    create_session, ComfortProvider, Engine, PersonalityProfile, ScriptedComfort, SessionStatus, SimulatedComfort,
};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::ReplayArgs;

pub async fn replay(settings: &Settings, args: ReplayArgs) -> CliResult<()> {
    let original = std::fs::read_to_string(&args.transcript)
        .map_err(|e| CliError::data(format!("{}: {e}", args.transcript.display())))?;
    let recorded = Transcript::from_jsonl(&original).map_err(|e| CliError::data(format!("{}: {e}", args.transcript.display())))?;
    let header = &recorded.header;
    if header.paradigm != Paradigm::Mind {
        return Err(CliError::data(format!("only {} transcripts can be replayed, this one is {}", Paradigm::Mind, header.paradigm)));
    }
    if header.template_set != settings.templates.id() {
        return Err(CliError::config(format!(
            "transcript was recorded with template set `{}` but `{}` is loaded",
            header.template_set,
            settings.templates.id()
        )));
    }
    let theme = header.theme.ok_or_else(|| CliError::data("transcript header has no theme"))?;
    let backend = Arc::new(recorded.replay_backend()?);
    let suite = settings.suite(backend);
    let provider: Box<dyn ComfortProvider> = match recorded.human_comfort() {
        Some(lines) => Box::new(ScriptedComfort::new(lines)),
        None => Box::new(SimulatedComfort::new(suite.clone())),
    };
    let engine = Engine::new(suite);
    let mut state = create_session(
        theme,
        header.concern.as_str(),
        header.personality.unwrap_or_else(PersonalityProfile::balanced),
        header.session_options(),
    )
    .map_err(CliError::data)?;
    let rounds = recorded.mind_rounds().len();
    while state.is_active() && state.rounds.len() < rounds {
        engine.run_round(&mut state, provider.as_ref()).await.map_err(CliError::data)?;
    }
    // A recording that stopped early with MaxRoundsReached was withdrawn by the player.
    if let Some(outcome) = recorded.outcome() {
        if state.is_active() && outcome.status == SessionStatus::MaxRoundsReached && outcome.rounds < header.max_rounds {
            state.withdraw().map_err(CliError::data)?;
        }
    }
    let replayed = Transcript::for_session(&state, settings.templates.id(), &header.backend_model);
    let out = args
        .out
        .unwrap_or_else(|| settings.data_dir.join("replays").join(format!("{}.jsonl", header.session_id)));
    replayed.write(&out).map_err(CliError::data)?;
    let identical = replayed.to_jsonl() == original;
    println!("replayed {} round(s) to {}", state.rounds.len(), out.display());
    println!("{}", if identical { "identical to the recording" } else { "differs from the recording" });
    if args.check && !identical {
        return Err(CliError::data("replay differs from the recording"));
    }
    Ok(())
}
