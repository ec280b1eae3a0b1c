use std::io::{BufRead, Write};
use std::path::PathBuf;

use mind_core::session::Phase;
use mind_core::transcript::Transcript;
use mind_core::{
    create_session, Ablation, Comfort, Engine, PersonalityProfile, ProvidedComfort, SessionId, SessionOptions, SessionState,
    StepResult,
};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::RunArgs;

fn print_round(state: &SessionState, out: &mut impl Write) -> std::io::Result<()> {
    let Some(p) = &state.in_progress else { return Ok(()) };
    writeln!(out, "\n=== Round {} ===", p.round + 1)?;
    if let Some(s) = &p.scenario {
        writeln!(out, "Scene: {}", s.scene)?;
    }
    if let Some(t) = &p.thought {
        writeln!(out, "Inner voice ({}): {}", t.distortion_type.label(), t.thoughts)?;
    }
    if state.ablation != Ablation::NoGuide {
        if let Some(g) = &p.guidance {
            writeln!(out, "Guide: {}", g.help)?;
        }
    }
    Ok(())
}

/// Next non-empty line from `input`; `None` at end of input.
fn read_comfort(input: &mut impl BufRead, out: &mut impl Write) -> std::io::Result<Option<String>> {
    loop {
        write!(out, "Your comforting words> ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            return Ok(None);
        }
        let line = line.trim();
        if !line.is_empty() {
            return Ok(Some(line.to_string()));
        }
        writeln!(out, "Please type a few words of comfort (end of input quits).")?;
    }
}

fn save(settings: &Settings, state: &SessionState, model: &str) -> CliResult<PathBuf> {
    let path = settings.transcripts_dir().join(format!("{}.jsonl", state.id));
    Transcript::for_session(state, settings.templates.id(), model).write(&path).map_err(CliError::data)?;
    Ok(path)
}

pub async fn run(settings: &Settings, args: RunArgs) -> CliResult<()> {
    let backend = settings.backend()?;
    let model = backend.model().to_string();
    let id = match args.id {
        Some(id) => Some(SessionId::new(id)),
        None if settings.is_scripted() => Some(SessionId::new(format!("run-{}", args.theme.as_str()))),
        None => None,
    };
    let options = SessionOptions {
        max_rounds: args.session.max_rounds,
        facilitation_enabled: args.session.facilitation,
        ablation: args.ablation,
        id,
        created_at: settings.clock(),
    };
    let personality = args.session.personality.unwrap_or_else(PersonalityProfile::balanced);
    let mut state = create_session(args.theme, &args.concern, personality, options).map_err(CliError::config)?;
    let engine = Engine::new(settings.suite(backend));
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut out = std::io::stdout();

    while state.is_active() {
        let step = engine.advance_to_comfort(&mut state).await;
        let step = match step {
            Ok(s) => s,
            Err(e) => {
                save(settings, &state, &model)?;
                return Err(CliError::data(e));
            }
        };
        if step == StepResult::Finished {
            break;
        }
        if state.phase == Phase::AwaitingComfort {
            print_round(&state, &mut out).map_err(CliError::data)?;
            let comfort = read_comfort(&mut input, &mut out)
                .map_err(CliError::data)?
                .map(|words| ProvidedComfort { comfort: Comfort::human(state.round, words), output: None });
            if let Err(e) = engine.submit_comfort(&mut state, comfort).await {
                save(settings, &state, &model)?;
                return Err(CliError::data(e));
            }
        } else if state.phase == Phase::AwaitingProgression {
            engine.step_once(&mut state).await.map_err(CliError::data)?;
        }
        save(settings, &state, &model)?;
    }
    let path = save(settings, &state, &model)?;
    let outcome = state.outcome();
    println!("\nSession {} ended: {:?} after {} round(s).", state.id, outcome.status, outcome.rounds);
    println!("Transcript: {}", path.display());
    Ok(())
}
