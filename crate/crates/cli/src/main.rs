mod config;
mod error;
mod eval_cmd;
mod replay;
mod run;
mod serve;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mind_core::{Ablation, PersonalityProfile, Theme};
use mind_core::baselines::Character;
use mind_core::transcript::Paradigm;
use tracing_subscriber::EnvFilter;

use crate::config::Settings;
use crate::error::CliResult;

/// Multi-agent inner-dialogue engine: interactive sessions, simulations, evaluation and serving.
#[derive(Debug, Parser)]
#[command(name = "mind", version)]
struct Cli {
    /// TOML configuration file (backend, service and path settings).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for transcripts, reports and service state [default: mind-data].
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Answer every agent call from the script files in DIR instead of a provider.
    #[arg(long, global = true, value_name = "DIR")]
    scripted: Option<PathBuf>,
    /// Load prompt templates from DIR instead of the built-in set.
    #[arg(long, global = true, value_name = "DIR")]
    templates: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Play an interactive session in the terminal, reading comfort from stdin.
    Run(RunArgs),
    /// Run a matrix of sessions with the simulated patient and report failure rates.
    Simulate(SimulateArgs),
    /// Same as simulate, sweeping all four ablation settings by default.
    Ablate(SimulateArgs),
    /// Print PANAS, rubric and failure-rate tables.
    Eval(EvalArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Re-run a recorded session from its transcript.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// Maximum number of rounds.
    #[arg(long, default_value_t = mind_core::session::DEFAULT_MAX_ROUNDS)]
    pub max_rounds: u32,
    /// Let the strategist end the session on safety grounds.
    #[arg(long)]
    pub facilitation: bool,
    /// Personality scores as O=..,C=..,E=..,A=..,N=.. in [0, 1].
    #[arg(long, value_parser = parse_personality)]
    pub personality: Option<PersonalityProfile>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Concern theme, by name or topic (e.g. "work issues").
    #[arg(long, value_parser = parse_theme)]
    pub theme: Theme,
    /// The worry the session is built around.
    #[arg(long)]
    pub concern: String,
    /// Ablation setting.
    #[arg(long, default_value = "None", value_parser = parse_ablation)]
    pub ablation: Ablation,
    /// Session id (also the transcript file name).
    #[arg(long)]
    pub id: Option<String>,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Facilitation {
    On,
    Off,
    Both,
}

impl Facilitation {
    pub fn values(self) -> Vec<bool> {
        match self {
            Facilitation::On => vec![true],
            Facilitation::Off => vec![false],
            Facilitation::Both => vec![false, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComfortSource {
    Simulated,
    File(PathBuf),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated themes, or "all".
    #[arg(long, default_value = "all", value_parser = parse_themes)]
    pub themes: ThemeList,
    /// Runs per theme.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub samples_per_theme: u32,
    /// Paradigm to simulate.
    #[arg(long, default_value = "mind", value_parser = parse_paradigm)]
    pub paradigm: Paradigm,
    /// Comma-separated ablation settings [default: None for simulate, all four for ablate].
    #[arg(long, value_delimiter = ',', value_parser = parse_ablation)]
    pub ablation: Vec<Ablation>,
    /// Facilitation setting; "both" reports one cell per value.
    #[arg(long, value_enum, default_value_t = Facilitation::Off)]
    pub facilitation: Facilitation,
    /// Comfort source: "simulated" or "file:<path>" with one line per round.
    #[arg(long, default_value = "simulated", value_parser = parse_comfort)]
    pub comfort: ComfortSource,
    /// Concurrent sessions [default: logical cores].
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: Option<u32>,
    /// Maximum rounds per session.
    #[arg(long, default_value_t = mind_core::session::DEFAULT_MAX_ROUNDS)]
    pub max_rounds: u32,
    /// Concern used for every run [default: one per theme].
    #[arg(long)]
    pub concern: Option<String>,
    /// Character comforted in the empathy paradigm.
    #[arg(long, default_value = "LittleGirl", value_parser = parse_character)]
    pub character: Character,
    /// Exchanges per chatbot conversation.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub chat_turns: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThemeList(pub Vec<Theme>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupBy {
    Paradigm,
    Theme,
    Model,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// PANAS CSV with header client_id,system,item,pre,post.
    #[arg(long, value_name = "FILE")]
    pub panas: Option<PathBuf>,
    /// Rubric CSV with header rater_id,target_kind,target,dimension,score.
    #[arg(long, value_name = "FILE")]
    pub rubric: Option<PathBuf>,
    /// Rubric grouping.
    #[arg(long, value_enum, default_value_t = GroupBy::Paradigm)]
    pub group_by: GroupBy,
    /// Directory of JSONL transcripts to compute failure rates from.
    #[arg(long, value_name = "DIR")]
    pub transcripts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address [default: 127.0.0.1:8080].
    #[arg(long)]
    pub bind: Option<String>,
    /// Global cap on concurrent backend requests [default: 8].
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Directory of static files served at /.
    #[arg(long, value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Transcript to replay.
    pub transcript: PathBuf,
    /// Where to write the replayed transcript [default: <data-dir>/replays/<id>.jsonl].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Exit 1 unless the replay is byte-identical to the input.
    #[arg(long)]
    pub check: bool,
}

fn parse_theme(s: &str) -> Result<Theme, String> {
    s.parse().map_err(|e: mind_core::domain::DomainError| e.to_string())
}

fn parse_themes(s: &str) -> Result<ThemeList, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ThemeList(Theme::ALL.to_vec()));
    }
    let mut themes = Vec::new();
    for part in s.split(',') {
        let theme = parse_theme(part)?;
        if !themes.contains(&theme) {
            themes.push(theme);
        }
    }
    Ok(ThemeList(themes))
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse()
}

fn parse_paradigm(s: &str) -> Result<Paradigm, String> {
    s.parse()
}

fn parse_character(s: &str) -> Result<Character, String> {
    s.parse()
}

fn parse_personality(s: &str) -> Result<PersonalityProfile, String> {
    s.parse()
}

fn parse_comfort(s: &str) -> Result<ComfortSource, String> {
    match s.split_once(':') {
        _ if s == "simulated" => Ok(ComfortSource::Simulated),
        Some(("file", path)) if !path.is_empty() => Ok(ComfortSource::File(PathBuf::from(path))),
        _ => Err(format!("expected `simulated` or `file:<path>`, got `{s}`")),
    }
}

async fn dispatch(cli: Cli) -> CliResult<()> {
    let settings = Settings::resolve(cli.config.as_deref(), cli.data_dir, cli.scripted, cli.templates)?;
    match cli.command {
        Command::Run(args) => run::run(&settings, args).await,
        Command::Simulate(mut args) => {
            if args.ablation.is_empty() {
                args.ablation = vec![Ablation::None];
            }
            simulate::simulate(&settings, args).await
        }
        Command::Ablate(mut args) => {
            if args.ablation.is_empty() {
                args.ablation = Ablation::ALL.to_vec();
            }
            simulate::simulate(&settings, args).await
        }
        Command::Eval(args) => eval_cmd::eval(args),
        Command::Serve(args) => serve::serve(&settings, args).await,
        Command::Replay(args) => replay::replay(&settings, args).await,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("MIND_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime");
    match runtime.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
