use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use mind_core::scripting::ScriptPlan;
use mind_core::transcript::Transcript;
use mind_core::SessionStatus;

const SUBCOMMANDS: [&str; 6] = ["run", "simulate", "ablate", "eval", "serve", "replay"];

fn mind(args: &[&str], stdin: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mind"));
    cmd.args(args).env_remove("OPENAI_API_KEY").env_remove("MIND_LOG");
    cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = cmd.spawn().unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name).display().to_string()
}

struct Workspace {
    _dir: tempfile::TempDir,
    script: String,
    data: String,
}

impl Workspace {
    fn new(plan: ScriptPlan) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("script");
        plan.write_dir(&script).unwrap();
        let data = dir.path().join("data");
        Workspace { script: script.display().to_string(), data: data.display().to_string(), _dir: dir }
    }

    fn run(&self, args: &[&str], stdin: Option<&str>) -> Output {
        let mut all = vec!["--scripted", self.script.as_str(), "--data-dir", self.data.as_str()];
        all.extend_from_slice(args);
        mind(&all, stdin)
    }

    fn transcripts(&self) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(Path::new(&self.data).join("transcripts"))
            .map(|d| d.map(|e| e.unwrap().path()).collect())
            .unwrap_or_default();
        v.sort();
        v
    }
}

#[test]
fn help_output_matches_golden_file() {
    let mut text = stdout(&mind(&["--help"], None));
    for sub in SUBCOMMANDS {
        text.push_str(&format!("\n##### {sub}\n"));
        text.push_str(&stdout(&mind(&[sub, "--help"], None)));
    }
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/help.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(golden).unwrap());
}

#[test]
fn run_with_piped_comfort_is_deterministic_and_reprompts_on_empty_lines() {
    let ws = Workspace::new(ScriptPlan::ending_at(1));
    let input = "You did what you could.\n\n   \nTomorrow is a new day.\n";
    let args = ["run", "--theme", "work issues", "--concern", "I missed a deadline"];
    let out = ws.run(&args, Some(input));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).matches("Please type a few words").count(), 2);
    let files = ws.transcripts();
    assert_eq!(files.len(), 1);
    let first = std::fs::read(&files[0]).unwrap();
    let t = Transcript::read(&files[0]).unwrap();
    assert_eq!(t.footer.unwrap().status, SessionStatus::CompletedGoal);
    assert_eq!(t.human_comfort().unwrap(), ["You did what you could.", "Tomorrow is a new day."]);
    let again = ws.run(&args, Some(input));
    assert!(again.status.success());
    assert_eq!(std::fs::read(&files[0]).unwrap(), first);
}

#[test]
fn end_of_input_withdraws_the_player() {
    let ws = Workspace::new(ScriptPlan::default());
    let out = ws.run(&["run", "--theme", "WorkIssues", "--concern", "x"], Some("only one line\n"));
    assert!(out.status.success(), "{}", stderr(&out));
    let t = Transcript::read(&ws.transcripts()[0]).unwrap();
    assert_eq!(t.round_count(), 1);
    assert!(t.footer.unwrap().failure);
}

#[test]
fn missing_provider_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().display().to_string();
    let out = mind(&["--data-dir", &data, "run", "--theme", "WorkIssues", "--concern", "x"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("API key missing"), "{}", stderr(&out));
    let out = mind(&["--data-dir", &data, "simulate", "--samples-per-theme", "1"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_seventy_runs_reports_n_seventy() {
    let ws = Workspace::new(ScriptPlan::ending_at(2));
    let out = ws.run(&["simulate", "--themes", "all", "--samples-per-theme", "10", "--workers", "4"], None);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(ws.transcripts().len(), 70);
    let report = stdout(&out);
    let row = report.lines().find(|l| l.starts_with("mind ablation=None facilitation=off")).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols[cols.len() - 3..], ["70", "0/70", "0.00"]);
    let first: Vec<Vec<u8>> = ws.transcripts().iter().map(|p| std::fs::read(p).unwrap()).collect();
    let rerun = ws.run(&["simulate", "--samples-per-theme", "10", "--workers", "1"], None);
    assert!(rerun.status.success());
    let second: Vec<Vec<u8>> = ws.transcripts().iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn simulate_rejects_zero_samples() {
    let ws = Workspace::new(ScriptPlan::default());
    let out = ws.run(&["simulate", "--samples-per-theme", "0"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(ws.transcripts().is_empty());
}

#[test]
fn facilitation_both_reports_two_cells() {
    let ws = Workspace::new(ScriptPlan::ending_at(0));
    let out = ws.run(&["simulate", "--themes", "WorkIssues", "--samples-per-theme", "2", "--facilitation", "both"], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    let cells: Vec<Vec<&str>> =
        report.lines().filter(|l| l.starts_with("mind ")).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[0][..4], ["mind", "ablation=None", "facilitation=off", "2"]);
    assert_eq!(cells[1][..4], ["mind", "ablation=None", "facilitation=on", "2"]);
    assert_eq!(ws.transcripts().len(), 4);
}

#[test]
fn ablate_sweeps_every_ablation() {
    let ws = Workspace::new(ScriptPlan::ending_at(1));
    let out = ws.run(&["ablate", "--themes", "PhysicalStress", "--samples-per-theme", "1"], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    for a in ["None", "NoMemory", "NoStrategist", "NoGuide"] {
        assert!(report.contains(&format!("ablation={a} ")), "{report}");
    }
    let no_strategist = report.lines().find(|l| l.contains("ablation=NoStrategist")).unwrap();
    assert!(no_strategist.contains("1/1"));
}

#[test]
fn comfort_file_drives_the_simulation() {
    let ws = Workspace::new(ScriptPlan::ending_at(5));
    let lines = Path::new(&ws.data).with_file_name("comfort.txt");
    std::fs::write(&lines, "one\ntwo\n").unwrap();
    let source = format!("file:{}", lines.display());
    let out = ws.run(&["simulate", "--themes", "EconomicIssues", "--samples-per-theme", "1", "--comfort", &source], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let t = Transcript::read(&ws.transcripts()[0]).unwrap();
    assert_eq!(t.human_comfort().unwrap(), ["one", "two"]);
    assert_eq!(t.footer.unwrap().status, SessionStatus::MaxRoundsReached);
}

#[test]
fn baseline_paradigms_simulate() {
    let ws = Workspace::new(ScriptPlan::default());
    for paradigm in ["empathy", "chatbot"] {
        let out = ws.run(&["simulate", "--paradigm", paradigm, "--themes", "FamilyIssues", "--samples-per-theme", "1"], None);
        assert!(out.status.success(), "{paradigm}: {}", stderr(&out));
    }
    assert_eq!(ws.transcripts().len(), 2);
    let out = ws.run(&["simulate", "--paradigm", "chatbot", "--ablation", "NoGuide"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_reproduces_the_fixture_tables() {
    let out = mind(&["eval", "--panas", &fixture("panas_clients.csv"), "--rubric", &fixture("client_ratings.csv")], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let strong: Vec<&str> = text.lines().find(|l| l.starts_with("Strong ")).unwrap().split_whitespace().collect();
    assert_eq!(strong[1..], ["2", "1", "3", "1", "4", "3", "-1", "0"]);
    assert!(text.contains("note: the published per-system fluctuation figures"));
    let mind_row = text.lines().find(|l| l.starts_with("MIND ") && l.contains("5.00")).unwrap();
    assert!(mind_row.ends_with("5.00  4.50  4.50  5.00  5.00  4.50"), "{mind_row}");
}

#[test]
fn eval_errors_have_line_numbers_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = mind(&["eval", "--panas", &empty.display().to_string()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "client_id,system,item,pre,post\nc1,MIND,Strong,1,9\n").unwrap();
    let out = mind(&["eval", "--panas", &bad.display().to_string()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
    assert_eq!(mind(&["eval"], None).status.code(), Some(2));
}

#[test]
fn eval_reads_failure_rates_from_transcripts() {
    let ws = Workspace::new(ScriptPlan::default());
    let out = ws.run(&["simulate", "--themes", "WorkIssues,PhysicalStress", "--samples-per-theme", "3", "--max-rounds", "2"], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = Path::new(&ws.data).join("transcripts").display().to_string();
    let out = mind(&["eval", "--transcripts", &dir], None);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("6/6"), "{}", stdout(&out));
}

#[test]
fn replay_reproduces_recorded_sessions() {
    let ws = Workspace::new(ScriptPlan::ending_at(3));
    let out = ws.run(&["simulate", "--themes", "WorkIssues", "--samples-per-theme", "1"], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let ran = ws.run(&["run", "--theme", "WorkIssues", "--concern", "x", "--id", "live"], Some("a\nb\nc\nd\n"));
    assert!(ran.status.success());
    for path in ws.transcripts() {
        let out = ws.run(&["replay", &path.display().to_string(), "--check"], None);
        assert!(out.status.success(), "{}: {}", path.display(), stderr(&out));
        assert!(stdout(&out).contains("identical"));
    }
}

#[test]
fn replay_reproduces_withdrawn_sessions() {
    let ws = Workspace::new(ScriptPlan::default());
    let ran = ws.run(&["run", "--theme", "WorkIssues", "--concern", "x", "--id", "quit"], Some("a\nb\n"));
    assert!(ran.status.success(), "{}", stderr(&ran));
    let path = ws.transcripts()[0].clone();
    let out = ws.run(&["replay", &path.display().to_string(), "--check"], None);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("identical"));
}

#[test]
fn replay_check_fails_on_tampered_transcripts() {
    let ws = Workspace::new(ScriptPlan::ending_at(1));
    ws.run(&["run", "--theme", "WorkIssues", "--concern", "x"], Some("a\nb\n"));
    let path = ws.transcripts()[0].clone();
    let text = std::fs::read_to_string(&path).unwrap().replace("\"failure\":false", "\"failure\":true");
    std::fs::write(&path, text).unwrap();
    let out = ws.run(&["replay", &path.display().to_string(), "--check"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mind.toml");
    std::fs::write(&cfg, "[backend]\nmodel = 3\n").unwrap();
    let out = mind(&["--config", &cfg.display().to_string(), "eval", "--panas", &fixture("panas_clients.csv")], None);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, "[backend]\nmodel = \"m\"\n[service]\nbind = \"127.0.0.1:0\"\n").unwrap();
    let out = mind(&["--config", &cfg.display().to_string(), "eval", "--panas", &fixture("panas_clients.csv")], None);
    assert!(out.status.success(), "{}", stderr(&out));
}
