//! Canned, well-formed agent answers for offline runs and protocol tests.

use std::path::Path;

use crate::backend::{Matcher, ScriptRule, ScriptedBackend};
use crate::domain::{AgentRole, DistortionType, SafetyStop};

/// Shape of a scripted MIND session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptPlan {
    /// Rounds to script answers for.
    pub rounds: u32,
    /// Round whose strategist answers `Is_end: Yes`.
    pub end_at: Option<u32>,
    /// Round whose facilitated strategist names a termination situation.
    pub safety_stop_at: Option<(u32, SafetyStop)>,
    pub distortion: DistortionType,
}

impl Default for ScriptPlan {
    fn default() -> Self {
        ScriptPlan { rounds: 10, end_at: None, safety_stop_at: None, distortion: DistortionType::Labeling }
    }
}

impl ScriptPlan {
    pub fn ending_at(round: u32) -> Self {
        ScriptPlan { rounds: round + 1, end_at: Some(round), ..Default::default() }
    }

    /// Per-role answers, one per round.
    pub fn answers(&self) -> Vec<(AgentRole, Vec<String>)> {
        let rounds = 0..self.rounds.max(1);
        let trigger = rounds
            .clone()
            .map(|i| {
                if i == 0 {
                    "Scene: Round 0 scene: the protagonist sits alone after hearing the bad news.\nReasons: Opens the story on the stated worry.".to_string()
                } else {
                    format!("Scene: Round {i} scene: the story moves on to a new setback.\nChanges: Round {i} changes: the setting shifts.\nReasons: Follows the planned next scene.")
                }
            })
            .collect();
        let devil = rounds
            .clone()
            .map(|i| {
                let body = format!("Thoughts: Round {i} thoughts: I always ruin everything.\nReasons: The distortion shapes the reading of the scene.");
                if i == 0 {
                    format!("Type: {}\n{body}", self.distortion.label())
                } else {
                    body
                }
            })
            .collect();
        let guide = rounds
            .clone()
            .map(|i| {
                format!(
                    "SummaryScene: Round {i} summary scene.\nSummaryThoughts: Round {i} summary thoughts.\nHelp: Round {i} help: look for evidence against the thought.\nChanges: Round {i} changes: the thought softens.\nReasons: Restructuring advice."
                )
            })
            .collect();
        let patient = rounds
            .clone()
            .map(|i| format!("Comforting_words: Round {i} comfort: one setback does not define you.\nReasons: Counters the labeling."))
            .collect();
        let strategist = rounds
            .map(|i| {
                let is_end = if self.end_at == Some(i) { "Yes" } else { "No" };
                let termination = match self.safety_stop_at {
                    Some((at, stop)) if at == i => format!("\nTermination: {}", stop.label()),
                    _ => String::new(),
                };
                format!(
                    "Next_scene: Round {} scene plan.\nNext_thoughts: Round {} thoughts plan.\nIs_end: {is_end}\nReasons: Keeps the arc moving.{termination}",
                    i + 1,
                    i + 1
                )
            })
            .collect();
        vec![
            (AgentRole::Trigger, trigger),
            (AgentRole::Devil, devil),
            (AgentRole::Guide, guide),
            (AgentRole::Patient, patient),
            (AgentRole::Strategist, strategist),
        ]
    }

    /// Backend answering a MIND session; queues repeat their last answer when exhausted.
    pub fn backend(&self) -> ScriptedBackend {
        ScriptedBackend::new(
            self.answers().into_iter().map(|(role, texts)| ScriptRule::new(Matcher::Role(role), texts)).collect(),
            None,
        )
    }

    /// Writes the answers, plus baseline answers ending after three rounds, as a
    /// script directory readable by [`ScriptedBackend::from_dir`].
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (role, texts) in self.answers().into_iter().chain(baseline_answers(3)) {
            std::fs::write(dir.join(format!("{}.txt", role.as_str())), texts.join("\n---\n") + "\n")?;
        }
        Ok(())
    }
}

/// Answers for the two baseline paradigms.
pub fn baseline_answers(cease_at: usize) -> Vec<(AgentRole, Vec<String>)> {
    let behaviors = (0..cease_at.max(1))
        .map(|i| {
            if i + 1 == cease_at {
                "Behavior: She wipes her eyes, stops crying and looks up.\nReasons: The comfort finally lands.".to_string()
            } else {
                format!("Behavior: Round {i}: she is still crying but glances up.\nReasons: Slowly responding.")
            }
        })
        .collect();
    let report = (1..=cease_at.max(1))
        .map(|i| format!("Round {i}:\n\nThoughts: Round {i} I feel a little lighter.\n\nReasons: My own words reached me."))
        .collect::<Vec<_>>()
        .join("\n\n");
    vec![
        (AgentRole::BaselinePatient, behaviors),
        (AgentRole::BaselineChangeRole, vec![report]),
        (
            AgentRole::BaselineUser,
            vec!["Comforting_words: You are safe here, and this feeling will pass.\nReasons: Reassurance.".into()],
        ),
        (AgentRole::Chatbot, vec!["That sounds really hard. What evidence do you have that it will always go this way?".into()]),
    ]
}
