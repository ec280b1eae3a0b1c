//! Value types shared by the session engine, the agents and the evaluation code.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("unknown theme `{0}`")]
    UnknownTheme(String),
    #[error("concern must not be empty")]
    EmptyConcern,
    #[error("unknown cognitive distortion type `{0}`")]
    UnknownDistortionType(String),
    #[error("personality trait `{trait_name}` = {value} is outside [0, 1]")]
    TraitOutOfRange { trait_name: &'static str, value: f64 },
    #[error("unknown safety stop `{0}`")]
    UnknownSafetyStop(String),
}

/// Lowercases and drops everything that is not alphanumeric, so that
/// `"Fortune-telling"`, `"fortune telling"` and `"FortuneTelling"` compare equal.
pub(crate) fn normalize_label(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Life themes a session can be set in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Theme {
    WorkIssues,
    InterpersonalIssues,
    EconomicIssues,
    RandomNegativeEvents,
    FamilyIssues,
    PhysicalStress,
    IdealRealityDiscrepancy,
}

impl Theme {
    pub const ALL: [Theme; 7] = [
        Theme::WorkIssues,
        Theme::InterpersonalIssues,
        Theme::EconomicIssues,
        Theme::RandomNegativeEvents,
        Theme::FamilyIssues,
        Theme::PhysicalStress,
        Theme::IdealRealityDiscrepancy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Theme::WorkIssues => "WorkIssues",
            Theme::InterpersonalIssues => "InterpersonalIssues",
            Theme::EconomicIssues => "EconomicIssues",
            Theme::RandomNegativeEvents => "RandomNegativeEvents",
            Theme::FamilyIssues => "FamilyIssues",
            Theme::PhysicalStress => "PhysicalStress",
            Theme::IdealRealityDiscrepancy => "IdealRealityDiscrepancy",
        }
    }

    /// Phrase bound to the `{topic}` placeholder.
    pub fn topic(self) -> &'static str {
        match self {
            Theme::WorkIssues => "work issues",
            Theme::InterpersonalIssues => "interpersonal issues",
            Theme::EconomicIssues => "economic issues",
            Theme::RandomNegativeEvents => "random negative events",
            Theme::FamilyIssues => "family issues",
            Theme::PhysicalStress => "physical stress",
            Theme::IdealRealityDiscrepancy => "discrepancy between ideal and reality",
        }
    }
}

impl fmt::Display for Theme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Theme {
    type Err = DomainError;

    /// Accepts the variant name or the topic phrase, ignoring case and separators.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = normalize_label(s);
        Theme::ALL
            .into_iter()
            .find(|t| normalize_label(t.as_str()) == wanted || normalize_label(t.topic()) == wanted)
            .ok_or_else(|| DomainError::UnknownTheme(s.to_string()))
    }
}

/// The player's stated worry. Never empty after trimming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Concern(String);

impl Concern {
    pub fn new(text: impl Into<String>) -> Result<Self, DomainError> {
        let text = text.into();
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(DomainError::EmptyConcern);
        }
        Ok(Concern(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Concern {
    type Error = DomainError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Concern::new(value)
    }
}

impl From<Concern> for String {
    fn from(value: Concern) -> Self {
        value.0
    }
}

impl fmt::Display for Concern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The ten cognitive distortion types listed in the Devil prompt, in prompt order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistortionType {
    EmotionalReasoning,
    Overgeneralization,
    MentalFiltering,
    ShouldStatements,
    AllOrNothing,
    MindReading,
    Magnification,
    Personalization,
    Labeling,
    FortuneTelling,
}

impl DistortionType {
    pub const ALL: [DistortionType; 10] = [
        DistortionType::EmotionalReasoning,
        DistortionType::Overgeneralization,
        DistortionType::MentalFiltering,
        DistortionType::ShouldStatements,
        DistortionType::AllOrNothing,
        DistortionType::MindReading,
        DistortionType::Magnification,
        DistortionType::Personalization,
        DistortionType::Labeling,
        DistortionType::FortuneTelling,
    ];

    /// Name as written in the prompt list.
    pub fn label(self) -> &'static str {
        match self {
            DistortionType::EmotionalReasoning => "Emotional Reasoning",
            DistortionType::Overgeneralization => "Overgeneralization",
            DistortionType::MentalFiltering => "Mental Filtering",
            DistortionType::ShouldStatements => "Should Statements",
            DistortionType::AllOrNothing => "All or Nothing",
            DistortionType::MindReading => "Mind Reading",
            DistortionType::Magnification => "Magnification",
            DistortionType::Personalization => "Personalization",
            DistortionType::Labeling => "Labeling",
            DistortionType::FortuneTelling => "Fortune Telling",
        }
    }

    /// Lenient match against model output: case and punctuation are ignored,
    /// a leading list number is dropped, and a label that extends or abbreviates a
    /// canonical name (`"Mental Filter"`, `"All-or-nothing thinking"`) still matches.
    /// Ambiguous input is rejected.
    pub fn fuzzy_parse(raw: &str) -> Result<Self, DomainError> {
        let normalized = normalize_label(raw);
        let key = normalized.trim_start_matches(|c: char| c.is_ascii_digit());
        let err = || DomainError::UnknownDistortionType(raw.trim().to_string());
        if key.is_empty() {
            return Err(err());
        }
        let canon: Vec<(DistortionType, String)> = Self::ALL
            .into_iter()
            .map(|d| (d, normalize_label(d.label())))
            .collect();

        if let Some((d, _)) = canon.iter().find(|(_, c)| c == key) {
            return Ok(*d);
        }
        let unique = |hits: Vec<DistortionType>| match hits.as_slice() {
            [one] => Some(*one),
            _ => None,
        };
        let prefix_hits = canon
            .iter()
            .filter(|(_, c)| key.starts_with(c.as_str()) || (key.len() >= 4 && c.starts_with(key)))
            .map(|(d, _)| *d)
            .collect();
        if let Some(d) = unique(prefix_hits) {
            return Ok(d);
        }
        let contained = canon
            .iter()
            .filter(|(_, c)| key.contains(c.as_str()))
            .map(|(d, _)| *d)
            .collect();
        unique(contained).ok_or_else(err)
    }
}

impl fmt::Display for DistortionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Big Five scores, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonalityProfile {
    pub openness: f64,
    pub conscientiousness: f64,
    pub extraversion: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
}

impl Default for PersonalityProfile {
    fn default() -> Self {
        Self::balanced()
    }
}

impl PersonalityProfile {
    pub fn balanced() -> Self {
        PersonalityProfile {
            openness: 0.5,
            conscientiousness: 0.5,
            extraversion: 0.5,
            agreeableness: 0.5,
            neuroticism: 0.5,
        }
    }

    pub fn traits(&self) -> [(&'static str, f64); 5] {
        [
            ("Openness", self.openness),
            ("Conscientiousness", self.conscientiousness),
            ("Extraversion", self.extraversion),
            ("Agreeableness", self.agreeableness),
            ("Neuroticism", self.neuroticism),
        ]
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        for (name, value) in self.traits() {
            if !(0.0..=1.0).contains(&value) {
                return Err(DomainError::TraitOutOfRange { trait_name: name, value });
            }
        }
        Ok(())
    }

    /// low below 0.33, medium below 0.66, high otherwise.
    pub fn level(score: f64) -> &'static str {
        if score < 0.33 {
            "low"
        } else if score < 0.66 {
            "medium"
        } else {
            "high"
        }
    }

    /// One-line description inserted into the Devil prompts.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .traits()
            .iter()
            .map(|(name, score)| format!("{} {}", Self::level(*score), name.to_lowercase()))
            .collect();
        format!("Your personality traits: {}.", parts.join(", "))
    }
}

/// Five floats parsed from `"o,c,e,a,n"`.
impl FromStr for PersonalityProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
            .collect::<Result<_, _>>()?;
        let [o, c, e, a, n] = values[..] else {
            return Err(format!("expected five comma-separated scores, got {}", values.len()));
        };
        let profile = PersonalityProfile {
            openness: o,
            conscientiousness: c,
            extraversion: e,
            agreeableness: a,
            neuroticism: n,
        };
        profile.validate().map_err(|e| e.to_string())?;
        Ok(profile)
    }
}

/// Which model call produced a piece of text. Also the key of `raw_outputs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Trigger,
    Devil,
    Guide,
    Summarizer,
    Patient,
    Strategist,
    BaselinePatient,
    BaselineChangeRole,
    BaselineUser,
    Chatbot,
}

impl AgentRole {
    pub const ALL: [AgentRole; 10] = [
        AgentRole::Trigger,
        AgentRole::Devil,
        AgentRole::Guide,
        AgentRole::Summarizer,
        AgentRole::Patient,
        AgentRole::Strategist,
        AgentRole::BaselinePatient,
        AgentRole::BaselineChangeRole,
        AgentRole::BaselineUser,
        AgentRole::Chatbot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Trigger => "trigger",
            AgentRole::Devil => "devil",
            AgentRole::Guide => "guide",
            AgentRole::Summarizer => "summarizer",
            AgentRole::Patient => "patient",
            AgentRole::Strategist => "strategist",
            AgentRole::BaselinePatient => "baseline_patient",
            AgentRole::BaselineChangeRole => "baseline_change_role",
            AgentRole::BaselineUser => "baseline_user",
            AgentRole::Chatbot => "chatbot",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown agent role `{s}`"))
    }
}

/// S_i: the scene produced by the trigger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub round: u32,
    pub scene: String,
    #[serde(default)]
    pub changes: Option<String>,
    pub reasons: String,
}

/// D_i: the devil's distorted inner voice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistortedThought {
    pub round: u32,
    pub distortion_type: DistortionType,
    pub thoughts: String,
    pub reasons: String,
}

/// G_i: restructuring advice addressed to the comforter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guidance {
    pub round: u32,
    pub summary_scene: String,
    pub summary_thoughts: String,
    pub help: String,
    pub changes: String,
    pub reasons: String,
}

impl Guidance {
    /// Stand-in recorded when the guide is ablated away.
    pub fn placeholder(round: u32) -> Self {
        Guidance {
            round,
            summary_scene: String::new(),
            summary_thoughts: String::new(),
            help: String::new(),
            changes: String::new(),
            reasons: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Author {
    Human,
    Simulated,
}

/// C_i: what the player (or simulated patient) said to the devil.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comfort {
    pub round: u32,
    pub comforting_words: String,
    #[serde(default)]
    pub reasons: Option<String>,
    pub author: Author,
}

impl Comfort {
    pub fn human(round: u32, words: impl Into<String>) -> Self {
        Comfort {
            round,
            comforting_words: words.into(),
            reasons: None,
            author: Author::Human,
        }
    }
}

/// Facilitation-protocol termination causes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SafetyStop {
    DialogueStagnation,
    SuicidalIdeation,
    IntenseEmotion,
    WorseningBias,
}

impl SafetyStop {
    pub const ALL: [SafetyStop; 4] = [
        SafetyStop::DialogueStagnation,
        SafetyStop::SuicidalIdeation,
        SafetyStop::IntenseEmotion,
        SafetyStop::WorseningBias,
    ];

    /// Heading used in the facilitation prompt.
    pub fn label(self) -> &'static str {
        match self {
            SafetyStop::DialogueStagnation => "Dialogue Stagnation",
            SafetyStop::SuicidalIdeation => "Suicidal Ideation",
            SafetyStop::IntenseEmotion => "Intense Emotional Fluctuations",
            SafetyStop::WorseningBias => "Worsening Cognitive Bias",
        }
    }

    /// Maps a `Termination:` value onto a cause. `None`, `No` and empty text mean no stop.
    pub fn parse_termination(raw: &str) -> Result<Option<Self>, DomainError> {
        let key = normalize_label(raw);
        if key.is_empty() || key == "none" || key == "no" || key == "na" {
            return Ok(None);
        }
        let found = Self::ALL.into_iter().find(|s| {
            let full = normalize_label(s.label());
            let short = match s {
                SafetyStop::DialogueStagnation => "stagnation",
                SafetyStop::SuicidalIdeation => "suicid",
                SafetyStop::IntenseEmotion => "intenseemotion",
                SafetyStop::WorseningBias => "worsening",
            };
            key == full || key.contains(short)
        });
        found
            .map(Some)
            .ok_or_else(|| DomainError::UnknownSafetyStop(raw.trim().to_string()))
    }
}

impl fmt::Display for SafetyStop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// P_i: the strategist's plan for the next round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progression {
    pub round: u32,
    pub next_scene: String,
    pub next_thoughts: String,
    pub is_end: bool,
    pub reasons: String,
    #[serde(default)]
    pub safety_stop: Option<SafetyStop>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theme_accepts_exactly_seven_labels() {
        for t in Theme::ALL {
            assert_eq!(t.as_str().parse::<Theme>().unwrap(), t);
            assert_eq!(t.topic().parse::<Theme>().unwrap(), t);
        }
        assert_eq!("work-issues".parse::<Theme>().unwrap(), Theme::WorkIssues);
        assert!("career issues".parse::<Theme>().is_err());
        assert!("".parse::<Theme>().is_err());
    }

    #[test]
    fn concern_is_trimmed_and_non_empty() {
        assert_eq!(Concern::new("  insomnia ").unwrap().as_str(), "insomnia");
        assert_eq!(Concern::new(" \n\t").unwrap_err(), DomainError::EmptyConcern);
        assert!(serde_json::from_str::<Concern>("\"\"").is_err());
    }

    #[test]
    fn distortion_canonical_labels_round_trip() {
        for d in DistortionType::ALL {
            assert_eq!(DistortionType::fuzzy_parse(d.label()).unwrap(), d);
        }
    }

    #[test]
    fn distortion_fuzzy_variants() {
        let cases = [
            ("Fortune-telling", DistortionType::FortuneTelling),
            ("emotional reasoning", DistortionType::EmotionalReasoning),
            ("\u{201c}Should\u{201d} Statements", DistortionType::ShouldStatements),
            ("All-or-Nothing Thinking", DistortionType::AllOrNothing),
            ("Mental Filter", DistortionType::MentalFiltering),
            ("5. All or Nothing", DistortionType::AllOrNothing),
            ("Mislabeling", DistortionType::Labeling),
            ("Magnification and minimization", DistortionType::Magnification),
            ("**Labeling**", DistortionType::Labeling),
        ];
        for (raw, want) in cases {
            assert_eq!(DistortionType::fuzzy_parse(raw).unwrap(), want, "{raw}");
        }
        assert!(DistortionType::fuzzy_parse("Catastrophizing").is_err());
        assert!(DistortionType::fuzzy_parse("").is_err());
        assert!(DistortionType::fuzzy_parse("m").is_err());
    }

    #[test]
    fn personality_levels_and_bounds() {
        assert_eq!(PersonalityProfile::level(0.0), "low");
        assert_eq!(PersonalityProfile::level(0.329), "low");
        assert_eq!(PersonalityProfile::level(0.33), "medium");
        assert_eq!(PersonalityProfile::level(0.659), "medium");
        assert_eq!(PersonalityProfile::level(0.66), "high");
        assert_eq!(PersonalityProfile::level(1.0), "high");

        let mut p = PersonalityProfile::balanced();
        p.neuroticism = 1.2;
        assert!(matches!(p.validate(), Err(DomainError::TraitOutOfRange { trait_name: "Neuroticism", .. })));
        let parsed: PersonalityProfile = "0.1,0.5,0.9,0.5,0.7".parse().unwrap();
        assert_eq!(
            parsed.describe(),
            "Your personality traits: low openness, medium conscientiousness, high extraversion, medium agreeableness, high neuroticism."
        );
        assert!("0.1,0.2".parse::<PersonalityProfile>().is_err());
        assert!("0.1,0.2,0.3,0.4,2".parse::<PersonalityProfile>().is_err());
    }

    #[test]
    fn termination_labels() {
        assert_eq!(SafetyStop::parse_termination("None").unwrap(), None);
        assert_eq!(SafetyStop::parse_termination("").unwrap(), None);
        assert_eq!(
            SafetyStop::parse_termination("Suicidal Ideation").unwrap(),
            Some(SafetyStop::SuicidalIdeation)
        );
        assert_eq!(
            SafetyStop::parse_termination("intense emotional fluctuations").unwrap(),
            Some(SafetyStop::IntenseEmotion)
        );
        assert_eq!(
            SafetyStop::parse_termination("Worsening Cognitive Bias").unwrap(),
            Some(SafetyStop::WorseningBias)
        );
        assert!(SafetyStop::parse_termination("boredom").is_err());
    }
}
