//! Strict parsing of labeled model answers such as
//!
//! ```text
//! Next_scene: ...
//! Next_thoughts: ...
//! Is_end: Yes
//! Reasons: ...
//! ```
//!
//! A section starts at a line beginning with one of the schema's labels followed by a
//! colon (case-insensitive, markdown emphasis and `_`/space differences tolerated) and
//! runs to the next such line or the end of the text.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{normalize_label, DistortionType, SafetyStop};
use crate::template::{PromptTemplate, TemplateKey};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty answer")]
    Empty,
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("Is_end must be Yes or No, got `{0}`")]
    UnknownIsEnd(String),
    #[error("unknown cognitive distortion type `{0}`")]
    UnknownDistortionType(String),
    #[error("unknown termination cause `{0}`")]
    UnknownTermination(String),
    #[error("report has {got} rounds, expected {expected}")]
    RoundCountMismatch { expected: usize, got: usize },
}

/// Labels a role's answer must contain, in format-block order, plus optional ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectionSchema {
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
}

impl SectionSchema {
    pub fn for_key(key: TemplateKey) -> SectionSchema {
        use TemplateKey::*;
        let required: &'static [&'static str] = match key {
            Trigger0 => &["Scene", "Reasons"],
            TriggerI | TriggerI_NoMemory | TriggerI_NoStrategist => &["Scene", "Changes", "Reasons"],
            Devil0 => &["Type", "Thoughts", "Reasons"],
            DevilI | BaselineChangeRole => &["Thoughts", "Reasons"],
            Guide => &["SummaryScene", "SummaryThoughts", "Help", "Changes", "Reasons"],
            Strategist | Strategist_NoMemory | StrategistFacilitated => {
                &["Next_scene", "Next_thoughts", "Is_end", "Reasons"]
            }
            SimulatedPatient | SimulatedPatient_NoGuide | BaselineUser => &["Comforting_words", "Reasons"],
            BaselinePatient => &["Behavior", "Reasons"],
        };
        let optional: &'static [&'static str] = match key {
            StrategistFacilitated => &["Termination"],
            _ => &[],
        };
        SectionSchema { required, optional }
    }

    fn labels(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.required.iter().chain(self.optional.iter()).copied()
    }
}

/// Parsed sections keyed by the schema's canonical label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sections(BTreeMap<&'static str, String>);

impl Sections {
    pub fn get(&self, label: &str) -> Option<&str> {
        self.0.get(label).map(String::as_str)
    }

    /// Value of a required section. [`parse_sections`] guarantees presence.
    pub fn req(&self, label: &'static str) -> String {
        self.0.get(label).cloned().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn strip_decoration(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || c == '*' || c == '#' || c == '`')
}

/// If `line` opens a section for one of `labels`, returns the label and the text
/// after its colon.
fn match_label<'a>(line: &'a str, labels: &[&'static str]) -> Option<(&'static str, &'a str)> {
    let trimmed = line.trim_start().trim_start_matches(['*', '#', '`', '-', '>']);
    let colon = trimmed.find(':')?;
    let head = strip_decoration(&trimmed[..colon]).replace('\\', "");
    let key = normalize_label(&head);
    if key.is_empty() {
        return None;
    }
    let label = labels.iter().find(|l| normalize_label(l) == key)?;
    let rest = trimmed[colon + 1..].trim_start_matches(['*', '`']);
    Some((label, rest))
}

fn split_by_labels(raw: &str, labels: &[&'static str]) -> BTreeMap<&'static str, String> {
    let mut found: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut current: Option<(&'static str, Vec<&str>)> = None;
    let flush = |cur: Option<(&'static str, Vec<&str>)>, found: &mut BTreeMap<&'static str, String>| {
        if let Some((label, lines)) = cur {
            found.insert(label, lines.join("\n").trim().to_string());
        }
    };
    for line in raw.lines() {
        match match_label(line, labels) {
            Some((label, rest)) if !found.contains_key(label) && current.as_ref().map(|c| c.0) != Some(label) => {
                flush(current.take(), &mut found);
                current = Some((label, vec![rest]));
            }
            _ => {
                if let Some((_, lines)) = current.as_mut() {
                    lines.push(line);
                }
            }
        }
    }
    flush(current, &mut found);
    found
}

/// Splits `raw` into the sections named by `key`'s schema.
pub fn parse_sections(key: TemplateKey, raw: &str) -> Result<Sections, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let schema = SectionSchema::for_key(key);
    let labels: Vec<&'static str> = schema.labels().collect();
    let found = split_by_labels(raw, &labels);
    if let Some(missing) = schema.required.iter().find(|l| !found.contains_key(*l)) {
        return Err(ParseError::MissingSection(missing.to_string()));
    }
    Ok(Sections(found))
}

pub fn parse_is_end(raw: &str) -> Result<bool, ParseError> {
    let key = normalize_label(raw);
    if key.starts_with("yes") || key == "true" {
        Ok(true)
    } else if key.starts_with("no") || key == "false" {
        Ok(false)
    } else {
        Err(ParseError::UnknownIsEnd(raw.trim().to_string()))
    }
}

pub fn parse_distortion(raw: &str) -> Result<DistortionType, ParseError> {
    DistortionType::fuzzy_parse(raw).map_err(|_| ParseError::UnknownDistortionType(raw.trim().to_string()))
}

pub fn parse_termination(raw: &str) -> Result<Option<SafetyStop>, ParseError> {
    SafetyStop::parse_termination(raw).map_err(|_| ParseError::UnknownTermination(raw.trim().to_string()))
}

/// One point of the role-reversal report.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ReversalPoint {
    pub round: u32,
    pub thoughts: String,
    pub reasons: String,
}

fn round_header(line: &str) -> Option<(u32, &str)> {
    let t = line.trim_start().trim_start_matches(['*', '#', '-']).trim_start();
    let lower = t.get(..5)?.to_ascii_lowercase();
    if lower != "round" {
        return None;
    }
    let after = t[5..].trim_start();
    let digits: String = after.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    let rest = after[digits.len()..].trim_start_matches(['*', ':', ' ', '.']);
    Some((digits.parse().ok()?, rest))
}

/// Parses a `Round i: / Thoughts: / Reasons:` list and checks it has `expected` points.
pub fn parse_reversal_report(raw: &str, expected: usize) -> Result<Vec<ReversalPoint>, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut blocks: Vec<(u32, String)> = Vec::new();
    for line in raw.lines() {
        if let Some((n, rest)) = round_header(line) {
            blocks.push((n, rest.to_string()));
        } else if let Some((_, text)) = blocks.last_mut() {
            text.push('\n');
            text.push_str(line);
        }
    }
    if blocks.len() != expected {
        return Err(ParseError::RoundCountMismatch { expected, got: blocks.len() });
    }
    blocks
        .into_iter()
        .map(|(round, text)| {
            let s = parse_sections(TemplateKey::BaselineChangeRole, &text)?;
            Ok(ReversalPoint { round, thoughts: s.req("Thoughts"), reasons: s.req("Reasons") })
        })
        .collect()
}

/// Fills a template's answer skeleton with section values: the text a perfectly
/// compliant model would return. Labels absent from `values` keep their `<...>` hint.
pub fn fill_format_block(template: &PromptTemplate, values: &BTreeMap<&str, String>) -> String {
    let schema = SectionSchema::for_key(template.key());
    let labels: Vec<&'static str> = schema.labels().collect();
    template
        .format_block()
        .lines()
        .map(|line| match match_label(line, &labels) {
            Some((label, _)) => match values.get(label) {
                Some(v) => format!("{label}: {v}"),
                None => line.to_string(),
            },
            None => line.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders a role-reversal report in the shape the Change_Role template requests.
pub fn render_reversal_report(points: &[ReversalPoint]) -> String {
    points
        .iter()
        .map(|p| format!("Round {}:\n\nThoughts: {}\n\nReasons: {}", p.round, p.thoughts, p.reasons))
        .collect::<Vec<_>>()
        .join("\n\n")
}
