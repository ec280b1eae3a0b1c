//! Prompt templates with `{name}` placeholders.
//!
//! A template set holds one body per [`TemplateKey`]. The built-in English set is
//! compiled in; a directory of `<Key>.txt` files can replace it (for example a
//! localized set). Placeholders are drawn from a fixed vocabulary; braces around
//! anything that is not a lowercase identifier are kept as literal text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PLACEHOLDER_VOCABULARY: [&str; 18] = [
    "topic",
    "worries",
    "type",
    "scene",
    "thoughts",
    "comforting_words",
    "help_text",
    "summary",
    "next_scene",
    "next_thoughts",
    "memory_scene",
    "memory_thought",
    "memory_guide",
    "memory_comforting",
    "memory_behavior",
    "behavior",
    "concerns",
    "count",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum TemplateKey {
    Trigger0,
    TriggerI,
    Devil0,
    DevilI,
    Guide,
    Strategist,
    StrategistFacilitated,
    SimulatedPatient,
    BaselinePatient,
    BaselineChangeRole,
    BaselineUser,
    TriggerI_NoMemory,
    Strategist_NoMemory,
    TriggerI_NoStrategist,
    SimulatedPatient_NoGuide,
}

impl TemplateKey {
    pub const ALL: [TemplateKey; 15] = [
        TemplateKey::Trigger0,
        TemplateKey::TriggerI,
        TemplateKey::Devil0,
        TemplateKey::DevilI,
        TemplateKey::Guide,
        TemplateKey::Strategist,
        TemplateKey::StrategistFacilitated,
        TemplateKey::SimulatedPatient,
        TemplateKey::BaselinePatient,
        TemplateKey::BaselineChangeRole,
        TemplateKey::BaselineUser,
        TemplateKey::TriggerI_NoMemory,
        TemplateKey::Strategist_NoMemory,
        TemplateKey::TriggerI_NoStrategist,
        TemplateKey::SimulatedPatient_NoGuide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKey::Trigger0 => "Trigger0",
            TemplateKey::TriggerI => "TriggerI",
            TemplateKey::Devil0 => "Devil0",
            TemplateKey::DevilI => "DevilI",
            TemplateKey::Guide => "Guide",
            TemplateKey::Strategist => "Strategist",
            TemplateKey::StrategistFacilitated => "StrategistFacilitated",
            TemplateKey::SimulatedPatient => "SimulatedPatient",
            TemplateKey::BaselinePatient => "BaselinePatient",
            TemplateKey::BaselineChangeRole => "BaselineChangeRole",
            TemplateKey::BaselineUser => "BaselineUser",
            TemplateKey::TriggerI_NoMemory => "TriggerI_NoMemory",
            TemplateKey::Strategist_NoMemory => "Strategist_NoMemory",
            TemplateKey::TriggerI_NoStrategist => "TriggerI_NoStrategist",
            TemplateKey::SimulatedPatient_NoGuide => "SimulatedPatient_NoGuide",
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateKey::Trigger0 => include_str!("../templates/Trigger0.txt"),
            TemplateKey::TriggerI => include_str!("../templates/TriggerI.txt"),
            TemplateKey::Devil0 => include_str!("../templates/Devil0.txt"),
            TemplateKey::DevilI => include_str!("../templates/DevilI.txt"),
            TemplateKey::Guide => include_str!("../templates/Guide.txt"),
            TemplateKey::Strategist => include_str!("../templates/Strategist.txt"),
            TemplateKey::StrategistFacilitated => include_str!("../templates/StrategistFacilitated.txt"),
            TemplateKey::SimulatedPatient => include_str!("../templates/SimulatedPatient.txt"),
            TemplateKey::BaselinePatient => include_str!("../templates/BaselinePatient.txt"),
            TemplateKey::BaselineChangeRole => include_str!("../templates/BaselineChangeRole.txt"),
            TemplateKey::BaselineUser => include_str!("../templates/BaselineUser.txt"),
            TemplateKey::TriggerI_NoMemory => include_str!("../templates/TriggerI_NoMemory.txt"),
            TemplateKey::Strategist_NoMemory => include_str!("../templates/Strategist_NoMemory.txt"),
            TemplateKey::TriggerI_NoStrategist => include_str!("../templates/TriggerI_NoStrategist.txt"),
            TemplateKey::SimulatedPatient_NoGuide => include_str!("../templates/SimulatedPatient_NoGuide.txt"),
        }
    }
}

impl fmt::Display for TemplateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateKey {
    type Err = TemplateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateKey::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| TemplateError::UnknownKey(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("missing binding for placeholder `{0}`")]
    MissingBinding(String),
    #[error("binding `{0}` does not correspond to any placeholder")]
    UnknownBinding(String),
    #[error("template {key} uses `{{{name}}}`, which is not a known placeholder")]
    UnknownPlaceholder { key: TemplateKey, name: String },
    #[error("unknown template key `{0}`")]
    UnknownKey(String),
    #[error("template directory {dir} is missing {key}.txt")]
    MissingFile { dir: PathBuf, key: TemplateKey },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

/// One prompt body with its placeholder set, checked against the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    key: TemplateKey,
    body: String,
    segments: Vec<Segment>,
    placeholders: BTreeSet<String>,
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

fn split_segments(body: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_identifier(&after[..close]) => {
                text.push_str(&rest[..open]);
                if !text.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut text)));
                }
                segments.push(Segment::Slot(after[..close].to_string()));
                rest = &after[close + 1..];
            }
            _ => {
                text.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        segments.push(Segment::Text(text));
    }
    segments
}

impl PromptTemplate {
    pub fn new(key: TemplateKey, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let segments = split_segments(&body);
        let mut placeholders = BTreeSet::new();
        for seg in &segments {
            if let Segment::Slot(name) = seg {
                if !PLACEHOLDER_VOCABULARY.contains(&name.as_str()) {
                    return Err(TemplateError::UnknownPlaceholder { key, name: name.clone() });
                }
                placeholders.insert(name.clone());
            }
        }
        Ok(PromptTemplate { key, body, segments, placeholders })
    }

    pub fn key(&self) -> TemplateKey {
        self.key
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    /// The text after the last "following format" line: the answer skeleton the
    /// model is asked to fill in.
    pub fn format_block(&self) -> &str {
        const MARKER: &str = "following format";
        match self.body.rfind(MARKER) {
            Some(idx) => {
                let tail = &self.body[idx..];
                let line_end = tail.find('\n').map(|i| idx + i + 1).unwrap_or(self.body.len());
                &self.body[line_end..]
            }
            None => "",
        }
    }
}

/// Substitutes every placeholder with its binding verbatim.
///
/// The bindings must cover the placeholder set exactly: a missing name is
/// [`TemplateError::MissingBinding`], an extra one [`TemplateError::UnknownBinding`].
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<String, TemplateError> {
    if let Some(missing) = template.placeholders.iter().find(|p| !bindings.contains_key(*p)) {
        return Err(TemplateError::MissingBinding(missing.clone()));
    }
    if let Some(extra) = bindings.keys().find(|k| !template.placeholders.contains(*k)) {
        return Err(TemplateError::UnknownBinding(extra.clone()));
    }
    let mut out = String::with_capacity(template.body.len());
    for seg in &template.segments {
        match seg {
            Segment::Text(t) => out.push_str(t),
            Segment::Slot(name) => out.push_str(&bindings[name]),
        }
    }
    Ok(out)
}

/// A complete registry of the fifteen role templates.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    id: String,
    templates: BTreeMap<TemplateKey, PromptTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = TemplateKey::ALL
            .into_iter()
            .map(|k| {
                let t = PromptTemplate::new(k, k.builtin_body())
                    .unwrap_or_else(|e| panic!("built-in template {k} is invalid: {e}"));
                (k, t)
            })
            .collect();
        TemplateSet { id: "builtin-en".into(), templates }
    }

    /// Loads `<Key>.txt` for every key from `dir`. The set id is the directory name.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for key in TemplateKey::ALL {
            let path = dir.join(format!("{key}.txt"));
            if !path.exists() {
                return Err(TemplateError::MissingFile { dir: dir.to_path_buf(), key });
            }
            let body = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io { path, source })?;
            templates.insert(key, PromptTemplate::new(key, body)?);
        }
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        Ok(TemplateSet { id, templates })
    }

    /// Writes the set out as `<Key>.txt` files, the inverse of [`TemplateSet::load_dir`].
    pub fn write_dir(&self, dir: &Path) -> Result<(), TemplateError> {
        std::fs::create_dir_all(dir).map_err(|source| TemplateError::Io { path: dir.to_path_buf(), source })?;
        for t in self.templates.values() {
            let path = dir.join(format!("{}.txt", t.key));
            std::fs::write(&path, t.body()).map_err(|source| TemplateError::Io { path, source })?;
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn get(&self, key: TemplateKey) -> &PromptTemplate {
        &self.templates[&key]
    }

    pub fn keys(&self) -> impl Iterator<Item = TemplateKey> + '_ {
        self.templates.keys().copied()
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}
