//! PANAS scoring, fluctuation summaries, failure rates and rubric aggregation, plus
//! CSV ingestion and plain-text report tables.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{classify_failure, SessionOutcome};

pub const POSITIVE_ITEMS: [&str; 10] = [
    "Interested", "Excited", "Strong", "Enthusiastic", "Proud", "Alert", "Inspired", "Determined", "Attentive", "Active",
];

pub const NEGATIVE_ITEMS: [&str; 10] = [
    "Distressed", "Upset", "Guilty", "Scared", "Hostile", "Irritable", "Ashamed", "Nervous", "Jittery", "Afraid",
];

/// All 20 items, positive subscale first.
pub fn panas_items() -> impl Iterator<Item = &'static str> {
    POSITIVE_ITEMS.into_iter().chain(NEGATIVE_ITEMS)
}

pub const CONTENT_DIMENSIONS: [&str; 6] = ["IM", "CO", "EN", "ER", "SA", "IN"];
pub const SP_DIMENSIONS: [&str; 5] = ["DS", "CF", "EE", "PD", "Acc"];

/// Printed under every fluctuation table.
pub const AGGREGATION_CAVEAT: &str = "note: the published per-system fluctuation figures use an unstated aggregation; both modes are shown and neither is expected to match them.";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("invalid score {value} for `{item}` (expected {expected})")]
    InvalidScore { item: String, value: String, expected: &'static str },
    #[error("record `{client}` is missing item `{item}`")]
    MissingItem { client: String, item: String },
    #[error("unknown PANAS item `{0}`")]
    UnknownItem(String),
    #[error("no records for system `{0}`")]
    EmptyGroup(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("mixed dimension sets among {0} targets")]
    MixedDimensionSets(String),
    #[error("score for {target} is missing dimension `{dimension}`")]
    MissingDimension { target: String, dimension: String },
    #[error("unknown rubric dimension `{0}`")]
    UnknownDimension(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
}

/// Exact fraction, kept unreduced so reports show what was counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: i64,
    pub denominator: i64,
}

impl Ratio {
    pub fn new(numerator: i64, denominator: i64) -> Self {
        assert!(denominator > 0, "ratio denominator must be positive");
        Ratio { numerator, denominator }
    }

    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl std::ops::Neg for Ratio {
    type Output = Ratio;

    fn neg(self) -> Ratio {
        Ratio { numerator: -self.numerator, denominator: self.denominator }
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some((self.numerator * other.denominator).cmp(&(other.numerator * self.denominator)))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Rounds to two decimals, halves away from zero.
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    let nudged = scaled + scaled.signum() * 1e-9;
    nudged.round() / 100.0
}

fn fmt2(x: f64) -> String {
    let r = round2(x);
    if r == 0.0 {
        "0.00".to_string()
    } else {
        format!("{r:.2}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum System {
    EmoLLM,
    CACTUS,
    MIND,
    Control,
    Other(String),
}

impl System {
    pub fn label(&self) -> &str {
        match self {
            System::EmoLLM => "EmoLLM",
            System::CACTUS => "CACTUS",
            System::MIND => "MIND",
            System::Control => "Control",
            System::Other(s) => s,
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for System {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() {
            return Err(EvalError::EmptyGroup(String::new()));
        }
        Ok(match t.to_ascii_lowercase().as_str() {
            "emollm" => System::EmoLLM,
            "cactus" => System::CACTUS,
            "mind" => System::MIND,
            "control" => System::Control,
            _ => System::Other(t.to_string()),
        })
    }
}

/// One participant's pre/post questionnaire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanasRecord {
    pub client_id: String,
    pub system: System,
    pub pre: BTreeMap<String, u8>,
    pub post: BTreeMap<String, u8>,
}

impl PanasRecord {
    /// Checks the 20-item shape and the 1..5 range.
    pub fn validate(&self) -> Result<(), EvalError> {
        for map in [&self.pre, &self.post] {
            for (item, score) in map {
                if !panas_items().any(|i| i == item) {
                    return Err(EvalError::UnknownItem(item.clone()));
                }
                if !(1..=5).contains(score) {
                    return Err(EvalError::InvalidScore { item: item.clone(), value: score.to_string(), expected: "an integer in 1..5" });
                }
            }
            for item in panas_items() {
                if !map.contains_key(item) {
                    return Err(EvalError::MissingItem { client: self.client_id.clone(), item: item.to_string() });
                }
            }
        }
        Ok(())
    }

    /// The same record with pre and post exchanged.
    pub fn swapped(&self) -> Self {
        PanasRecord { pre: self.post.clone(), post: self.pre.clone(), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanasDelta {
    pub client_id: String,
    pub system: System,
    /// post − pre, keyed by item name.
    pub per_item: BTreeMap<String, i32>,
    pub pos_mean_delta: Ratio,
    pub neg_mean_delta: Ratio,
}

impl PanasDelta {
    pub fn item(&self, name: &str) -> Option<i32> {
        self.per_item.get(name).copied()
    }
}

pub fn panas_delta(record: &PanasRecord) -> Result<PanasDelta, EvalError> {
    record.validate()?;
    let per_item: BTreeMap<String, i32> = panas_items()
        .map(|item| (item.to_string(), record.post[item] as i32 - record.pre[item] as i32))
        .collect();
    let sum = |items: &[&str]| items.iter().map(|i| per_item[*i] as i64).sum::<i64>();
    Ok(PanasDelta {
        client_id: record.client_id.clone(),
        system: record.system.clone(),
        pos_mean_delta: Ratio::new(sum(&POSITIVE_ITEMS), POSITIVE_ITEMS.len() as i64),
        neg_mean_delta: Ratio::new(sum(&NEGATIVE_ITEMS), NEGATIVE_ITEMS.len() as i64),
        per_item,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggregation {
    /// Average each client's subscale mean, then average over clients.
    MeanOfClientMeans,
    /// Average every item delta of the subscale across all clients of the system.
    PooledItemMean,
}

impl Aggregation {
    pub const ALL: [Aggregation; 2] = [Aggregation::MeanOfClientMeans, Aggregation::PooledItemMean];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::MeanOfClientMeans => "MeanOfClientMeans",
            Aggregation::PooledItemMean => "PooledItemMean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fluctuation {
    pub positive: f64,
    pub negative: f64,
    pub clients: usize,
}

/// Per-system mean change on each subscale.
pub fn fluctuation_summary(
    records: &[PanasRecord],
    aggregation: Aggregation,
) -> Result<BTreeMap<System, Fluctuation>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut groups: BTreeMap<System, Vec<PanasDelta>> = BTreeMap::new();
    for r in records {
        groups.entry(r.system.clone()).or_default().push(panas_delta(r)?);
    }
    groups
        .into_iter()
        .map(|(system, deltas)| {
            if deltas.is_empty() {
                return Err(EvalError::EmptyGroup(system.to_string()));
            }
            let n = deltas.len();
            let (positive, negative) = match aggregation {
                Aggregation::MeanOfClientMeans => (
                    deltas.iter().map(|d| d.pos_mean_delta.value()).sum::<f64>() / n as f64,
                    deltas.iter().map(|d| d.neg_mean_delta.value()).sum::<f64>() / n as f64,
                ),
                Aggregation::PooledItemMean => {
                    let pooled = |items: &[&str]| {
                        let total: i64 = deltas.iter().flat_map(|d| items.iter().map(|i| d.per_item[*i] as i64)).sum();
                        total as f64 / (items.len() * n) as f64
                    };
                    (pooled(&POSITIVE_ITEMS), pooled(&NEGATIVE_ITEMS))
                }
            };
            Ok((system, Fluctuation { positive, negative, clients: n }))
        })
        .collect()
}

/// Share of outcomes counted as failures, as failures/total.
pub fn failure_rate(outcomes: &[SessionOutcome]) -> Result<Ratio, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let failures = outcomes.iter().filter(|o| classify_failure(o)).count();
    Ok(Ratio::new(failures as i64, outcomes.len() as i64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetKind {
    Paradigm,
    Theme,
    Model,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Paradigm => "paradigm",
            TargetKind::Theme => "theme",
            TargetKind::Model => "model",
        }
    }
}

impl FromStr for TargetKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paradigm" | "system" => Ok(TargetKind::Paradigm),
            "theme" => Ok(TargetKind::Theme),
            "model" => Ok(TargetKind::Model),
            other => Err(format!("unknown target kind `{other}` (expected paradigm, theme or model)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DimensionSet {
    /// Immersion, coherence, engagement, emotional resonance, satisfaction, insight.
    Content,
    /// Dialogue stability, cognitive fidelity, emotional expression, personalization, accuracy.
    SimulatedPatient,
}

impl DimensionSet {
    pub fn dimensions(self) -> &'static [&'static str] {
        match self {
            DimensionSet::Content => &CONTENT_DIMENSIONS,
            DimensionSet::SimulatedPatient => &SP_DIMENSIONS,
        }
    }

    pub fn of(dimension: &str) -> Option<DimensionSet> {
        if CONTENT_DIMENSIONS.contains(&dimension) {
            Some(DimensionSet::Content)
        } else if SP_DIMENSIONS.contains(&dimension) {
            Some(DimensionSet::SimulatedPatient)
        } else {
            None
        }
    }
}

/// One rater's scores for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricScore {
    pub rater_id: String,
    pub target_kind: TargetKind,
    pub target: String,
    pub scores: BTreeMap<String, f64>,
}

impl RubricScore {
    /// Dimension set of a complete, in-range score.
    pub fn dimension_set(&self) -> Result<DimensionSet, EvalError> {
        let first = self.scores.keys().next().ok_or_else(|| EvalError::MissingDimension {
            target: self.target.clone(),
            dimension: "any".into(),
        })?;
        let set = DimensionSet::of(first).ok_or_else(|| EvalError::UnknownDimension(first.clone()))?;
        for (dim, value) in &self.scores {
            match DimensionSet::of(dim) {
                None => return Err(EvalError::UnknownDimension(dim.clone())),
                Some(s) if s != set => return Err(EvalError::MixedDimensionSets(self.target.clone())),
                Some(_) => {}
            }
            if !(1.0..=5.0).contains(value) {
                return Err(EvalError::InvalidScore { item: dim.clone(), value: value.to_string(), expected: "a value in [1, 5]" });
            }
        }
        for dim in set.dimensions() {
            if !self.scores.contains_key(*dim) {
                return Err(EvalError::MissingDimension { target: self.target.clone(), dimension: dim.to_string() });
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricTable {
    pub target_kind: TargetKind,
    pub dimension_set: DimensionSet,
    /// target → dimension → mean, unrounded.
    pub means: BTreeMap<String, BTreeMap<String, f64>>,
    /// target → number of scores averaged.
    pub counts: BTreeMap<String, usize>,
}

/// Mean score per (target, dimension) over all scores of `group_by` kind.
pub fn rubric_aggregate(scores: &[RubricScore], group_by: TargetKind) -> Result<RubricTable, EvalError> {
    let group: Vec<&RubricScore> = scores.iter().filter(|s| s.target_kind == group_by).collect();
    if group.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut set = None;
    for s in &group {
        let this = s.dimension_set()?;
        if *set.get_or_insert(this) != this {
            return Err(EvalError::MixedDimensionSets(group_by.as_str().to_string()));
        }
    }
    let dimension_set = set.expect("non-empty group");
    let mut sums: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in &group {
        *counts.entry(s.target.clone()).or_default() += 1;
        let row = sums.entry(s.target.clone()).or_default();
        for (dim, v) in &s.scores {
            *row.entry(dim.clone()).or_default() += v;
        }
    }
    let means = sums
        .into_iter()
        .map(|(target, row)| {
            let n = counts[&target] as f64;
            (target, row.into_iter().map(|(d, v)| (d, v / n)).collect())
        })
        .collect();
    Ok(RubricTable { target_kind: group_by, dimension_set, means, counts })
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input)
}

fn csv_error(err: csv::Error) -> EvalError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    EvalError::Csv { line, message: err.to_string() }
}

fn require_headers<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), EvalError> {
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(EvalError::Csv { line: 1, message: "file is empty".into() });
    }
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(EvalError::Csv { line: 1, message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")) });
    }
    Ok(())
}

/// Reads long-form PANAS rows `client_id,system,item,pre,post`, one row per item.
pub fn read_panas_csv<R: Read>(input: R) -> Result<Vec<PanasRecord>, EvalError> {
    let mut reader = csv_reader(input);
    require_headers(&mut reader, &["client_id", "system", "item", "pre", "post"])?;
    let mut records: BTreeMap<String, PanasRecord> = BTreeMap::new();
    let mut rows = 0;
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let at = |e: EvalError| EvalError::Csv { line, message: e.to_string() };
        let client = row[0].to_string();
        let system: System = row[1].parse().map_err(|_| at(EvalError::EmptyGroup("(blank system)".into())))?;
        let item = panas_items()
            .find(|i| i.eq_ignore_ascii_case(&row[2]))
            .ok_or_else(|| at(EvalError::UnknownItem(row[2].to_string())))?;
        let score = |raw: &str| -> Result<u8, EvalError> {
            raw.parse::<u8>()
                .ok()
                .filter(|v| (1..=5).contains(v))
                .ok_or_else(|| at(EvalError::InvalidScore { item: item.to_string(), value: raw.to_string(), expected: "an integer in 1..5" }))
        };
        let (pre, post) = (score(&row[3])?, score(&row[4])?);
        let record = records.entry(client.clone()).or_insert_with(|| PanasRecord {
            client_id: client.clone(),
            system: system.clone(),
            pre: BTreeMap::new(),
            post: BTreeMap::new(),
        });
        if record.system != system {
            return Err(EvalError::Csv { line, message: format!("client `{client}` listed under both {} and {system}", record.system) });
        }
        if record.pre.insert(item.to_string(), pre).is_some() {
            return Err(EvalError::Csv { line, message: format!("duplicate item `{item}` for client `{client}`") });
        }
        record.post.insert(item.to_string(), post);
        rows += 1;
    }
    if rows == 0 {
        return Err(EvalError::Csv { line: 2, message: "no data rows".into() });
    }
    let mut out: Vec<PanasRecord> = records.into_values().collect();
    for r in &out {
        r.validate()?;
    }
    out.sort_by(|a, b| natural_cmp(&a.client_id, &b.client_id));
    Ok(out)
}

/// Reads long-form rubric rows `rater_id,target_kind,target,dimension,score`.
pub fn read_rubric_csv<R: Read>(input: R) -> Result<Vec<RubricScore>, EvalError> {
    let mut reader = csv_reader(input);
    require_headers(&mut reader, &["rater_id", "target_kind", "target", "dimension", "score"])?;
    let mut scores: BTreeMap<(String, TargetKind, String), BTreeMap<String, f64>> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let kind: TargetKind = row[1].parse().map_err(|message| EvalError::Csv { line, message })?;
        let dimension = row[3].to_string();
        if DimensionSet::of(&dimension).is_none() {
            return Err(EvalError::Csv { line, message: EvalError::UnknownDimension(dimension).to_string() });
        }
        let value: f64 = row[4]
            .parse()
            .ok()
            .filter(|v: &f64| (1.0..=5.0).contains(v))
            .ok_or_else(|| EvalError::Csv { line, message: format!("score `{}` is not a number in [1, 5]", &row[4]) })?;
        let entry = scores.entry((row[0].to_string(), kind, row[2].to_string())).or_default();
        if entry.insert(dimension.clone(), value).is_some() {
            return Err(EvalError::Csv { line, message: format!("duplicate dimension `{dimension}` for `{}`", &row[2]) });
        }
    }
    if scores.is_empty() {
        return Err(EvalError::Csv { line: 2, message: "no data rows".into() });
    }
    let out: Vec<RubricScore> = scores
        .into_iter()
        .map(|((rater_id, target_kind, target), scores)| RubricScore { rater_id, target_kind, target, scores })
        .collect();
    for s in &out {
        s.dimension_set()?;
    }
    Ok(out)
}

/// Orders `client2` before `client10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let split = |s: &str| {
        let idx = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (head, tail) = s.split_at(idx);
        (head.to_string(), tail.parse::<u64>().ok())
    };
    split(a).cmp(&split(b)).then_with(|| a.cmp(b))
}

/// Left-aligned first column, right-aligned value columns.
pub fn format_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r.get(c).map_or(0, |s| s.chars().count())).chain([headers[c].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(headers)];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.extend(rows.iter().map(|r| line(r)));
    out.join("\n") + "\n"
}

/// Item rows, one δ column per client, with subscale means at the bottom.
pub fn format_delta_table(deltas: &[PanasDelta]) -> String {
    let mut headers = vec!["item".to_string()];
    headers.extend(deltas.iter().map(|d| format!("{} ({})", d.client_id, d.system)));
    let mut rows: Vec<Vec<String>> = panas_items()
        .map(|item| {
            let mut row = vec![item.to_string()];
            row.extend(deltas.iter().map(|d| d.per_item[item].to_string()));
            row
        })
        .collect();
    let mut pos = vec!["positive mean".to_string()];
    pos.extend(deltas.iter().map(|d| fmt2(d.pos_mean_delta.value())));
    let mut neg = vec!["negative mean".to_string()];
    neg.extend(deltas.iter().map(|d| fmt2(d.neg_mean_delta.value())));
    rows.push(pos);
    rows.push(neg);
    format_table(&headers, &rows)
}

/// Both aggregation modes side by side, followed by the caveat line.
pub fn format_fluctuation_table(records: &[PanasRecord]) -> Result<String, EvalError> {
    let by_mode: Vec<BTreeMap<System, Fluctuation>> =
        Aggregation::ALL.iter().map(|a| fluctuation_summary(records, *a)).collect::<Result<_, _>>()?;
    let headers: Vec<String> = ["system", "clients", "pos (client means)", "neg (client means)", "pos (pooled items)", "neg (pooled items)"]
        .map(String::from)
        .to_vec();
    let rows = by_mode[0]
        .iter()
        .map(|(system, f)| {
            let p = &by_mode[1][system];
            vec![system.to_string(), f.clients.to_string(), fmt2(f.positive), fmt2(f.negative), fmt2(p.positive), fmt2(p.negative)]
        })
        .collect::<Vec<_>>();
    Ok(format!("{}{AGGREGATION_CAVEAT}\n", format_table(&headers, &rows)))
}

pub fn format_rubric_table(table: &RubricTable) -> String {
    let dims = table.dimension_set.dimensions();
    let mut headers = vec![table.target_kind.as_str().to_string(), "n".to_string()];
    headers.extend(dims.iter().map(|d| d.to_string()));
    let rows = table
        .means
        .iter()
        .map(|(target, row)| {
            let mut r = vec![target.clone(), table.counts[target].to_string()];
            r.extend(dims.iter().map(|d| fmt2(row[*d])));
            r
        })
        .collect::<Vec<_>>();
    format_table(&headers, &rows)
}

/// One row per labelled cell: `label  n  failures  rate`.
pub fn format_failure_table(cells: &[(String, Ratio)]) -> String {
    let headers = ["cell", "n", "failures", "rate"].map(String::from).to_vec();
    let rows = cells
        .iter()
        .map(|(label, r)| vec![label.clone(), r.denominator.to_string(), r.to_string(), fmt2(r.value())])
        .collect::<Vec<_>>();
    format_table(&headers, &rows)
}

/// Distinct systems present in `records`.
pub fn systems(records: &[PanasRecord]) -> BTreeSet<System> {
    records.iter().map(|r| r.system.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{SessionId, SessionStatus};

    fn record(pre: impl Fn(&str) -> u8, post: impl Fn(&str) -> u8) -> PanasRecord {
        PanasRecord {
            client_id: "c".into(),
            system: System::MIND,
            pre: panas_items().map(|i| (i.to_string(), pre(i))).collect(),
            post: panas_items().map(|i| (i.to_string(), post(i))).collect(),
        }
    }

    fn is_pos(item: &str) -> bool {
        POSITIVE_ITEMS.contains(&item)
    }

    #[test]
    fn identity_and_uniform_shift() {
        let d = panas_delta(&record(|_| 3, |_| 3)).unwrap();
        assert!(d.per_item.values().all(|v| *v == 0));
        assert_eq!(d.pos_mean_delta.value(), 0.0);
        let d = panas_delta(&record(|i| if is_pos(i) { 1 } else { 3 }, |i| if is_pos(i) { 2 } else { 3 })).unwrap();
        assert_eq!(d.pos_mean_delta.value(), 1.0);
        assert_eq!(d.neg_mean_delta.value(), 0.0);
    }

    #[test]
    fn validation_errors() {
        let mut r = record(|_| 3, |_| 3);
        r.pre.remove("Afraid");
        assert!(matches!(panas_delta(&r), Err(EvalError::MissingItem { .. })));
        let mut r = record(|_| 3, |_| 3);
        r.post.insert("Strong".into(), 6);
        assert!(matches!(panas_delta(&r), Err(EvalError::InvalidScore { .. })));
    }

    #[test]
    fn fluctuation_modes() {
        let mut a = record(|_| 1, |i| if is_pos(i) { 3 } else { 1 });
        a.client_id = "a".into();
        let mut b = record(|_| 1, |i| if is_pos(i) { 4 } else { 1 });
        b.client_id = "b".into();
        let s = fluctuation_summary(&[a.clone(), b], Aggregation::MeanOfClientMeans).unwrap();
        assert_eq!(s[&System::MIND].positive, 2.5);
        let one = record(|_| 3, |i| if is_pos(i) { 3 } else { 2 });
        for mode in Aggregation::ALL {
            assert_eq!(fluctuation_summary(std::slice::from_ref(&one), mode).unwrap()[&System::MIND].negative, -1.0);
        }
        assert_eq!(fluctuation_summary(&[], Aggregation::PooledItemMean), Err(EvalError::EmptyInput));
    }

    fn outcomes(failures: usize, total: usize) -> Vec<SessionOutcome> {
        (0..total)
            .map(|i| SessionOutcome {
                session_id: SessionId::new(format!("s{i}")),
                status: if i < failures { SessionStatus::MaxRoundsReached } else { SessionStatus::CompletedGoal },
                rounds: 3,
            })
            .collect()
    }

    #[test]
    fn failure_rates() {
        let r = failure_rate(&outcomes(6, 70)).unwrap();
        assert_eq!(r.to_string(), "6/70");
        assert!((r.value() - 0.0857).abs() < 1e-4);
        assert_eq!(failure_rate(&outcomes(0, 5)).unwrap().value(), 0.0);
        assert_eq!(fmt2(failure_rate(&outcomes(7, 70)).unwrap().value()), "0.10");
        assert_eq!(failure_rate(&[]), Err(EvalError::EmptyInput));
    }

    fn rubric(target: &str, dims: &[(&str, f64)]) -> RubricScore {
        RubricScore {
            rater_id: "r".into(),
            target_kind: TargetKind::Paradigm,
            target: target.into(),
            scores: dims.iter().map(|(d, v)| (d.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn rubric_means_and_mixing() {
        let six = |im| rubric("MIND", &[("IM", im), ("CO", 4.5), ("EN", 4.5), ("ER", 5.0), ("SA", 5.0), ("IN", 4.5)]);
        let t = rubric_aggregate(&[six(4.0), six(5.0)], TargetKind::Paradigm).unwrap();
        assert_eq!(t.means["MIND"]["IM"], 4.5);
        let five = rubric("SP", &[("DS", 4.0), ("CF", 4.0), ("EE", 4.0), ("PD", 4.0), ("Acc", 4.0)]);
        assert!(matches!(rubric_aggregate(&[six(4.0), five], TargetKind::Paradigm), Err(EvalError::MixedDimensionSets(_))));
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let text = "client_id,system,item,pre,post\nc1,MIND,Interested,1,2\nc1,MIND,Strong,9,2\n";
        match read_panas_csv(text.as_bytes()) {
            Err(EvalError::Csv { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("Strong"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_panas_csv("".as_bytes()), Err(EvalError::Csv { line: 1, .. })));
        assert!(matches!(read_rubric_csv("rater_id,target_kind,target,dimension,score\n".as_bytes()), Err(EvalError::Csv { .. })));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(fmt2(0.125), "0.13");
        assert_eq!(fmt2(-0.125), "-0.13");
        assert_eq!(fmt2(4.5), "4.50");
        assert_eq!(fmt2(-0.0), "0.00");
    }

    #[test]
    fn natural_order() {
        let mut v = vec!["client10", "client2", "client1"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, ["client1", "client2", "client10"]);
    }
}
