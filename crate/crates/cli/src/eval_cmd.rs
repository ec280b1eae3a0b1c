use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use mind_core::eval::{
    failure_rate, format_delta_table, format_failure_table, format_fluctuation_table, format_rubric_table, panas_delta,
    read_panas_csv, read_rubric_csv, rubric_aggregate, Ratio, TargetKind,
};
use mind_core::transcript::Transcript;
use mind_core::SessionOutcome;

use crate::error::{CliError, CliResult};
use crate::{EvalArgs, GroupBy};

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn at(path: &Path) -> impl Fn(mind_core::eval::EvalError) -> CliError + '_ {
    move |e| CliError::data(format!("{}: {e}", path.display()))
}

fn panas_section(path: &Path) -> CliResult<String> {
    let records = read_panas_csv(open(path)?).map_err(at(path))?;
    let deltas = records.iter().map(panas_delta).collect::<Result<Vec<_>, _>>().map_err(at(path))?;
    let mut out = String::from("== PANAS deltas (post - pre) ==\n");
    out.push_str(&format_delta_table(&deltas));
    out.push_str("\n== Emotional fluctuation by system ==\n");
    out.push_str(&format_fluctuation_table(&records).map_err(at(path))?);
    Ok(out)
}

fn rubric_section(path: &Path, group_by: GroupBy) -> CliResult<String> {
    let scores = read_rubric_csv(open(path)?).map_err(at(path))?;
    let kind = match group_by {
        GroupBy::Paradigm => TargetKind::Paradigm,
        GroupBy::Theme => TargetKind::Theme,
        GroupBy::Model => TargetKind::Model,
    };
    let table = rubric_aggregate(&scores, kind).map_err(at(path))?;
    Ok(format!("== Rubric means by {} ==\n{}", kind.as_str(), format_rubric_table(&table)))
}

/// Failure rates per (paradigm, ablation, facilitation) over finished transcripts.
fn failure_section(dir: &Path) -> CliResult<String> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("jsonl"))
        .collect();
    paths.sort();
    let mut cells: BTreeMap<String, Vec<SessionOutcome>> = BTreeMap::new();
    let mut unfinished = 0;
    for path in &paths {
        let t = Transcript::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let h = &t.header;
        let cell = format!(
            "{} ablation={} facilitation={}",
            h.paradigm,
            h.ablation.as_str(),
            if h.facilitation { "on" } else { "off" }
        );
        match t.outcome() {
            Some(o) => cells.entry(cell).or_default().push(o),
            None => unfinished += 1,
        }
    }
    if cells.is_empty() {
        return Err(CliError::data(format!("{}: no finished transcripts", dir.display())));
    }
    let rows: Vec<(String, Ratio)> = cells
        .into_iter()
        .map(|(cell, outcomes)| (cell, failure_rate(&outcomes).expect("cells are non-empty")))
        .collect();
    let mut out = String::from("== Failure rates ==\n");
    out.push_str(&format_failure_table(&rows));
    if unfinished > 0 {
        out.push_str(&format!("skipped {unfinished} unfinished transcript(s)\n"));
    }
    Ok(out)
}

pub fn eval(args: EvalArgs) -> CliResult<()> {
    if args.panas.is_none() && args.rubric.is_none() && args.transcripts.is_none() {
        return Err(CliError::config("give at least one of --panas, --rubric or --transcripts"));
    }
    let mut sections = Vec::new();
    if let Some(p) = &args.panas {
        sections.push(panas_section(p)?);
    }
    if let Some(p) = &args.rubric {
        sections.push(rubric_section(p, args.group_by)?);
    }
    if let Some(d) = &args.transcripts {
        sections.push(failure_section(d)?);
    }
    print!("{}", sections.join("\n"));
    Ok(())
}
