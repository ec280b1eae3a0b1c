use std::collections::BTreeMap;
use std::sync::OnceLock;

use mind_core::parse::{fill_format_block, parse_reversal_report, parse_sections, render_reversal_report, ReversalPoint, SectionSchema};
use mind_core::{TemplateKey, TemplateSet};
use proptest::prelude::*;

fn builtin() -> &'static TemplateSet {
    static SET: OnceLock<TemplateSet> = OnceLock::new();
    SET.get_or_init(TemplateSet::builtin)
}

fn section_text() -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z0-9][A-Za-z0-9 ,.!?'()-]{0,60}", 1..4)
        .prop_map(|lines| lines.iter().map(|l| l.trim()).collect::<Vec<_>>().join("\n"))
        .prop_filter("non-empty", |s| !s.trim().is_empty())
}

fn labels(key: TemplateKey) -> Vec<&'static str> {
    let schema = SectionSchema::for_key(key);
    schema.required.iter().chain(schema.optional).copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn format_block_values_survive_render_and_parse(
        key_idx in 0..TemplateKey::ALL.len(),
        values in prop::collection::vec(section_text(), 6),
    ) {
        let templates = builtin();
        let key = TemplateKey::ALL[key_idx];
        let labels = labels(key);
        let filled: BTreeMap<&str, String> = labels.iter().copied().zip(values.iter().cloned()).collect();
        let answer = fill_format_block(templates.get(key), &filled);
        let parsed = parse_sections(key, &answer).unwrap();
        for label in &labels {
            prop_assert_eq!(parsed.get(label), Some(filled[label].as_str()), "{:?} {}", key, label);
        }
    }

    #[test]
    fn reversal_reports_round_trip(points in prop::collection::vec((section_text(), section_text()), 1..8)) {
        let points: Vec<ReversalPoint> = points
            .into_iter()
            .enumerate()
            .map(|(i, (thoughts, reasons))| ReversalPoint { round: i as u32 + 1, thoughts, reasons })
            .collect();
        let text = render_reversal_report(&points);
        prop_assert_eq!(parse_reversal_report(&text, points.len()).unwrap(), points);
    }
}

#[test]
fn every_template_key_is_exercised() {
    let templates = TemplateSet::builtin();
    assert_eq!(templates.keys().count(), 15);
    for key in TemplateKey::ALL {
        assert!(!labels(key).is_empty());
        assert!(!templates.get(key).format_block().is_empty(), "{key:?}");
    }
}
