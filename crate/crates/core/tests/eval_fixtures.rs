use std::fs::File;
use std::path::PathBuf;

use mind_core::eval::{
    fluctuation_summary, format_delta_table, format_fluctuation_table, format_rubric_table, panas_delta, panas_items,
    read_panas_csv, read_rubric_csv, round2, rubric_aggregate, Aggregation, PanasRecord, System, TargetKind,
    AGGREGATION_CAVEAT, CONTENT_DIMENSIONS,
};

fn fixture(name: &str) -> File {
    File::open(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)).unwrap()
}

/// Per-client deltas as published, items in questionnaire order.
const CLIENT_DELTAS: [(&str, [i32; 20]); 8] = [
    ("client1", [1, 1, 2, 1, 1, 0, 1, 1, 1, 1, 1, 0, -1, 0, -1, 0, -1, -1, -1, -1]),
    ("client2", [2, 0, 1, 1, 0, 1, -1, -1, 1, 0, -2, -1, 0, -1, 1, 2, -1, 0, -1, 0]),
    ("client3", [3, 3, 3, 0, 2, 2, 3, 3, 3, 3, -2, -2, -2, -4, -3, -3, -1, -2, -2, -2]),
    ("client4", [2, 2, 1, 2, 3, 2, 3, 2, 2, 1, -3, -2, -1, -2, -2, -3, 0, -2, -2, -2]),
    ("client5", [3, 2, 4, 2, 2, 1, 3, 3, 3, 2, -2, -3, -2, -3, -3, -2, -2, -3, -3, -3]),
    ("client6", [2, 2, 3, 2, 3, 2, 3, 3, 2, 2, -2, -3, -2, -3, -2, -3, -1, -3, -3, -2]),
    ("client7", [-1, -1, -1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, -1, 0, 1, 1, 1]),
    ("client8", [0, -1, 0, 0, 0, 0, 0, 0, 0, -1, 0, 0, 0, 0, 0, 1, -1, -1, 1, -1]),
];

fn clients() -> Vec<PanasRecord> {
    read_panas_csv(fixture("panas_clients.csv")).unwrap()
}

#[test]
fn client_deltas_are_reproduced_cell_by_cell() {
    let records = clients();
    assert_eq!(records.len(), 8);
    for (record, (client, expected)) in records.iter().zip(CLIENT_DELTAS) {
        assert_eq!(record.client_id, client);
        let d = panas_delta(record).unwrap();
        let got: Vec<i32> = panas_items().map(|i| d.item(i).unwrap()).collect();
        assert_eq!(got, expected, "{client}");
    }
    let by_id = |id: &str| panas_delta(records.iter().find(|r| r.client_id == id).unwrap()).unwrap();
    assert_eq!(by_id("client5").item("Strong"), Some(4));
    assert_eq!(by_id("client1").item("Distressed"), Some(1));
    assert_eq!(by_id("client7").item("Interested"), Some(-1));
}

#[test]
fn subscale_means_are_antisymmetric() {
    for record in clients() {
        let d = panas_delta(&record).unwrap();
        let s = panas_delta(&record.swapped()).unwrap();
        assert_eq!(s.pos_mean_delta, -d.pos_mean_delta);
        assert_eq!(s.neg_mean_delta, -d.neg_mean_delta);
        for (item, v) in &d.per_item {
            assert_eq!(s.per_item[item], -v);
        }
    }
}

#[test]
fn both_aggregations_are_reported_and_neither_matches_the_published_summary() {
    let records = clients();
    for mode in Aggregation::ALL {
        let summary = fluctuation_summary(&records, mode).unwrap();
        let mind = summary[&System::MIND];
        assert_eq!((round2(mind.positive), round2(mind.negative)), (2.45, -2.5));
        assert_ne!((round2(mind.positive), round2(mind.negative)), (1.46, -0.65));
        assert_eq!(summary.len(), 4);
    }
    let table = format_fluctuation_table(&records).unwrap();
    assert!(table.contains(AGGREGATION_CAVEAT));
    assert!(table.contains("MIND"));
    assert!(format_delta_table(&records.iter().map(|r| panas_delta(r).unwrap()).collect::<Vec<_>>()).contains("client8"));
}

#[test]
fn single_client_summary_equals_its_own_means() {
    let records = clients();
    let one = &records[4..5];
    let d = panas_delta(&one[0]).unwrap();
    let s = fluctuation_summary(one, Aggregation::MeanOfClientMeans).unwrap();
    assert_eq!(s[&System::MIND].positive, d.pos_mean_delta.value());
    assert_eq!(s[&System::MIND].negative, d.neg_mean_delta.value());
}

#[test]
fn aggregates_ignore_record_order() {
    let records = clients();
    let mut reversed = records.clone();
    reversed.reverse();
    for mode in Aggregation::ALL {
        assert_eq!(fluctuation_summary(&records, mode).unwrap(), fluctuation_summary(&reversed, mode).unwrap());
    }
}

#[test]
fn client_ratings_reproduce_the_mind_row() {
    let scores = read_rubric_csv(fixture("client_ratings.csv")).unwrap();
    let table = rubric_aggregate(&scores, TargetKind::Paradigm).unwrap();
    let mind: Vec<f64> = CONTENT_DIMENSIONS.iter().map(|d| round2(table.means["MIND"][*d])).collect();
    assert_eq!(mind, [5.0, 4.5, 4.5, 5.0, 5.0, 4.5]);
    let rendered = format_rubric_table(&table);
    assert!(rendered.lines().any(|l| l.starts_with("MIND") && l.ends_with("5.00  4.50  4.50  5.00  5.00  4.50")));
}

#[test]
fn theme_ratings_accept_quarter_points() {
    let scores = read_rubric_csv(fixture("theme_ratings.csv")).unwrap();
    let table = rubric_aggregate(&scores, TargetKind::Theme).unwrap();
    assert_eq!(table.means.len(), 7);
    assert_eq!(table.means["WorkIssues"]["IM"], 3.25);
}
