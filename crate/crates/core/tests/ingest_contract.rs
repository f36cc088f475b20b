use std::collections::HashMap;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use ttifair_core::ingest::{
    count_labels, distribution_of, merge_layers, read_corrections, read_records,
    write_corrections, write_records, CorrectionEvent, CorrectionField, FieldValue, ImageRecord,
    Label, Layer,
};
use ttifair_core::{load_config, save_config, validate_config, EvalConfig};

const RACES: [&str; 6] = [
    "Asian",
    "Black",
    "Caucasian",
    "Indian",
    "Latino",
    "Middle Eastern",
];

fn rec(i: usize, race: usize) -> ImageRecord {
    ImageRecord {
        image_id: format!("img{i}"),
        job_id: "t0-q00-div-s00".into(),
        query: "doctor".into(),
        conditioned_value: None,
        seed: 9,
        race: Label::Labeled(RACES[race].into()),
        age: Label::Labeled(40.0),
        gender: Label::Labeled("man".into()),
        relevance: Label::Labeled(0.5),
        quality: Label::Labeled(2),
        caption: None,
        layer: Layer::Model,
    }
}

fn arb_event(n_images: usize) -> impl Strategy<Value = CorrectionEvent> {
    let value = prop_oneof![
        Just(FieldValue::Unlabeled),
        (0..6usize).prop_map(|r| FieldValue::Text(RACES[r].into())),
        (15..66u32).prop_map(|a| FieldValue::Number(a as f64)),
    ];
    let field = prop_oneof![Just(CorrectionField::Race), Just(CorrectionField::Age)];
    (0..n_images + 2, field, value, 0..10_000i64).prop_map(move |(img, field, v, t)| {
        // keep values in the field's domain
        let v = match (field, v) {
            (CorrectionField::Race, FieldValue::Number(_)) => FieldValue::Text("Latino".into()),
            (CorrectionField::Age, FieldValue::Text(_)) => FieldValue::Number(33.0),
            (_, v) => v,
        };
        CorrectionEvent {
            event_id: None,
            reviewer_id: "r".into(),
            image_id: format!("img{img}"),
            field,
            old_value: FieldValue::Unlabeled,
            new_value: v,
            timestamp: Utc.timestamp_opt(1_700_000_000 + t, 0).unwrap(),
        }
    })
}

fn model(races: &[usize]) -> Vec<ImageRecord> {
    races.iter().enumerate().map(|(i, r)| rec(i, *r)).collect()
}

proptest! {
    #[test]
    fn merge_is_idempotent(
        races in prop::collection::vec(0..6usize, 1..20),
        log in prop::collection::vec(arb_event(20), 0..40),
    ) {
        let m = model(&races);
        let once = merge_layers(&m, &log);
        let twice = merge_layers(&once.records, &log);
        prop_assert_eq!(&once.records, &twice.records);
        // replaying the log twice in a row is the same as once
        let doubled: Vec<_> = log.iter().chain(log.iter()).cloned().collect();
        prop_assert_eq!(&merge_layers(&m, &doubled).records, &once.records);
    }

    #[test]
    fn last_write_wins_per_field(
        races in prop::collection::vec(0..6usize, 1..20),
        log in prop::collection::vec(arb_event(20), 0..40),
    ) {
        let m = model(&races);
        let merged = merge_layers(&m, &log).records;
        let mut last: HashMap<(String, CorrectionField), FieldValue> = HashMap::new();
        for ev in &log {
            last.insert((ev.image_id.clone(), ev.field), ev.new_value.clone());
        }
        for (orig, out) in m.iter().zip(&merged) {
            let race = match last.get(&(orig.image_id.clone(), CorrectionField::Race)) {
                None => orig.race.clone(),
                Some(FieldValue::Text(t)) => Label::Labeled(t.clone()),
                Some(_) => Label::Unlabeled,
            };
            let age = match last.get(&(orig.image_id.clone(), CorrectionField::Age)) {
                None => orig.age.clone(),
                Some(FieldValue::Number(n)) => Label::Labeled(*n),
                Some(_) => Label::Unlabeled,
            };
            prop_assert_eq!(&out.race, &race);
            prop_assert_eq!(&out.age, &age);
            // untouched fields stay as they were
            prop_assert_eq!(&out.gender, &orig.gender);
            prop_assert_eq!(&out.quality, &orig.quality);
            let touched = log.iter().any(|e| e.image_id == orig.image_id);
            prop_assert_eq!(out.layer == Layer::Human, touched);
        }
    }

    #[test]
    fn dash_excludes_from_distribution(
        races in prop::collection::vec(0..6usize, 2..30),
        dashed in prop::collection::vec(any::<bool>(), 30),
    ) {
        let scheme = EvalConfig::occupation_study().attribute;
        let m = model(&races);
        let log: Vec<CorrectionEvent> = m
            .iter()
            .zip(&dashed)
            .filter(|(_, d)| **d)
            .map(|(r, _)| CorrectionEvent {
                event_id: None,
                reviewer_id: "r".into(),
                image_id: r.image_id.clone(),
                field: CorrectionField::Race,
                old_value: FieldValue::Unlabeled,
                new_value: FieldValue::Unlabeled,
                timestamp: Utc.timestamp_opt(0, 0).unwrap(),
            })
            .collect();
        let merged = merge_layers(&m, &log).records;
        let kept: Vec<&ImageRecord> = m.iter().zip(&dashed).filter(|(_, d)| !**d).map(|(r, _)| r).collect();
        let counts = count_labels(&merged, &scheme).unwrap();
        prop_assert_eq!(counts.unlabeled, log.len());
        prop_assert_eq!(counts.labeled(), kept.len());
        if !kept.is_empty() {
            let a = distribution_of(&merged, &scheme).unwrap();
            let b = distribution_of(kept.iter().copied(), &scheme).unwrap();
            prop_assert_eq!(a.weights(), b.weights());
            let s: f64 = a.weights().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logs_round_trip_through_jsonl(log in prop::collection::vec(arb_event(5), 0..20)) {
        let mut buf = Vec::new();
        write_corrections(&log, &mut buf).unwrap();
        prop_assert_eq!(read_corrections(&buf[..]).unwrap(), log);
    }
}

#[test]
fn records_round_trip_through_jsonl() {
    let mut recs = model(&[0, 1, 2, 3]);
    recs[1].race = Label::Unlabeled;
    recs[2].quality = Label::Unlabeled;
    let mut buf = Vec::new();
    write_records(&recs, &mut buf).unwrap();
    let back = read_records(&buf[..]).unwrap();
    assert!(back.errors.is_empty());
    assert_eq!(back.records, recs);
}

#[test]
fn config_round_trips_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = EvalConfig::occupation_study();
    for name in ["c.toml", "c.json"] {
        let path = dir.path().join(name);
        save_config(&cfg, &path).unwrap();
        let back = load_config(&path).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
    }
    assert!(validate_config(&cfg).is_empty());
}
