use std::fs::File;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use proptest::prelude::*;

use appprint::applog::{
    build_vocabulary, compute_frequencies, parse_log, split_days, AppEvent, AppVocabulary, EventLog, FrequencyTable,
    Owner, Scope,
};
use appprint::synthgen::{generate_log, package_name, DiurnalBump, UserProfile};

fn at(day: u32, minute: u32) -> NaiveDateTime {
    let date = NaiveDate::from_ymd_opt(2012, 3, day).unwrap();
    NaiveDateTime::new(date, NaiveTime::from_hms_opt(minute / 60, minute % 60, 0).unwrap())
}

fn fixture(name: &str) -> File {
    File::open(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/").to_string() + name).unwrap()
}

#[test]
fn top50_fixture_loads_as_global_table() {
    let (vocab, table) = FrequencyTable::read_csv(fixture("top50_global.csv"), Scope::Global, Owner::Dataset).unwrap();
    assert_eq!(vocab.len(), 50);
    let gapps = vocab.encode("com.google.process.gapps").unwrap();
    assert_eq!(table.get(gapps), 0.091300257);
    assert_eq!(table.get(vocab.encode("com.espn.score_center").unwrap()), 0.013336719);
    let mut sorted = vocab.names().to_vec();
    sorted.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
    assert_eq!(vocab.names(), &sorted[..]);
}

#[test]
fn written_tables_read_back() {
    let (vocab, table) = FrequencyTable::read_csv(fixture("top50_global.csv"), Scope::Global, Owner::Dataset).unwrap();
    let mut buf = Vec::new();
    table.write_csv(&vocab, &mut buf).unwrap();
    let (vocab2, table2) = FrequencyTable::read_csv(&buf[..], Scope::Global, Owner::Dataset).unwrap();
    assert_eq!(vocab, vocab2);
    assert_eq!(table.values, table2.values);
}

#[test]
fn diurnal_bump_holds_its_events() {
    let v = 10;
    let profile = UserProfile {
        user_id: "u".into(),
        preference: vec![1.0 / v as f64; v],
        diurnal: vec![DiurnalBump { mean: 1260.0, std_dev: 30.0, weight: 1.0 }],
        daily_event_rate: 1000.0,
    };
    let log = generate_log(&profile, 100, 4).unwrap();
    assert!(log.len() > 90_000);
    let inside = log.events.iter().filter(|e| (1140..=1380).contains(&e.minute_of_day())).count();
    assert!(inside as f64 / log.len() as f64 >= 0.95);
}

#[test]
fn local_frequencies_converge_to_preferences() {
    let preference = vec![0.5, 0.2, 0.15, 0.1, 0.05];
    let profile = UserProfile {
        user_id: "u".into(),
        preference: preference.clone(),
        diurnal: vec![
            DiurnalBump { mean: 480.0, std_dev: 60.0, weight: 0.5 },
            DiurnalBump { mean: 1200.0, std_dev: 90.0, weight: 0.5 },
        ],
        daily_event_rate: 1000.0,
    };
    let log = generate_log(&profile, 100, 9).unwrap();
    let logs = vec![log];
    let vocab = build_vocabulary(&logs).unwrap();
    let table = compute_frequencies(&logs, &vocab, Scope::Local, Owner::User("u".into())).unwrap();
    for (i, p) in preference.iter().enumerate() {
        let got = table.get(vocab.encode(&package_name(i, preference.len())).unwrap());
        assert!((got - p).abs() < 0.02, "app {i}: {got} vs {p}");
    }
}

#[test]
fn perday_table_of_a_missing_day_is_empty() {
    let logs = vec![EventLog::new("u", vec![AppEvent::new(at(2, 10), "a").unwrap()])];
    let vocab = build_vocabulary(&logs).unwrap();
    let t = compute_frequencies(&logs, &vocab, Scope::PerDay, Owner::UserDay("u".into(), at(3, 0).date())).unwrap();
    assert!(t.empty);
    assert!(t.values.iter().all(|&v| v == 0.0));
}

#[test]
fn log_text_round_trip() {
    let events = vec![AppEvent::new(at(2, 5), "com.x").unwrap(), AppEvent::new(at(4, 1439), "com.y:push").unwrap()];
    let log = EventLog::new("u", events);
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    assert_eq!(parse_log(&buf[..], "u").unwrap(), log);
}

fn arb_log() -> impl Strategy<Value = EventLog> {
    prop::collection::vec((1u32..=28, 0u32..1440, 0usize..6), 1..200).prop_map(|raw| {
        let events = raw.into_iter().map(|(d, m, a)| AppEvent::new(at(d, m), format!("app.{a}")).unwrap()).collect();
        EventLog::new("u", events)
    })
}

proptest! {
    #[test]
    fn frequency_tables_are_normalized(log in arb_log()) {
        let logs = vec![log];
        let vocab = build_vocabulary(&logs).unwrap();
        let g = compute_frequencies(&logs, &vocab, Scope::Global, Owner::Dataset).unwrap();
        prop_assert!((g.values.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (day, _) in split_days(&logs[0]) {
            let t = compute_frequencies(&logs, &vocab, Scope::PerDay, Owner::UserDay("u".into(), day)).unwrap();
            prop_assert!((t.values.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(t.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn split_days_partitions_the_log(log in arb_log()) {
        let days = split_days(&log);
        prop_assert_eq!(days.iter().map(|(_, e)| e.len()).sum::<usize>(), log.len());
        prop_assert!(days.windows(2).all(|w| w[0].0 < w[1].0));
        for (day, events) in &days {
            prop_assert!(!events.is_empty());
            prop_assert!(events.iter().all(|e| e.day() == *day));
        }
    }

    #[test]
    fn vocabulary_is_bytewise_sorted(names in prop::collection::vec("[a-zA-Z._:]{1,8}", 1..30)) {
        let vocab = AppVocabulary::from_names(names.iter().cloned()).unwrap();
        for w in vocab.names().windows(2) {
            prop_assert!(w[0].as_bytes() < w[1].as_bytes());
        }
        for n in &names {
            let i = vocab.encode(n).unwrap();
            prop_assert_eq!(vocab.decode(i), Some(n.as_str()));
        }
    }
}
