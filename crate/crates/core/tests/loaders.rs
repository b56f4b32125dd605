use std::collections::BTreeMap;
use std::path::PathBuf;

use segdst_core::data::{
    load, load_dialseg711, load_jsonl, split_dev_test, write_jsonl, DatasetBundle, DatasetFormat, DialSegOptions, Gold,
};
use segdst_core::{Conversation, Error};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn slot_states(bundle: &DatasetBundle, id: &str) -> Vec<BTreeMap<String, String>> {
    match &bundle.gold[id] {
        Gold::SlotStates { states } => states.iter().map(|s| s.state.clone()).collect(),
        other => panic!("expected slot states, got {other:?}"),
    }
}

fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn mwoz_fixture_counts_and_states() {
    for format in [DatasetFormat::Mwoz21, DatasetFormat::Mwoz24] {
        let bundle = load(fixture("mwoz_mini.json"), format).unwrap();
        assert_eq!(bundle.format, format);
        let ids: Vec<&str> = bundle.conversations.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["MUL0001.json", "PMUL0003.json", "SNG0002.json"]);
        assert_eq!(bundle.turn_count(), 6);
        assert_eq!(bundle.boundary_count(), 0);
    }

    let bundle = load(fixture("mwoz_mini.json"), DatasetFormat::Mwoz21).unwrap();
    let hotel = slot_states(&bundle, "MUL0001.json");
    assert_eq!(
        hotel[0],
        map(&[("hotel-area", "east"), ("hotel-parking", "yes"), ("hotel-pricerange", "cheap")])
    );
    assert_eq!(hotel[1]["hotel-book number_of_people"], "3");
    assert_eq!(hotel[1]["hotel-book number_of_days"], "4");
    assert_eq!(hotel[1]["hotel-book day"], "monday");
    assert_eq!(hotel[2]["train-arrive_by_time"], "19:45");
    assert_eq!(hotel[2].len(), 9);

    let food = slot_states(&bundle, "SNG0002.json");
    assert_eq!(food[0], map(&[("restaurant-area", "dontcare"), ("restaurant-food", "italian")]));
    assert_eq!(food[1]["restaurant-book time"], "19:00");

    // hospital is outside the schema and "none" means absent
    let taxi = slot_states(&bundle, "PMUL0003.json");
    assert_eq!(
        taxi[0],
        map(&[("taxi-destination", "fitzwilliam museum"), ("taxi-leave at", "17:15")])
    );

    let conv = bundle.get("MUL0001.json").unwrap();
    assert_eq!(conv.turns[0].agent.as_deref(), Some("The Allenbell is a cheap guesthouse in the east. Shall I book it?"));
    assert_eq!(conv.source["dataset"], "mwoz21");
}

#[test]
fn mwoz_odd_log_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.json");
    std::fs::write(&path, r#"{"X.json": {"log": [{"text": "hi", "metadata": {}}]}}"#).unwrap();
    assert!(matches!(load(&path, DatasetFormat::Mwoz21), Err(Error::BadDialogue { .. })));

    // a 2.2-style list of dialogues is not this layout
    std::fs::write(&path, r#"[{"dialogue_id": "X", "turns": []}]"#).unwrap();
    assert!(matches!(load(&path, DatasetFormat::Mwoz24), Err(Error::Malformed { .. })));
}

#[test]
fn dialseg_fixture_counts() {
    let bundle = load(fixture("dialseg711"), DatasetFormat::Dialseg711).unwrap();
    let ids: Vec<&str> = bundle.conversations.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, ["dlg_001", "dlg_002", "dlg_003"]);
    assert_eq!(bundle.turn_count(), 12);
    assert_eq!(bundle.boundary_count(), 3);

    let cuts = |id: &str| bundle.gold[id].boundaries().unwrap().indices().iter().copied().collect::<Vec<_>>();
    assert_eq!(cuts("dlg_001"), vec![2]);
    assert_eq!(cuts("dlg_002"), vec![1, 3]);
    assert_eq!(cuts("dlg_003"), Vec::<usize>::new());
    assert_eq!(bundle.get("dlg_003").unwrap().turns[2].agent, None);
}

#[test]
fn dialseg_separator_is_configurable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), "u1\na1\n~~~~\nu2\na2\n").unwrap();
    let default = load_dialseg711(dir.path(), &DialSegOptions::default()).unwrap();
    // with '=' separators the tildes are just another utterance
    assert_eq!(default.conversations[0].len(), 3);
    let tilde = DialSegOptions {
        separator_char: '~',
        min_run: 4,
    };
    let bundle = load_dialseg711(dir.path(), &tilde).unwrap();
    assert_eq!(bundle.conversations[0].len(), 2);
    assert_eq!(bundle.boundary_count(), 1);
}

#[test]
fn open_domain_fixture_counts() {
    let bundle = load_jsonl(fixture("open_domain.jsonl")).unwrap();
    assert_eq!(bundle.conversations.len(), 5);
    assert_eq!(bundle.turn_count(), 15);
    assert_eq!(bundle.boundary_count(), 4);
    assert!(bundle.gold.values().all(|g| matches!(g, Gold::Segments(_))));
}

#[test]
fn jsonl_round_trip() {
    for (name, format) in [
        ("open_domain.jsonl", DatasetFormat::Jsonl),
        ("mwoz_mini.json", DatasetFormat::Mwoz24),
        ("dialseg711", DatasetFormat::Dialseg711),
    ] {
        let original = load(fixture(name), format).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&original, &mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        std::fs::write(&path, &buf).unwrap();
        let back = load_jsonl(&path).unwrap();
        assert_eq!(back.conversations, original.conversations, "{name}");
        assert_eq!(back.gold, original.gold, "{name}");
    }
}

#[test]
fn jsonl_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let good = r#"{"id":"a","turns":[{"user":"hi","agent":"hello"}],"gold":null}"#;
    std::fs::write(&path, format!("{good}\n{{\"id\": 3}}\n")).unwrap();
    match load_jsonl(&path) {
        Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }

    std::fs::write(&path, format!("{good}\n{good}\n")).unwrap();
    assert!(matches!(load_jsonl(&path), Err(Error::DuplicateId(id)) if id == "a"));

    let wrong_len = r#"{"id":"b","turns":[{"user":"hi","agent":null}],"gold":{"kind":"boundaries","length":2,"indices":[1]}}"#;
    std::fs::write(&path, format!("{wrong_len}\n")).unwrap();
    assert!(matches!(load_jsonl(&path), Err(Error::Malformed { line: 1, .. })));

    let bad_index = r#"{"id":"b","turns":[{"user":"hi","agent":"x"},{"user":"a","agent":null}],"gold":{"kind":"boundaries","length":2,"indices":[2]}}"#;
    std::fs::write(&path, format!("{bad_index}\n")).unwrap();
    assert!(matches!(load_jsonl(&path), Err(Error::Malformed { line: 1, .. })));
}

fn synthetic(n: usize) -> DatasetBundle {
    let convs = (0..n)
        .map(|i| Conversation::from_pairs(format!("conv{i:04}"), [("hi".to_string(), None)]).unwrap())
        .collect();
    DatasetBundle::new(convs, BTreeMap::new(), DatasetFormat::Jsonl).unwrap()
}

#[test]
fn split_sizes_and_determinism() {
    let bundle = synthetic(484);
    let (dev, test) = split_dev_test(&bundle, 150, 13).unwrap();
    assert_eq!((dev.conversations.len(), test.conversations.len()), (150, 334));
    assert!(dev.conversations.iter().all(|c| test.get(&c.id).is_none()));

    let (dev2, _) = split_dev_test(&bundle, 150, 13).unwrap();
    assert_eq!(dev.conversations, dev2.conversations);
    let (dev3, _) = split_dev_test(&bundle, 150, 14).unwrap();
    assert_ne!(dev.conversations, dev3.conversations);

    assert!(matches!(split_dev_test(&bundle, 484, 0), Err(Error::SplitRange { .. })));
}
