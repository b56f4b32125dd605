//! From per-turn annotations to the joint prediction: boundaries plus one
//! state per segment.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::parse::{RawTurnSlots, TurnAnnotation};
use crate::record::{DialogueStateRecord, Relation, SegmentState, TurnSlotState};
use crate::schema::{LabelSchema, SlotSpec, DOMAIN_SLOT, INTENT_SLOT};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconstruction {
    pub record: DialogueStateRecord,
    pub diagnostics: Vec<String>,
}

/// Rebuilds segments from per-turn relation labels.
///
/// A boundary is placed before every turn `i >= 2` labelled `NO`. Turns
/// without an annotation (parse failures) or without a relation continue
/// the current segment and cast no vote. Each segment's intent and domain
/// is the majority label among its turns; ties go to the label seen first.
pub fn reconstruct_segments(annotations: &[TurnAnnotation], t: usize) -> Result<Reconstruction> {
    if t == 0 {
        return Err(Error::EmptyConversation);
    }
    let mut by_turn: Vec<Option<&TurnAnnotation>> = vec![None; t + 1];
    for a in annotations {
        if (1..=t).contains(&a.turn_index) && by_turn[a.turn_index].is_none() {
            by_turn[a.turn_index] = Some(a);
        }
    }

    let mut diagnostics = Vec::new();
    let mut cuts = Vec::new();
    for (turn, ann) in by_turn.iter().enumerate().skip(2) {
        match ann.and_then(|a| a.preceding_topical_relation) {
            Some(Relation::No) => cuts.push(turn - 1),
            Some(Relation::Yes) => {}
            None => diagnostics.push(format!(
                "turn {turn}: no relation label, continuing the current segment"
            )),
        }
    }
    if by_turn[1].is_none() {
        diagnostics.push("turn 1: no annotation".to_string());
    }

    let mut segments = Vec::with_capacity(cuts.len() + 1);
    let mut start = 1;
    for end in cuts.iter().copied().chain(std::iter::once(t)) {
        let members = &by_turn[start..=end];
        let mut seg = SegmentState::new(start, end);
        let intents = members.iter().flatten().filter_map(|a| a.intent.as_deref());
        if let Some(intent) = majority(intents) {
            seg.slot_values.insert(INTENT_SLOT.into(), intent.into());
        }
        let domains = members.iter().flatten().filter_map(|a| a.domain.as_deref());
        if let Some(domain) = majority(domains) {
            seg.slot_values.insert(DOMAIN_SLOT.into(), domain.into());
        }
        segments.push(seg);
        start = end + 1;
    }

    Ok(Reconstruction {
        record: DialogueStateRecord::from_segments(t, segments)?,
        diagnostics,
    })
}

/// Most frequent label; among equally frequent labels, the one that occurs
/// first.
pub fn majority<'a>(labels: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for label in labels {
        match counts.iter_mut().find(|(l, _)| *l == label) {
            Some((_, n)) => *n += 1,
            None => counts.push((label, 1)),
        }
    }
    // max_by_key keeps the last maximum, so scan in reverse
    counts
        .into_iter()
        .rev()
        .max_by_key(|&(_, n)| n)
        .map(|(l, _)| l)
}

/// Collapses each turn's raw slot list, keeping the last value per slot.
/// Across turns the model's own cumulative list is taken as-is.
pub fn resolve_cumulative_state(states: &[RawTurnSlots]) -> Vec<TurnSlotState> {
    states
        .iter()
        .map(|raw| TurnSlotState {
            turn_index: raw.turn_index,
            state: raw
                .entries
                .iter()
                .map(|e| (e.slot.clone(), e.value.clone()))
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedValue {
    pub value: String,
    pub diagnostic: Option<String>,
}

static TIME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{1,2})(?::(\d{2}))?\s*(am|pm|a\.m\.|p\.m\.)?$").unwrap()
});

const DONTCARE: [&str; 4] = ["dont care", "don't care", "do not care", "dontcare"];

/// Canonical form used when comparing slot values.
///
/// Lowercases, trims and collapses whitespace; maps the "don't care"
/// spellings to `dontcare`; rewrites clock times as 24-hour `HH:MM`; and
/// snaps categorical slots to the schema's spelling of a matching valid
/// value. A categorical value with no match is kept and flagged.
pub fn normalize_value(slot: &SlotSpec, value: &str) -> NormalizedValue {
    let mut v = value
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    if DONTCARE.contains(&v.as_str()) {
        v = "dontcare".to_string();
    } else if let Some(time) = canonical_time(&v) {
        v = time;
    }

    let mut diagnostic = None;
    if let Some(valid) = slot.valid_values.as_ref().filter(|vals| !vals.is_empty()) {
        match valid.iter().find(|c| c.to_lowercase() == v) {
            Some(c) => v = c.clone(),
            None => {
                diagnostic = Some(format!(
                    "value `{v}` is not a valid value of categorical slot {}",
                    slot.name
                ))
            }
        }
    }
    NormalizedValue {
        value: v,
        diagnostic,
    }
}

/// `H:MM` (24-hour) or `H[:MM] am|pm` to `HH:MM`. Bare numbers are not
/// times.
fn canonical_time(v: &str) -> Option<String> {
    let cap = TIME.captures(v)?;
    let hour: u32 = cap[1].parse().ok()?;
    let minute: u32 = match cap.get(2) {
        Some(m) => m.as_str().parse().ok()?,
        None => 0,
    };
    if minute > 59 {
        return None;
    }
    let hour = match cap.get(3).map(|m| m.as_str().starts_with('p')) {
        Some(pm) => {
            if !(1..=12).contains(&hour) {
                return None;
            }
            hour % 12 + if pm { 12 } else { 0 }
        }
        None => {
            cap.get(2)?;
            if hour > 23 {
                return None;
            }
            hour
        }
    };
    Some(format!("{hour:02}:{minute:02}"))
}

/// Normalizes every value of a slot map against the schema. Slots unknown
/// to the schema get the free-text rules.
pub fn normalize_state(
    state: &BTreeMap<String, String>,
    schema: &LabelSchema,
) -> (BTreeMap<String, String>, Vec<String>) {
    let mut diagnostics = Vec::new();
    let out = state
        .iter()
        .map(|(slot, value)| {
            let spec = schema
                .slot(slot)
                .cloned()
                .unwrap_or_else(|| SlotSpec::free(slot.clone(), ""));
            let n = normalize_value(&spec, value);
            diagnostics.extend(n.diagnostic);
            (slot.clone(), n.value)
        })
        .collect();
    (out, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::validate_record;
    use proptest::prelude::*;

    fn ann(turn: usize, rel: Relation, intent: &str, domain: &str) -> TurnAnnotation {
        TurnAnnotation {
            turn_index: turn,
            summary: None,
            preceding_topical_relation: Some(rel),
            intent: Some(intent.into()),
            domain: Some(domain.into()),
        }
    }

    fn from_labels(labels: &[Relation]) -> Vec<TurnAnnotation> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &r)| ann(i + 1, r, "ANALYSIS", "GAMES"))
            .collect()
    }

    use Relation::{No, Yes};

    #[test]
    fn single_turn() {
        let r = reconstruct_segments(&from_labels(&[No]), 1).unwrap();
        assert!(r.record.boundaries.indices().is_empty());
        assert_eq!(r.record.segments.len(), 1);
        assert_eq!((r.record.segments[0].start, r.record.segments[0].end), (1, 1));
    }

    #[test]
    fn boundaries_from_no_labels() {
        let r = reconstruct_segments(&from_labels(&[No, Yes, No, Yes, Yes]), 5).unwrap();
        assert_eq!(r.record.boundaries.indices().iter().copied().collect::<Vec<_>>(), vec![2]);
        let spans: Vec<_> = r.record.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(spans, vec![(1, 2), (3, 5)]);
        assert!(validate_record(&r.record, 5).is_empty());
    }

    #[test]
    fn segment_label_is_majority() {
        let anns = vec![
            ann(1, No, "ANALYSIS", "GAMES"),
            ann(2, Yes, "ANALYSIS", "NEWS"),
            ann(3, Yes, "CREATION", "NEWS"),
        ];
        let r = reconstruct_segments(&anns, 3).unwrap();
        assert_eq!(r.record.segments[0].slot_values[INTENT_SLOT], "ANALYSIS");
        assert_eq!(r.record.segments[0].slot_values[DOMAIN_SLOT], "NEWS");
    }

    #[test]
    fn majority_ties_go_to_first_seen() {
        assert_eq!(majority(["B", "A", "A", "B"]), Some("B"));
        assert_eq!(majority(["C", "A", "B"]), Some("C"));
        assert_eq!(majority(std::iter::empty()), None);
    }

    #[test]
    fn failed_turn_continues_segment() {
        let anns = vec![ann(1, No, "ANALYSIS", "GAMES"), ann(3, No, "CREATION", "NEWS")];
        let r = reconstruct_segments(&anns, 3).unwrap();
        let spans: Vec<_> = r.record.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(spans, vec![(1, 2), (3, 3)]);
        assert_eq!(r.diagnostics.len(), 1);
        assert!(reconstruct_segments(&[], 0).is_err());
        // every turn failed: one segment, no labels
        let r = reconstruct_segments(&[], 2).unwrap();
        assert_eq!(r.record.segments.len(), 1);
        assert!(r.record.segments[0].slot_values.is_empty());
    }

    #[test]
    fn cumulative_state_keeps_latest_duplicate() {
        use crate::parse::SlotEntry;
        let raw = vec![RawTurnSlots {
            turn_index: 1,
            entries: vec![
                SlotEntry { slot: "hotel-area".into(), value: "east".into() },
                SlotEntry { slot: "hotel-area".into(), value: "west".into() },
            ],
        }];
        let out = resolve_cumulative_state(&raw);
        assert_eq!(out[0].state.len(), 1);
        assert_eq!(out[0].state["hotel-area"], "west");
        assert!(resolve_cumulative_state(&[]).is_empty());
    }

    fn spec(name: &str) -> SlotSpec {
        LabelSchema::mwoz()
            .slot(name)
            .cloned()
            .unwrap_or_else(|| SlotSpec::free(name, ""))
    }

    #[test]
    fn normalizes_case_space_and_dontcare() {
        assert_eq!(normalize_value(&spec("hotel-area"), "East ").value, "east");
        assert_eq!(normalize_value(&spec("hotel-parking"), "don't care").value, "dontcare");
        assert_eq!(normalize_value(&spec("hotel-name"), "  A  and   B ").value, "a and b");
        let odd = normalize_value(&spec("hotel-area"), "downtown");
        assert_eq!(odd.value, "downtown");
        assert!(odd.diagnostic.is_some());
        assert_eq!(normalize_value(&spec("hotel-book number_of_people"), "3").value, "3");
    }

    /// Hand-written table of clock readings; independent of the regex path.
    const TIMES: &[(&str, &str)] = &[
        ("7:45 pm", "19:45"),
        ("7:45pm", "19:45"),
        ("7:45 p.m.", "19:45"),
        ("7:45 am", "07:45"),
        ("12:00 am", "00:00"),
        ("12:30 pm", "12:30"),
        ("12 pm", "12:00"),
        ("11 PM", "23:00"),
        ("1 am", "01:00"),
        ("19:45", "19:45"),
        ("9:05", "09:05"),
        ("00:10", "00:10"),
        ("23:59", "23:59"),
    ];

    #[test]
    fn time_table() {
        let slot = spec("train-arrive_by_time");
        for (raw, want) in TIMES {
            assert_eq!(normalize_value(&slot, raw).value, *want, "{raw}");
        }
        for not_time in ["3", "24:00", "13 pm", "7:61", "0 am", "tuesday"] {
            assert_eq!(normalize_value(&slot, not_time).value, not_time.to_lowercase());
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in "[ a-zA-Z0-9:.']{0,20}", slot in prop::sample::select(vec![
            "hotel-area", "train-arrive_by_time", "hotel-stars", "hotel-name", "hotel-parking",
        ])) {
            let s = spec(slot);
            let once = normalize_value(&s, &v).value;
            prop_assert_eq!(normalize_value(&s, &once).value, once);
        }

        #[test]
        fn reconstruction_is_always_valid(labels in prop::collection::vec(any::<bool>(), 1..15)) {
            let rels: Vec<Relation> = labels.iter().map(|&b| if b { Yes } else { No }).collect();
            let r = reconstruct_segments(&from_labels(&rels), rels.len()).unwrap();
            prop_assert!(validate_record(&r.record, rels.len()).is_empty());
        }
    }
}
