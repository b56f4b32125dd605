//! From one model output to a stored prediction, and from stored
//! predictions to a metric report. `run` and `score` share this path, so a
//! rescore of a run's own predictions reproduces its report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::conversation::Conversation;
use crate::data::{DatasetBundle, Gold};
use crate::error::{Error, Result};
use crate::metrics::{
    joint_goal_counts, pk_counts, window_diff_counts, FieldSelection, LabelKind, MetricAccumulator,
    MetricReport, PredStates, PredTurn, TurnKey, TurnStates,
};
use crate::parse::{
    parse_icdst_output, parse_mwoz_output, parse_s3dst_output, ParseMode, Recovery, TurnAnnotation,
    TurnFailure,
};
use crate::prompt::{OutputDialect, PromptVariant, RenderedPrompt};
use crate::record::{BoundarySet, DialogueStateRecord, TurnSlotState};
use crate::schema::{LabelSchema, DOMAIN_SLOT, INTENT_SLOT, SEGMENT_SLOT};
use crate::track::{normalize_state, reconstruct_segments, resolve_cumulative_state};

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub variant: PromptVariant,
    pub turn_count: usize,
    pub template_version: String,
    pub schema_fingerprint: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<TurnAnnotation>,
    /// Normalized cumulative slot state per parsed turn (slot-list variant).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slot_states: Vec<TurnSlotState>,
    /// Reconstructed boundaries and segment states (segmenting variants).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<DialogueStateRecord>,
    #[serde(default)]
    pub recovered: Vec<Recovery>,
    #[serde(default)]
    pub failures: Vec<TurnFailure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    pub raw_output: String,
}

impl PredictionRecord {
    pub fn failed_turns(&self) -> BTreeSet<usize> {
        self.failures.iter().map(|f| f.turn).collect()
    }

    /// The state each turn is scored with, for turns `1..=turn_count`.
    pub fn turn_states(&self) -> BTreeMap<usize, PredTurn> {
        let failed = self.failed_turns();
        let mut out: BTreeMap<usize, PredTurn> = (1..=self.turn_count)
            .map(|i| {
                let turn = PredTurn {
                    failed: failed.contains(&i),
                    state: BTreeMap::new(),
                };
                (i, turn)
            })
            .collect();

        if self.variant.dialect() == OutputDialect::SlotList {
            for s in &self.slot_states {
                if let Some(p) = out.get_mut(&s.turn_index) {
                    p.state = s.state.clone();
                }
            }
            return out;
        }

        if let Some(record) = &self.record {
            for (&i, p) in out.iter_mut() {
                if let Some(seg) = record.segment_at(i) {
                    let rel = if seg.start == i { "NO" } else { "YES" };
                    p.state.insert(SEGMENT_SLOT.into(), rel.into());
                    for key in [INTENT_SLOT, DOMAIN_SLOT] {
                        if let Some(v) = seg.slot_values.get(key) {
                            p.state.insert(key.into(), v.clone());
                        }
                    }
                }
            }
        } else {
            for a in &self.annotations {
                let Some(p) = out.get_mut(&a.turn_index) else { continue };
                if let Some(r) = a.preceding_topical_relation {
                    p.state.insert(SEGMENT_SLOT.into(), r.as_str().into());
                }
                if let Some(v) = &a.intent {
                    p.state.insert(INTENT_SLOT.into(), v.clone());
                }
                if let Some(v) = &a.domain {
                    p.state.insert(DOMAIN_SLOT.into(), v.clone());
                }
            }
        }
        out
    }
}

/// Parses `output`, rebuilds segments or slot states, and packages the
/// result with its diagnostics.
pub fn predict(
    conv: &Conversation,
    prompt: &RenderedPrompt,
    output: &str,
    schema: &LabelSchema,
    mode: ParseMode,
) -> Result<PredictionRecord> {
    let variant = prompt.variant;
    let t = conv.len();
    let mut rec = PredictionRecord {
        id: conv.id.clone(),
        variant,
        turn_count: t,
        template_version: prompt.template_version.clone(),
        schema_fingerprint: prompt.schema_fingerprint.clone(),
        annotations: Vec::new(),
        slot_states: Vec::new(),
        record: None,
        recovered: Vec::new(),
        failures: Vec::new(),
        diagnostics: Vec::new(),
        raw_output: output.to_string(),
    };

    match variant.dialect() {
        OutputDialect::SlotList => {
            let report = parse_mwoz_output(output, t, schema, mode);
            for state in resolve_cumulative_state(&report.annotations) {
                let (normalized, notes) = normalize_state(&state.state, schema);
                rec.diagnostics
                    .extend(notes.into_iter().map(|n| format!("turn {}: {n}", state.turn_index)));
                rec.slot_states.push(TurnSlotState {
                    turn_index: state.turn_index,
                    state: normalized,
                });
            }
            rec.recovered = report.recovered;
            rec.failures = report.failures;
        }
        dialect => {
            let report = match dialect {
                OutputDialect::Sql => parse_icdst_output(output, t, schema, mode),
                _ => parse_s3dst_output(output, t, schema, variant, mode),
            };
            if variant.has_segmentation() {
                let rebuilt = reconstruct_segments(&report.annotations, t)?;
                rec.record = Some(rebuilt.record);
                rec.diagnostics = rebuilt.diagnostics;
            }
            rec.annotations = report.annotations;
            rec.recovered = report.recovered;
            rec.failures = report.failures;
        }
    }
    Ok(rec)
}

/// Per-turn gold states keyed by turn index.
pub fn gold_turn_states(gold: &Gold) -> BTreeMap<usize, BTreeMap<String, String>> {
    match gold {
        Gold::SlotStates { states } => states
            .iter()
            .map(|s| (s.turn_index, s.state.clone()))
            .collect(),
        Gold::Boundaries(b) => relation_states(b),
        Gold::Segments(record) => {
            let mut out = relation_states(&record.boundaries);
            for (&i, state) in out.iter_mut() {
                if let Some(seg) = record.segment_at(i) {
                    state.extend(seg.slot_values.iter().map(|(k, v)| (k.clone(), v.clone())));
                }
            }
            out
        }
    }
}

fn relation_states(b: &BoundarySet) -> BTreeMap<usize, BTreeMap<String, String>> {
    b.relations()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (i + 1, BTreeMap::from([(SEGMENT_SLOT.to_string(), r.as_str().to_string())])))
        .collect()
}

/// Joint-accuracy variants reported for `variant` against this kind of
/// gold, keyed by report name.
pub fn jga_selections(variant: PromptVariant, gold: &Gold) -> Vec<(&'static str, FieldSelection)> {
    use LabelKind::*;
    match (variant.dialect(), gold) {
        (OutputDialect::SlotList, Gold::SlotStates { .. }) => vec![("slots", FieldSelection::AllSlots)],
        (_, Gold::Segments(_)) if variant.has_intent_domain() => {
            let mut out = vec![("I/D", FieldSelection::kinds([Intent, Domain]))];
            if variant.has_segmentation() {
                out.push(("S/I/D", FieldSelection::kinds([Segment, Intent, Domain])));
            }
            out
        }
        _ => Vec::new(),
    }
}

/// Single labels reported for `variant` against this kind of gold.
pub fn label_kinds(variant: PromptVariant, gold: &Gold) -> Vec<LabelKind> {
    let mut out = Vec::new();
    if variant.has_segmentation() && gold.boundaries().is_some() {
        out.push(LabelKind::Segment);
    }
    if variant.has_intent_domain() && matches!(gold, Gold::Segments(_)) {
        out.extend([LabelKind::Intent, LabelKind::Domain]);
    }
    out
}

/// Rejects dataset and variant pairs whose gold cannot score the variant.
pub fn check_compatible(variant: PromptVariant, bundle: &DatasetBundle) -> Result<()> {
    let wants_slots = variant.dialect() == OutputDialect::SlotList;
    for (id, gold) in &bundle.gold {
        let has_slots = matches!(gold, Gold::SlotStates { .. });
        if wants_slots != has_slots {
            let needed = if wants_slots { "slot-state" } else { "segment or boundary" };
            return Err(Error::DatasetMismatch(format!(
                "{variant} needs {needed} gold, but conversation {id} has something else"
            )));
        }
    }
    Ok(())
}

/// Adds one conversation to `acc`. A missing prediction scores every turn
/// as failed and predicts no boundaries.
pub fn score_conversation(
    acc: &mut MetricAccumulator,
    conv: &Conversation,
    variant: PromptVariant,
    pred: Option<&PredictionRecord>,
    gold: Option<&Gold>,
    window_size: Option<usize>,
) -> Result<()> {
    let t = conv.len();
    let (pred_turns, failures, recoveries) = match pred {
        Some(p) => {
            if p.turn_count != t {
                return Err(Error::Misaligned(format!(
                    "{} has {t} turns but its prediction covers {}",
                    conv.id, p.turn_count
                )));
            }
            (p.turn_states(), p.failed_turns().len(), p.recovered.len())
        }
        None => {
            let all_failed = (1..=t).map(|i| (i, PredTurn { failed: true, state: BTreeMap::new() }));
            (all_failed.collect(), t, 0)
        }
    };
    acc.add_conversation(t, failures, recoveries);
    let Some(gold) = gold else {
        return Ok(());
    };

    let key = |i: usize| TurnKey::new(conv.id.clone(), i);
    let preds: PredStates = pred_turns.into_iter().map(|(i, p)| (key(i), p)).collect();
    let golds: TurnStates = gold_turn_states(gold).into_iter().map(|(i, s)| (key(i), s)).collect();
    for (name, fields) in jga_selections(variant, gold) {
        let (hits, total) = joint_goal_counts(&preds, &golds, &fields)?;
        acc.add_jga(name, hits, total);
    }
    for kind in label_kinds(variant, gold) {
        let (hits, total) = joint_goal_counts(&preds, &golds, &FieldSelection::kinds([kind]))?;
        acc.add_label(kind, hits, total);
    }

    if let (true, Some(reference), true) = (variant.has_segmentation(), gold.boundaries(), t >= 2) {
        let empty = BoundarySet::empty(t);
        let hypothesis = pred
            .and_then(|p| p.record.as_ref())
            .map_or(&empty, |r| &r.boundaries);
        let k = window_size.map(|k| k.clamp(1, t - 1));
        acc.add_segmentation(
            pk_counts(reference, hypothesis, k)?,
            window_diff_counts(reference, hypothesis, k)?,
        );
    }
    Ok(())
}

/// Scores stored predictions against a dataset. Returns the report and a
/// warning per conversation that had no prediction.
pub fn score_dataset(
    bundle: &DatasetBundle,
    variant: PromptVariant,
    predictions: &BTreeMap<String, PredictionRecord>,
    window_size: Option<usize>,
) -> Result<(MetricReport, Vec<String>)> {
    if let Some(id) = predictions.keys().find(|id| bundle.get(id).is_none()) {
        return Err(Error::Misaligned(format!("prediction for unknown conversation {id}")));
    }
    if let Some(p) = predictions.values().find(|p| p.variant != variant) {
        return Err(Error::Misaligned(format!(
            "prediction for {} was made with {}, not {variant}",
            p.id, p.variant
        )));
    }
    let mut acc = MetricAccumulator::new();
    let mut warnings = Vec::new();
    for conv in &bundle.conversations {
        let pred = predictions.get(&conv.id);
        if pred.is_none() {
            warnings.push(format!("no prediction for {}; its turns count as wrong", conv.id));
        }
        score_conversation(&mut acc, conv, variant, pred, bundle.gold.get(&conv.id), window_size)?;
    }
    Ok((acc.finish(Some(variant.name()), window_size), warnings))
}
