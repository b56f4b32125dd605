#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segdst_core::data::{DatasetBundle, Gold};
use segdst_core::parse::{format_icdst_output, format_mwoz_output, format_s3dst_output, TurnAnnotation};
use segdst_core::prompt::OutputDialect;
use segdst_core::{PromptVariant, Relation};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn segdst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segdst"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Model output that reproduces the gold annotation exactly.
pub fn gold_output(gold: &Gold, turns: usize, variant: PromptVariant) -> String {
    if let Gold::SlotStates { states } = gold {
        return format_mwoz_output(states);
    }
    let annotations: Vec<TurnAnnotation> = (1..=turns)
        .map(|i| {
            let mut a = TurnAnnotation::new(i);
            if variant.has_par() {
                a.summary = Some(format!("Turn {i} in brief."));
            }
            if let Some(b) = gold.boundaries() {
                if variant.has_segmentation() {
                    let starts = i == 1 || b.contains(i - 1);
                    a.preceding_topical_relation = Some(if starts { Relation::No } else { Relation::Yes });
                }
            }
            if let (Gold::Segments(r), true) = (gold, variant.has_intent_domain()) {
                let seg = r.segment_at(i).expect("gold covers turn");
                a.intent = seg.slot_values.get("intent").cloned();
                a.domain = seg.slot_values.get("domain").cloned();
            }
            a
        })
        .collect();
    match variant.dialect() {
        OutputDialect::Sql => format_icdst_output(&annotations),
        _ => format_s3dst_output(&annotations, variant),
    }
}

/// Writes a `{id: output}` mock script built from gold and returns its path.
pub fn gold_script(bundle: &DatasetBundle, variant: PromptVariant, dir: &Path) -> PathBuf {
    let script: BTreeMap<&str, String> = bundle
        .conversations
        .iter()
        .map(|c| (c.id.as_str(), gold_output(&bundle.gold[&c.id], c.len(), variant)))
        .collect();
    let path = dir.join(format!("script_{}.json", variant.name().to_lowercase()));
    std::fs::write(&path, serde_json::to_string_pretty(&script).unwrap()).unwrap();
    path
}
