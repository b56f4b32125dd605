//! Browser bindings for the demo page in `www/`. Every export takes and
//! returns plain strings so the page needs no generated type glue beyond
//! wasm-bindgen's own. Errors come back as strings and surface in JS as
//! thrown values.

use segdst_core::metrics::{default_window_size, pk_counts, window_diff_counts};
use segdst_core::parse::ParseMode;
use segdst_core::{build_prompt, evaluate, BoundarySet, Conversation, LabelSchema, PromptVariant};
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

fn schema_for(variant: PromptVariant) -> LabelSchema {
    if variant == PromptVariant::S3dstMwoz {
        LabelSchema::mwoz()
    } else {
        LabelSchema::open_domain()
    }
}

fn variant(name: &str) -> Result<PromptVariant, String> {
    name.parse().map_err(|e: segdst_core::Error| e.to_string())
}

/// Reads a transcript written one utterance per line as `user: ...` or
/// `agent: ...`. Lines without a speaker prefix continue the previous
/// utterance; blank lines are ignored.
pub fn parse_transcript(text: &str) -> Result<Conversation, String> {
    let mut pairs: Vec<(String, Option<String>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("user:") {
            pairs.push((line[5..].trim().to_string(), None));
        } else if lower.starts_with("agent:") {
            let turn = pairs
                .last_mut()
                .filter(|(_, agent)| agent.is_none())
                .ok_or_else(|| format!("line {}: agent reply without a user utterance before it", n + 1))?;
            turn.1 = Some(line[6..].trim().to_string());
        } else {
            let target = match pairs.last_mut() {
                Some((_, Some(agent))) => agent,
                Some((user, None)) => user,
                None => return Err(format!("line {}: expected `user:` or `agent:`", n + 1)),
            };
            target.push('\n');
            target.push_str(line);
        }
    }
    if pairs.is_empty() {
        return Err("transcript has no turns".into());
    }
    Conversation::from_pairs("demo", pairs).map_err(|e| e.to_string())
}

/// Names of every prompt variant, as a JSON array.
#[wasm_bindgen]
pub fn variants() -> String {
    let names: Vec<&str> = PromptVariant::ALL.iter().map(|v| v.name()).collect();
    serde_json::to_string(&names).unwrap()
}

/// The exact prompt the variant sends for `transcript`.
#[wasm_bindgen]
pub fn render_prompt(variant_name: &str, transcript: &str) -> Result<String, String> {
    let v = variant(variant_name)?;
    let conv = parse_transcript(transcript)?;
    build_prompt(v, &conv, &schema_for(v)).map(|p| p.text).map_err(|e| e.to_string())
}

/// Parses a model completion for `transcript` and returns the prediction
/// record as JSON: per-turn annotations, reconstructed segments, recovery
/// notes and failures.
#[wasm_bindgen]
pub fn analyze_output(variant_name: &str, transcript: &str, output: &str, strict: bool) -> Result<String, String> {
    let v = variant(variant_name)?;
    let conv = parse_transcript(transcript)?;
    let schema = schema_for(v);
    let prompt = build_prompt(v, &conv, &schema).map_err(|e| e.to_string())?;
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    let record = evaluate::predict(&conv, &prompt, output, &schema, mode).map_err(|e| e.to_string())?;
    serde_json::to_string(&record).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Window {
    /// First unit of the window; the probe pairs it with `start + k`.
    pub start: usize,
    pub reference_same: bool,
    pub hypothesis_same: bool,
    pub reference_boundaries: usize,
    pub hypothesis_boundaries: usize,
    pub pk_error: bool,
    pub window_diff_error: bool,
}

#[derive(Debug, Serialize)]
pub struct SegmentationDetail {
    pub units: usize,
    pub k: usize,
    pub pk: f64,
    pub window_diff: f64,
    pub windows: Vec<Window>,
}

fn parse_indices(text: &str) -> Result<Vec<usize>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("`{s}` is not a boundary index")))
        .collect()
}

/// Pk and WindowDiff between two boundary sets over `units` units, with
/// the verdict of every window. Boundaries are given as comma or space
/// separated indices; `k = 0` picks the default window size.
pub fn segmentation_detail(units: usize, reference: &str, hypothesis: &str, k: usize) -> Result<SegmentationDetail, String> {
    let r = BoundarySet::new(units, parse_indices(reference)?).map_err(|e| e.to_string())?;
    let h = BoundarySet::new(units, parse_indices(hypothesis)?).map_err(|e| e.to_string())?;
    let k = match k {
        0 => default_window_size(&r).map_err(|e| e.to_string())?,
        k => k,
    };
    let (pk_errors, n_windows) = pk_counts(&r, &h, Some(k)).map_err(|e| e.to_string())?;
    let (wd_errors, _) = window_diff_counts(&r, &h, Some(k)).map_err(|e| e.to_string())?;
    let between = |b: &BoundarySet, i: usize| (i..i + k).filter(|&j| b.contains(j)).count();
    let windows = (1..=n_windows)
        .map(|i| {
            let (rc, hc) = (between(&r, i), between(&h, i));
            Window {
                start: i,
                reference_same: rc == 0,
                hypothesis_same: hc == 0,
                reference_boundaries: rc,
                hypothesis_boundaries: hc,
                pk_error: (rc == 0) != (hc == 0),
                window_diff_error: rc != hc,
            }
        })
        .collect();
    Ok(SegmentationDetail {
        units,
        k,
        pk: pk_errors as f64 / n_windows as f64,
        window_diff: wd_errors as f64 / n_windows as f64,
        windows,
    })
}

#[wasm_bindgen]
pub fn segmentation_metrics(units: usize, reference: &str, hypothesis: &str, k: usize) -> Result<String, String> {
    let detail = segmentation_detail(units, reference, hypothesis, k)?;
    serde_json::to_string(&detail).map_err(|e| e.to_string())
}
