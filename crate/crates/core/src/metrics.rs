//! Evaluation metrics: joint goal accuracy, per-label accuracy, Pk,
//! WindowDiff and Fleiss' kappa, plus an order-independent accumulator
//! that turns per-conversation results into a [`MetricReport`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::BoundarySet;
use crate::schema::{DOMAIN_SLOT, INTENT_SLOT, SEGMENT_SLOT};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Half the mean reference segment length, rounded half-up, at least 1.
pub fn default_window_size(reference: &BoundarySet) -> Result<usize> {
    let n = reference.len();
    if n < 2 {
        return Err(Error::TooShort(n));
    }
    let segments = reference.indices().len() + 1;
    // round(n / (2 s)) half-up == floor((n + s) / (2 s))
    Ok(((n + segments) / (2 * segments)).max(1))
}

fn window_args(reference: &BoundarySet, hypothesis: &BoundarySet, k: Option<usize>) -> Result<usize> {
    let n = reference.len();
    if n != hypothesis.len() {
        return Err(Error::LengthMismatch {
            reference: n,
            hypothesis: hypothesis.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooShort(n));
    }
    let k = match k {
        Some(k) => k,
        None => default_window_size(reference)?,
    };
    if k == 0 || k >= n {
        return Err(Error::InvalidWindow { k, n });
    }
    Ok(k)
}

/// Boundary indicator prefix sums: `p[i]` = number of boundaries with
/// index `< i`.
fn prefix(b: &BoundarySet) -> Vec<usize> {
    let mut p = vec![0; b.len() + 1];
    for i in 1..=b.len() {
        p[i] = p[i - 1] + usize::from(b.contains(i - 1));
    }
    p
}

/// Number of disagreeing windows and number of windows for Pk.
pub fn pk_counts(reference: &BoundarySet, hypothesis: &BoundarySet, k: Option<usize>) -> Result<(usize, usize)> {
    let k = window_args(reference, hypothesis, k)?;
    let (r, h) = (prefix(reference), prefix(hypothesis));
    let windows = reference.len() - k;
    // boundaries in [i, i + k - 1] = p[i + k] - p[i]
    let errors = (1..=windows)
        .filter(|&i| (r[i + k] == r[i]) != (h[i + k] == h[i]))
        .count();
    Ok((errors, windows))
}

pub fn window_diff_counts(
    reference: &BoundarySet,
    hypothesis: &BoundarySet,
    k: Option<usize>,
) -> Result<(usize, usize)> {
    let k = window_args(reference, hypothesis, k)?;
    let (r, h) = (prefix(reference), prefix(hypothesis));
    let windows = reference.len() - k;
    let errors = (1..=windows)
        .filter(|&i| r[i + k] - r[i] != h[i + k] - h[i])
        .count();
    Ok((errors, windows))
}

/// Share of windows `i = 1..=N-k` in which reference and hypothesis
/// disagree on whether units `i` and `i + k` share a segment.
pub fn pk(reference: &BoundarySet, hypothesis: &BoundarySet, k: Option<usize>) -> Result<f64> {
    let (e, w) = pk_counts(reference, hypothesis, k)?;
    Ok(e as f64 / w as f64)
}

/// Share of windows `i = 1..=N-k` in which the number of boundaries with
/// index in `[i, i + k - 1]` differs between reference and hypothesis.
pub fn window_diff(reference: &BoundarySet, hypothesis: &BoundarySet, k: Option<usize>) -> Result<f64> {
    let (e, w) = window_diff_counts(reference, hypothesis, k)?;
    Ok(e as f64 / w as f64)
}

/// Fleiss' kappa over an item × category count matrix.
///
/// Returns 1.0 when expected agreement is 1 (every rating falls in one
/// category), where the statistic is otherwise undefined.
pub fn fleiss_kappa(ratings: &[Vec<usize>], n_raters: usize) -> Result<f64> {
    if ratings.is_empty() {
        return Err(Error::InsufficientRatings("one rated item"));
    }
    if n_raters < 2 {
        return Err(Error::InsufficientRatings("two raters"));
    }
    for (row, counts) in ratings.iter().enumerate() {
        let sum: usize = counts.iter().sum();
        if sum != n_raters {
            return Err(Error::RatingRowSum {
                row,
                sum,
                expected: n_raters,
            });
        }
    }
    let items = ratings.len() as f64;
    let n = n_raters as f64;
    let categories = ratings.iter().map(Vec::len).max().unwrap_or(0);

    let p_bar = ratings
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
            (sq - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..categories)
        .map(|j| {
            let total: usize = ratings.iter().map(|row| row.get(j).copied().unwrap_or(0)).sum();
            let p = total as f64 / (items * n);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// A single turn in a dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TurnKey {
    pub conversation: String,
    pub turn: usize,
}

impl TurnKey {
    pub fn new(conversation: impl Into<String>, turn: usize) -> Self {
        TurnKey {
            conversation: conversation.into(),
            turn,
        }
    }
}

/// Predicted state for one turn. A failed turn never matches.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PredTurn {
    #[serde(default)]
    pub failed: bool,
    #[serde(default)]
    pub state: BTreeMap<String, String>,
}

pub type TurnStates = BTreeMap<TurnKey, BTreeMap<String, String>>;
pub type PredStates = BTreeMap<TurnKey, PredTurn>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Segment,
    Intent,
    Domain,
}

impl LabelKind {
    pub fn key(self) -> &'static str {
        match self {
            LabelKind::Segment => SEGMENT_SLOT,
            LabelKind::Intent => INTENT_SLOT,
            LabelKind::Domain => DOMAIN_SLOT,
        }
    }
}

/// Which state fields a joint match requires.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldSelection {
    Kinds(BTreeSet<LabelKind>),
    /// Every slot in either state must agree, and no slot may be missing.
    AllSlots,
}

impl FieldSelection {
    pub fn kinds(kinds: impl IntoIterator<Item = LabelKind>) -> Self {
        FieldSelection::Kinds(kinds.into_iter().collect())
    }

    pub fn matches(&self, pred: &PredTurn, gold: &BTreeMap<String, String>) -> bool {
        if pred.failed {
            return false;
        }
        match self {
            FieldSelection::AllSlots => &pred.state == gold,
            FieldSelection::Kinds(kinds) => kinds
                .iter()
                .all(|k| pred.state.get(k.key()) == gold.get(k.key())),
        }
    }
}

fn check_aligned(preds: &PredStates, golds: &TurnStates) -> Result<()> {
    if preds.len() != golds.len() || preds.keys().zip(golds.keys()).any(|(p, g)| p != g) {
        let missing = golds.keys().find(|k| !preds.contains_key(k));
        let extra = preds.keys().find(|k| !golds.contains_key(k));
        let detail = match (missing, extra) {
            (Some(k), _) => format!("no prediction for {} turn {}", k.conversation, k.turn),
            (_, Some(k)) => format!("no gold for {} turn {}", k.conversation, k.turn),
            _ => "turn sets differ".to_string(),
        };
        return Err(Error::Misaligned(detail));
    }
    Ok(())
}

/// `(matching turns, total turns)` for a joint match on `fields`.
pub fn joint_goal_counts(preds: &PredStates, golds: &TurnStates, fields: &FieldSelection) -> Result<(usize, usize)> {
    check_aligned(preds, golds)?;
    let hits = golds
        .iter()
        .filter(|(key, gold)| fields.matches(&preds[*key], gold))
        .count();
    Ok((hits, golds.len()))
}

/// Fraction of turns whose selected state fields all match gold.
pub fn joint_goal_accuracy(preds: &PredStates, golds: &TurnStates, fields: &FieldSelection) -> Result<f64> {
    let (hits, total) = joint_goal_counts(preds, golds, fields)?;
    Ok(ratio(hits, total))
}

/// Fraction of turns whose single `kind` label matches gold.
pub fn per_label_accuracy(preds: &PredStates, golds: &TurnStates, kind: LabelKind) -> Result<f64> {
    joint_goal_accuracy(preds, golds, &FieldSelection::kinds([kind]))
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub conversations: usize,
    pub turns: usize,
    pub parse_failures: usize,
    pub recoveries: usize,
    /// Conversations that entered the Pk/WindowDiff averages.
    pub segmented_conversations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub jga: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_label_accuracy: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_diff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_size_override: Option<usize>,
    pub counts: ReportCounts,
}

/// Partial metric state. Merging is associative and commutative, and the
/// final report does not depend on the order conversations were added.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetricAccumulator {
    jga: BTreeMap<String, (usize, usize)>,
    labels: BTreeMap<String, (usize, usize)>,
    pk: Vec<(usize, usize)>,
    window_diff: Vec<(usize, usize)>,
    counts: ReportCounts,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_jga(&mut self, name: &str, hits: usize, total: usize) {
        let e = self.jga.entry(name.to_string()).or_default();
        e.0 += hits;
        e.1 += total;
    }

    pub fn add_label(&mut self, kind: LabelKind, hits: usize, total: usize) {
        let e = self.labels.entry(kind.key().to_string()).or_default();
        e.0 += hits;
        e.1 += total;
    }

    /// Adds one conversation's Pk and WindowDiff `(errors, windows)` pairs.
    pub fn add_segmentation(&mut self, pk: (usize, usize), window_diff: (usize, usize)) {
        self.pk.push(pk);
        self.window_diff.push(window_diff);
        self.counts.segmented_conversations += 1;
    }

    pub fn add_conversation(&mut self, turns: usize, failures: usize, recoveries: usize) {
        self.counts.conversations += 1;
        self.counts.turns += turns;
        self.counts.parse_failures += failures;
        self.counts.recoveries += recoveries;
    }

    pub fn merge(&mut self, other: MetricAccumulator) {
        for (k, (h, t)) in other.jga {
            self.add_jga(&k, h, t);
        }
        for (k, (h, t)) in other.labels {
            let e = self.labels.entry(k).or_default();
            e.0 += h;
            e.1 += t;
        }
        self.pk.extend(other.pk);
        self.window_diff.extend(other.window_diff);
        self.counts.conversations += other.counts.conversations;
        self.counts.turns += other.counts.turns;
        self.counts.parse_failures += other.counts.parse_failures;
        self.counts.recoveries += other.counts.recoveries;
        self.counts.segmented_conversations += other.counts.segmented_conversations;
    }

    pub fn finish(&self, variant: Option<&str>, window_size_override: Option<usize>) -> MetricReport {
        let fractions = |m: &BTreeMap<String, (usize, usize)>| {
            m.iter()
                .filter(|(_, (_, t))| *t > 0)
                .map(|(k, &(h, t))| (k.clone(), ratio(h, t)))
                .collect()
        };
        MetricReport {
            schema_version: REPORT_SCHEMA_VERSION,
            variant: variant.map(str::to_string),
            jga: fractions(&self.jga),
            per_label_accuracy: fractions(&self.labels),
            pk: mean_of_ratios(&self.pk),
            window_diff: mean_of_ratios(&self.window_diff),
            window_size_override,
            counts: self.counts.clone(),
        }
    }
}

/// Mean of `e / w` over pairs, summed in sorted order so the result is
/// bit-identical for any insertion order.
fn mean_of_ratios(pairs: &[(usize, usize)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let mut values: Vec<f64> = pairs.iter().map(|&(e, w)| e as f64 / w as f64).collect();
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}
