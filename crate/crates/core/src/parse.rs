//! Readers for model output.
//!
//! Three dialects are supported: per-turn XML blocks (`<T1>…</T1>`), one SQL
//! `SELECT` row per turn, and per-turn slot-value lists. The XML reader is a
//! tag scanner rather than an XML parser: it looks only for the known tag
//! names and treats everything between an open/close pair as raw text, so
//! prose around the blocks and stray ampersands do not derail it.
//!
//! Anything the reader had to repair is listed in
//! [`ParseReport::recovered`]; anything it could not read becomes a
//! [`TurnFailure`]. Every turn `1..=t` lands in exactly one of
//! `annotations` or `failures`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::conversation::{Conversation, Turn};
use crate::error::Result;
use crate::prompt::PromptVariant;
use crate::record::{Relation, TurnSlotState};
use crate::schema::LabelSchema;
use crate::xml::{escape, unescape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Any repair turns into a failure for the affected turns.
    Strict,
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnAnnotation {
    pub turn_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preceding_topical_relation: Option<Relation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

impl TurnAnnotation {
    pub fn new(turn_index: usize) -> Self {
        TurnAnnotation {
            turn_index,
            summary: None,
            preceding_topical_relation: None,
            intent: None,
            domain: None,
        }
    }
}

/// Slot/value pairs for one turn exactly as the model listed them,
/// duplicates included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTurnSlots {
    pub turn_index: usize,
    pub entries: Vec<SlotEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub slot: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RecoveryAction {
    /// Non-whitespace text outside the turn blocks (code fences, prose).
    StrippedWrapper,
    DuplicateBlock,
    CoercedFirstTurn,
    MissingSemicolon,
    UnclosedBlock,
    ExtraTurnBlock { index: usize },
    MissingSummary,
}

impl fmt::Display for RecoveryAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecoveryAction::StrippedWrapper => f.write_str("stripped wrapper"),
            RecoveryAction::DuplicateBlock => f.write_str("duplicate turn block ignored"),
            RecoveryAction::CoercedFirstTurn => f.write_str("turn 1 relation coerced to NO"),
            RecoveryAction::MissingSemicolon => f.write_str("missing semicolon"),
            RecoveryAction::UnclosedBlock => f.write_str("unclosed turn block"),
            RecoveryAction::ExtraTurnBlock { index } => {
                write!(f, "turn block T{index} beyond conversation length dropped")
            }
            RecoveryAction::MissingSummary => f.write_str("missing summary"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recovery {
    /// `None` for repairs that apply to the whole output.
    pub turn: Option<usize>,
    #[serde(flatten)]
    pub action: RecoveryAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum FailureReason {
    MissingBlock,
    MissingTag { tag: String },
    UnknownLabel { kind: String, value: String },
    MalformedRow { line: String },
    UnknownSlot { entry: String },
    EmptySlotValue { entry: String },
    StrictRejected { action: RecoveryAction },
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::MissingBlock => f.write_str("missing turn block"),
            FailureReason::MissingTag { tag } => write!(f, "missing <{tag}> tag"),
            FailureReason::UnknownLabel { kind, value } => write!(f, "unknown {kind} `{value}`"),
            FailureReason::MalformedRow { line } => write!(f, "malformed row `{line}`"),
            FailureReason::UnknownSlot { entry } => write!(f, "no schema slot matches `{entry}`"),
            FailureReason::EmptySlotValue { entry } => write!(f, "empty value in `{entry}`"),
            FailureReason::StrictRejected { action } => write!(f, "strict mode: {action}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnFailure {
    pub turn: usize,
    #[serde(flatten)]
    pub reason: FailureReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport<A> {
    pub annotations: Vec<A>,
    #[serde(default)]
    pub recovered: Vec<Recovery>,
    #[serde(default)]
    pub failures: Vec<TurnFailure>,
}

impl<A> Default for ParseReport<A> {
    fn default() -> Self {
        ParseReport {
            annotations: Vec::new(),
            recovered: Vec::new(),
            failures: Vec::new(),
        }
    }
}

impl<A> ParseReport<A> {
    pub fn failed_turns(&self) -> BTreeSet<usize> {
        self.failures.iter().map(|f| f.turn).collect()
    }

    pub fn is_clean(&self) -> bool {
        self.recovered.is_empty() && self.failures.is_empty()
    }
}

/// Annotation types that belong to one numbered turn.
pub trait Indexed {
    fn index(&self) -> usize;
}

impl Indexed for TurnAnnotation {
    fn index(&self) -> usize {
        self.turn_index
    }
}

impl Indexed for RawTurnSlots {
    fn index(&self) -> usize {
        self.turn_index
    }
}

impl<A: Indexed> ParseReport<A> {
    /// Whether annotations and failures together cover `1..=t` exactly once.
    pub fn covers(&self, t: usize) -> bool {
        let mut seen: Vec<usize> = self
            .annotations
            .iter()
            .map(Indexed::index)
            .chain(self.failures.iter().map(|f| f.turn))
            .collect();
        seen.sort_unstable();
        seen == (1..=t).collect::<Vec<_>>()
    }

    fn finish(mut self, t: usize, mode: ParseMode) -> Self {
        if mode == ParseMode::Strict && !self.recovered.is_empty() {
            let mut reject: BTreeMap<usize, RecoveryAction> = BTreeMap::new();
            for r in &self.recovered {
                match r.turn {
                    Some(turn) if turn >= 1 && turn <= t => {
                        reject.entry(turn).or_insert_with(|| r.action.clone());
                    }
                    Some(_) => {}
                    None => {
                        for turn in 1..=t {
                            reject.entry(turn).or_insert_with(|| r.action.clone());
                        }
                    }
                }
            }
            self.annotations.retain(|a| {
                !reject.contains_key(&a.index())
            });
            let failed = self.failed_turns();
            for (turn, action) in reject {
                if !failed.contains(&turn) {
                    self.failures.push(TurnFailure {
                        turn,
                        reason: FailureReason::StrictRejected { action },
                    });
                }
            }
        }
        self.annotations.sort_by_key(Indexed::index);
        self.failures.sort_by_key(|f| f.turn);
        self
    }
}

struct Block<'a> {
    index: usize,
    body: &'a str,
}

static OPEN_TURN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<T(\d+)>").unwrap());

/// Finds `<T{i}>` blocks in order of appearance. A block without its
/// closing tag runs until the next opening tag.
fn scan_blocks<'a>(
    text: &'a str,
    recovered: &mut Vec<Recovery>,
) -> Vec<Block<'a>> {
    let opens: Vec<(usize, usize, usize)> = OPEN_TURN
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(0)?;
            let index = c[1].parse().ok()?;
            Some((m.start(), m.end(), index))
        })
        .collect();

    let mut blocks = Vec::with_capacity(opens.len());
    let mut outside = String::new();
    let mut cursor = 0;
    for (k, &(start, body_start, index)) in opens.iter().enumerate() {
        if start < cursor {
            // opening tag swallowed by the previous block's body
            continue;
        }
        outside.push_str(&text[cursor..start]);
        let limit = opens.get(k + 1).map_or(text.len(), |o| o.0);
        let close = format!("</t{index}>");
        let close_at = find_ascii_ci(&text[body_start..limit], &close);
        let (body, end) = match close_at {
            Some(pos) => (
                &text[body_start..body_start + pos],
                body_start + pos + close.len(),
            ),
            None => {
                recovered.push(Recovery {
                    turn: Some(index),
                    action: RecoveryAction::UnclosedBlock,
                });
                (&text[body_start..limit], limit)
            }
        };
        blocks.push(Block { index, body });
        cursor = end;
    }
    outside.push_str(&text[cursor..]);
    if !outside.trim().is_empty() {
        recovered.push(Recovery {
            turn: None,
            action: RecoveryAction::StrippedWrapper,
        });
    }
    blocks
}

fn find_ascii_ci(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// Raw content of the first `<tag>…</tag>` pair in `body`.
fn tag_content<'a>(body: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = find_ascii_ci(body, &open)? + open.len();
    let len = find_ascii_ci(&body[start..], &close)?;
    Some(&body[start..start + len])
}

/// Deduplicates blocks (first wins), drops indices outside `1..=t`, and
/// records a failure for every turn with no block.
fn select_blocks<'a>(
    blocks: Vec<Block<'a>>,
    t: usize,
    recovered: &mut Vec<Recovery>,
    failures: &mut Vec<TurnFailure>,
) -> Vec<Block<'a>> {
    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    for block in blocks {
        if block.index == 0 || block.index > t {
            recovered.push(Recovery {
                turn: None,
                action: RecoveryAction::ExtraTurnBlock { index: block.index },
            });
        } else if !seen.insert(block.index) {
            recovered.push(Recovery {
                turn: Some(block.index),
                action: RecoveryAction::DuplicateBlock,
            });
        } else {
            kept.push(block);
        }
    }
    for turn in 1..=t {
        if !seen.contains(&turn) {
            failures.push(TurnFailure {
                turn,
                reason: FailureReason::MissingBlock,
            });
        }
    }
    kept
}

fn clean(value: &str) -> String {
    unescape(value.trim()).trim().to_string()
}

fn label_value(
    body: &str,
    tag: &str,
    turn: usize,
) -> std::result::Result<String, TurnFailure> {
    tag_content(body, tag).map(clean).ok_or_else(|| TurnFailure {
        turn,
        reason: FailureReason::MissingTag { tag: tag.into() },
    })
}

fn unknown(turn: usize, kind: &str, value: &str) -> TurnFailure {
    TurnFailure {
        turn,
        reason: FailureReason::UnknownLabel {
            kind: kind.into(),
            value: value.into(),
        },
    }
}

/// Assigns the relation, applying the turn-1 rule.
fn set_relation(
    ann: &mut TurnAnnotation,
    raw: &str,
    recovered: &mut Vec<Recovery>,
) -> std::result::Result<(), TurnFailure> {
    let turn = ann.turn_index;
    let mut relation =
        Relation::parse(raw).ok_or_else(|| unknown(turn, "preceding_topical_relation", raw))?;
    if turn == 1 && relation == Relation::Yes {
        relation = Relation::No;
        recovered.push(Recovery {
            turn: Some(1),
            action: RecoveryAction::CoercedFirstTurn,
        });
    }
    ann.preceding_topical_relation = Some(relation);
    Ok(())
}

fn set_intent_domain(
    ann: &mut TurnAnnotation,
    intent: &str,
    domain: &str,
    schema: &LabelSchema,
) -> std::result::Result<(), TurnFailure> {
    let turn = ann.turn_index;
    ann.intent = Some(
        schema
            .canonical_intent(intent)
            .ok_or_else(|| unknown(turn, "intent", intent))?
            .to_string(),
    );
    ann.domain = Some(
        schema
            .canonical_domain(domain)
            .ok_or_else(|| unknown(turn, "domain", domain))?
            .to_string(),
    );
    Ok(())
}

fn read_xml_turn(
    block: &Block<'_>,
    schema: &LabelSchema,
    variant: PromptVariant,
    recovered: &mut Vec<Recovery>,
) -> std::result::Result<TurnAnnotation, TurnFailure> {
    let turn = block.index;
    let mut ann = TurnAnnotation::new(turn);
    let mut notes = Vec::new();
    if variant.has_segmentation() {
        let raw = label_value(block.body, "preceding_topical_relation", turn)?;
        set_relation(&mut ann, &raw, &mut notes)?;
    }
    if variant.has_intent_domain() {
        let intent = label_value(block.body, "intent", turn)?;
        let domain = label_value(block.body, "domain", turn)?;
        set_intent_domain(&mut ann, &intent, &domain, schema)?;
    }
    if variant.has_par() {
        match tag_content(block.body, "summary") {
            Some(s) => ann.summary = Some(clean(s)),
            None => notes.push(Recovery {
                turn: Some(turn),
                action: RecoveryAction::MissingSummary,
            }),
        }
    }
    recovered.extend(notes);
    Ok(ann)
}

/// Reads hierarchical XML output for the XML-dialect variants.
pub fn parse_s3dst_output(
    text: &str,
    t: usize,
    schema: &LabelSchema,
    variant: PromptVariant,
    mode: ParseMode,
) -> ParseReport<TurnAnnotation> {
    let mut report = ParseReport::default();
    let blocks = scan_blocks(text, &mut report.recovered);
    let blocks = select_blocks(blocks, t, &mut report.recovered, &mut report.failures);
    for block in &blocks {
        match read_xml_turn(block, schema, variant, &mut report.recovered) {
            Ok(ann) => report.annotations.push(ann),
            Err(failure) => report.failures.push(failure),
        }
    }
    report.finish(t, mode)
}

static SQL_ROW_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*T(\d+)\s*[.:)]?\s*(select\b.*)$").unwrap());
static SQL_SELECT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^select\s+\*\s+from\s+states\s+where\s+(.*?)\s*$").unwrap()
});
static SQL_COLUMN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(preceding_topical_relation|intent|domain)\s*=\s*").unwrap()
});
static TRAILING_AND: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\s+and\s*$").unwrap());

/// Splits a WHERE clause into column → value. Column names anchor the
/// split, so values that themselves contain `AND` stay intact.
fn where_columns(clause: &str) -> Option<BTreeMap<String, String>> {
    let hits: Vec<_> = SQL_COLUMN.captures_iter(clause).collect();
    if hits.is_empty() {
        return None;
    }
    let mut out = BTreeMap::new();
    for (k, cap) in hits.iter().enumerate() {
        let m = cap.get(0)?;
        let end = hits.get(k + 1).map_or(clause.len(), |n| n.get(0).unwrap().start());
        let raw = &clause[m.end()..end];
        let raw = TRAILING_AND.replace(raw, "");
        let value = strip_quotes(raw.trim());
        if value.is_empty() {
            return None;
        }
        out.entry(cap[1].to_ascii_lowercase())
            .or_insert_with(|| value.to_string());
    }
    Some(out)
}

fn strip_quotes(s: &str) -> &str {
    for q in ['\'', '"', '`'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

fn read_sql_row(
    index: usize,
    select: &str,
    line: &str,
    schema: &LabelSchema,
    recovered: &mut Vec<Recovery>,
) -> std::result::Result<TurnAnnotation, TurnFailure> {
    let malformed = || TurnFailure {
        turn: index,
        reason: FailureReason::MalformedRow {
            line: line.trim().to_string(),
        },
    };
    let mut notes = Vec::new();
    let select = select.trim_end();
    let select = match select.strip_suffix(';') {
        Some(s) => s,
        None => {
            notes.push(Recovery {
                turn: Some(index),
                action: RecoveryAction::MissingSemicolon,
            });
            select
        }
    };
    let clause = SQL_SELECT
        .captures(select)
        .and_then(|c| c.get(1))
        .ok_or_else(malformed)?
        .as_str();
    let columns = where_columns(clause).ok_or_else(malformed)?;
    let get = |col: &str| columns.get(col).map(|v| unescape(v).into_owned());
    let relation = get("preceding_topical_relation").ok_or_else(malformed)?;
    let intent = get("intent").ok_or_else(malformed)?;
    let domain = get("domain").ok_or_else(malformed)?;

    let mut ann = TurnAnnotation::new(index);
    set_relation(&mut ann, &relation, &mut notes)?;
    set_intent_domain(&mut ann, &intent, &domain, schema)?;
    recovered.extend(notes);
    Ok(ann)
}

/// Reads one `T{i}. SELECT * from states WHERE …;` row per turn.
pub fn parse_icdst_output(
    text: &str,
    t: usize,
    schema: &LabelSchema,
    mode: ParseMode,
) -> ParseReport<TurnAnnotation> {
    let mut report = ParseReport::default();
    let mut seen = BTreeSet::new();
    let mut wrapper = false;
    for line in text.lines() {
        let Some(cap) = SQL_ROW_START.captures(line) else {
            wrapper |= !line.trim().is_empty();
            continue;
        };
        let Ok(index) = cap[1].parse::<usize>() else {
            wrapper = true;
            continue;
        };
        if index == 0 || index > t {
            report.recovered.push(Recovery {
                turn: None,
                action: RecoveryAction::ExtraTurnBlock { index },
            });
            continue;
        }
        if !seen.insert(index) {
            report.recovered.push(Recovery {
                turn: Some(index),
                action: RecoveryAction::DuplicateBlock,
            });
            continue;
        }
        match read_sql_row(index, &cap[2], line, schema, &mut report.recovered) {
            Ok(ann) => report.annotations.push(ann),
            Err(failure) => report.failures.push(failure),
        }
    }
    if wrapper {
        report.recovered.push(Recovery {
            turn: None,
            action: RecoveryAction::StrippedWrapper,
        });
    }
    for turn in 1..=t {
        if !seen.contains(&turn) {
            report.failures.push(TurnFailure {
                turn,
                reason: FailureReason::MissingBlock,
            });
        }
    }
    report.finish(t, mode)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SlotListParse {
    pub entries: Vec<SlotEntry>,
    pub errors: Vec<FailureReason>,
}

impl SlotListParse {
    /// Collapses entries into a map; a later entry for the same slot wins.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|e| (e.slot.clone(), e.value.clone()))
            .collect()
    }
}

/// Splits a `['{slot}-{value}', …]` list.
///
/// Each entry is decomposed by the longest schema slot name that prefixes
/// it (ASCII case-insensitively) followed by `-`; the rest is the value.
pub fn parse_slot_value_list(text: &str, schema: &LabelSchema) -> SlotListParse {
    let mut out = SlotListParse::default();
    for item in split_list(&unescape(text)) {
        match split_entry(&item, schema) {
            Ok(entry) => out.entries.push(entry),
            Err(e) => out.errors.push(e),
        }
    }
    out
}

fn split_list(text: &str) -> Vec<String> {
    let mut inner = text.trim();
    if let Some(s) = inner.strip_prefix('[') {
        inner = s.strip_suffix(']').unwrap_or(s);
    }
    let inner = inner.trim();
    if inner.is_empty() || inner.eq_ignore_ascii_case("none") {
        return Vec::new();
    }
    for q in ['\'', '"'] {
        if inner.len() >= 2 && inner.starts_with(q) && inner.ends_with(q) {
            let body = &inner[1..inner.len() - 1];
            let sep = Regex::new(&format!(r"{q}\s*,\s*{q}")).unwrap();
            return sep.split(body).map(|s| s.trim().to_string()).collect();
        }
    }
    inner
        .split(',')
        .map(|s| strip_quotes(s.trim()).trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn split_entry(entry: &str, schema: &LabelSchema) -> std::result::Result<SlotEntry, FailureReason> {
    let bytes = entry.as_bytes();
    let best = schema
        .slots
        .iter()
        .filter(|s| {
            let n = s.name.len();
            bytes.len() > n
                && bytes[..n].eq_ignore_ascii_case(s.name.as_bytes())
                && bytes[n] == b'-'
        })
        .max_by_key(|s| s.name.len())
        .ok_or_else(|| FailureReason::UnknownSlot {
            entry: entry.to_string(),
        })?;
    let value = entry[best.name.len() + 1..].trim();
    if value.is_empty() {
        return Err(FailureReason::EmptySlotValue {
            entry: entry.to_string(),
        });
    }
    Ok(SlotEntry {
        slot: best.name.clone(),
        value: value.to_string(),
    })
}

/// Reads per-turn `<updated_slot_value>` lists.
pub fn parse_mwoz_output(
    text: &str,
    t: usize,
    schema: &LabelSchema,
    mode: ParseMode,
) -> ParseReport<RawTurnSlots> {
    let mut report = ParseReport::default();
    let blocks = scan_blocks(text, &mut report.recovered);
    let blocks = select_blocks(blocks, t, &mut report.recovered, &mut report.failures);
    for block in blocks {
        let turn = block.index;
        let Some(content) = tag_content(block.body, "updated_slot_value") else {
            report.failures.push(TurnFailure {
                turn,
                reason: FailureReason::MissingTag {
                    tag: "updated_slot_value".into(),
                },
            });
            continue;
        };
        let parsed = parse_slot_value_list(content, schema);
        match parsed.errors.into_iter().next() {
            Some(reason) => report.failures.push(TurnFailure { turn, reason }),
            None => report.annotations.push(RawTurnSlots {
                turn_index: turn,
                entries: parsed.entries,
            }),
        }
    }
    report.finish(t, mode)
}

/// Serializes annotations in the XML output format of `variant`.
pub fn format_s3dst_output(annotations: &[TurnAnnotation], variant: PromptVariant) -> String {
    let mut blocks = Vec::with_capacity(annotations.len());
    for a in annotations {
        let mut b = format!("<T{}>\n", a.turn_index);
        if variant.has_par() {
            if let Some(s) = &a.summary {
                b.push_str(&format!("<summary>{}</summary>\n", escape(s)));
            }
        }
        if variant.has_segmentation() {
            if let Some(r) = a.preceding_topical_relation {
                b.push_str(&format!(
                    "<preceding_topical_relation>{r}</preceding_topical_relation>\n"
                ));
            }
        }
        if variant.has_intent_domain() {
            if let Some(i) = &a.intent {
                b.push_str(&format!("<intent>{}</intent>\n", escape(i)));
            }
            if let Some(d) = &a.domain {
                b.push_str(&format!("<domain>{}</domain>\n", escape(d)));
            }
        }
        b.push_str(&format!("</T{}>", a.turn_index));
        blocks.push(b);
    }
    blocks.join("\n")
}

pub fn format_icdst_output(annotations: &[TurnAnnotation]) -> String {
    annotations
        .iter()
        .map(|a| {
            format!(
                "T{}. SELECT * from states WHERE preceding_topical_relation = {} AND intent = {} AND domain = {};",
                a.turn_index,
                a.preceding_topical_relation.map_or("", Relation::as_str),
                a.intent.as_deref().unwrap_or(""),
                a.domain.as_deref().unwrap_or("")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_slot_list(state: &BTreeMap<String, String>) -> String {
    let items: Vec<String> = state
        .iter()
        .map(|(slot, value)| format!("'{slot}-{value}'"))
        .collect();
    format!("[{}]", items.join(", "))
}

pub fn format_mwoz_output(states: &[TurnSlotState]) -> String {
    states
        .iter()
        .map(|s| {
            format!(
                "<T{i}>\n<updated_slot_value>{}</updated_slot_value>\n</T{i}>",
                escape(&format_slot_list(&s.state)),
                i = s.turn_index
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reads a conversation back from its XML rendering. An empty `<agent>`
/// on the final turn is read as "no reply yet".
pub fn read_conversation_xml(id: &str, text: &str) -> Result<Conversation> {
    let mut ignored = Vec::new();
    let blocks = scan_blocks(text, &mut ignored);
    let last = blocks.len();
    let mut turns = Vec::with_capacity(last);
    for (k, block) in blocks.iter().enumerate() {
        let user = tag_content(block.body, "user").map(|u| unescape(u).into_owned());
        let agent = tag_content(block.body, "agent").map(|a| unescape(a).into_owned());
        let agent = match agent {
            Some(a) if a.is_empty() && k + 1 == last => None,
            other => other,
        };
        turns.push(Turn {
            index: block.index,
            user: user.unwrap_or_default(),
            agent,
        });
    }
    Conversation::new(id, turns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn od() -> LabelSchema {
        LabelSchema::open_domain()
    }

    const T1: &str = "<T1><summary>User asks weather.</summary><preceding_topical_relation>NO</preceding_topical_relation><intent>INFORMATION SEEKING</intent><domain>WEATHER</domain></T1>";

    #[test]
    fn reads_single_block() {
        let r = parse_s3dst_output(T1, 1, &od(), PromptVariant::S3dstJoint, ParseMode::Strict);
        assert!(r.is_clean());
        let a = &r.annotations[0];
        assert_eq!(a.turn_index, 1);
        assert_eq!(a.summary.as_deref(), Some("User asks weather."));
        assert_eq!(a.preceding_topical_relation, Some(Relation::No));
        assert_eq!(a.intent.as_deref(), Some("INFORMATION SEEKING"));
        assert_eq!(a.domain.as_deref(), Some("WEATHER"));
    }

    #[test]
    fn strips_fence_and_preamble() {
        let wrapped = format!("Sure! Here are the labels:\n```xml\n{T1}\n```\nHope this helps.");
        let clean = parse_s3dst_output(T1, 1, &od(), PromptVariant::S3dstJoint, ParseMode::Lenient);
        let r = parse_s3dst_output(&wrapped, 1, &od(), PromptVariant::S3dstJoint, ParseMode::Lenient);
        assert_eq!(r.annotations, clean.annotations);
        assert_eq!(
            r.recovered,
            vec![Recovery { turn: None, action: RecoveryAction::StrippedWrapper }]
        );
        assert_eq!(RecoveryAction::StrippedWrapper.to_string(), "stripped wrapper");

        let strict = parse_s3dst_output(&wrapped, 1, &od(), PromptVariant::S3dstJoint, ParseMode::Strict);
        assert!(strict.annotations.is_empty());
        assert_eq!(strict.failures.len(), 1);
        assert!(strict.covers(1));
    }

    #[test]
    fn unknown_intent_fails_turn() {
        let text = T1.replace("INFORMATION SEEKING", "COOKING");
        let r = parse_s3dst_output(&text, 1, &od(), PromptVariant::S3dstJoint, ParseMode::Lenient);
        assert!(r.annotations.is_empty());
        assert_eq!(r.failures[0].turn, 1);
        assert!(r.failures[0].reason.to_string().starts_with("unknown intent"));
    }

    #[test]
    fn labels_are_canonicalized() {
        let text = T1.replace("INFORMATION SEEKING", "information seeking").replace(">NO<", ">no<");
        let r = parse_s3dst_output(&text, 1, &od(), PromptVariant::S3dstJoint, ParseMode::Strict);
        assert_eq!(r.annotations[0].intent.as_deref(), Some("INFORMATION SEEKING"));
        assert_eq!(r.annotations[0].preceding_topical_relation, Some(Relation::No));
    }

    #[test]
    fn first_turn_yes_is_coerced() {
        let text = T1.replace(">NO<", ">YES<");
        let r = parse_s3dst_output(&text, 1, &od(), PromptVariant::S3dstJoint, ParseMode::Lenient);
        assert_eq!(r.annotations[0].preceding_topical_relation, Some(Relation::No));
        assert_eq!(r.recovered[0].action, RecoveryAction::CoercedFirstTurn);
    }

    #[test]
    fn missing_and_duplicate_blocks() {
        let second = T1.replace("T1>", "T2>").replace(">NO<", ">YES<");
        let dup = T1.replace("WEATHER", "NEWS");
        let text = format!("{T1}\n{dup}\n{second}");
        let r = parse_s3dst_output(&text, 3, &od(), PromptVariant::S3dstJoint, ParseMode::Lenient);
        assert_eq!(r.annotations.len(), 2);
        assert_eq!(r.annotations[0].domain.as_deref(), Some("WEATHER"));
        assert_eq!(r.recovered[0], Recovery { turn: Some(1), action: RecoveryAction::DuplicateBlock });
        assert_eq!(r.failures, vec![TurnFailure { turn: 3, reason: FailureReason::MissingBlock }]);
        assert!(r.covers(3));
    }

    #[test]
    fn unclosed_block_and_bare_ampersand() {
        let text = "<T1><summary>R&D question</summary><preceding_topical_relation>NO</preceding_topical_relation><intent>ANALYSIS</intent><domain>GAMES</domain>\n<T2><summary>x</summary><preceding_topical_relation>YES</preceding_topical_relation><intent>ANALYSIS</intent><domain>GAMES</domain></T2>";
        let r = parse_s3dst_output(text, 2, &od(), PromptVariant::S3dstJoint, ParseMode::Lenient);
        assert_eq!(r.annotations.len(), 2);
        assert_eq!(r.annotations[0].summary.as_deref(), Some("R&D question"));
        assert!(r.recovered.iter().any(|x| x.action == RecoveryAction::UnclosedBlock));
    }

    #[test]
    fn missing_tag_is_failure() {
        let text = T1.replace("<domain>WEATHER</domain>", "");
        let r = parse_s3dst_output(&text, 1, &od(), PromptVariant::S3dstJoint, ParseMode::Lenient);
        assert_eq!(r.failures[0].reason, FailureReason::MissingTag { tag: "domain".into() });
    }

    #[test]
    fn variant_controls_fields() {
        let r = parse_s3dst_output(T1, 1, &od(), PromptVariant::S3dstNoPar, ParseMode::Strict);
        assert_eq!(r.annotations[0].summary, None);
        let r = parse_s3dst_output(T1, 1, &od(), PromptVariant::TbtDst, ParseMode::Strict);
        assert_eq!(r.annotations[0].preceding_topical_relation, None);
        let r = parse_s3dst_output(T1, 1, &od(), PromptVariant::S3dstSegmentOnly, ParseMode::Strict);
        assert_eq!(r.annotations[0].intent, None);
        assert_eq!(r.annotations[0].preceding_topical_relation, Some(Relation::No));
    }

    #[test]
    fn extra_blocks_are_dropped() {
        let text = format!("{T1}\n{}", T1.replace("T1>", "T7>"));
        let r = parse_s3dst_output(&text, 1, &od(), PromptVariant::S3dstJoint, ParseMode::Lenient);
        assert_eq!(r.annotations.len(), 1);
        assert_eq!(r.recovered[0].action, RecoveryAction::ExtraTurnBlock { index: 7 });
    }

    const ROW: &str = "T1. SELECT * from states WHERE preceding_topical_relation = NO AND intent = ANALYSIS AND domain = GAMES;";

    #[test]
    fn sql_row() {
        let r = parse_icdst_output(ROW, 1, &od(), ParseMode::Strict);
        assert!(r.is_clean(), "{r:?}");
        let a = &r.annotations[0];
        assert_eq!(a.preceding_topical_relation, Some(Relation::No));
        assert_eq!(a.intent.as_deref(), Some("ANALYSIS"));
        assert_eq!(a.domain.as_deref(), Some("GAMES"));
    }

    #[test]
    fn sql_lowercase_keywords_and_quotes() {
        let lower = "T1. select * from states where preceding_topical_relation = 'NO' and intent = \"ANALYSIS\" and domain = GAMES;";
        let r = parse_icdst_output(lower, 1, &od(), ParseMode::Strict);
        assert_eq!(r.annotations, parse_icdst_output(ROW, 1, &od(), ParseMode::Strict).annotations);
    }

    #[test]
    fn sql_missing_semicolon() {
        let r = parse_icdst_output(ROW.trim_end_matches(';'), 1, &od(), ParseMode::Lenient);
        assert_eq!(r.annotations.len(), 1);
        assert_eq!(r.recovered, vec![Recovery { turn: Some(1), action: RecoveryAction::MissingSemicolon }]);
    }

    #[test]
    fn sql_values_containing_and() {
        let row = "T1. SELECT * from states WHERE preceding_topical_relation = NO AND intent = ANALYSIS AND domain = FINANCE AND ECONOMICS;";
        let r = parse_icdst_output(row, 1, &od(), ParseMode::Strict);
        assert_eq!(r.annotations[0].domain.as_deref(), Some("FINANCE AND ECONOMICS"));
    }

    #[test]
    fn sql_malformed_and_missing_rows() {
        let text = "T1. SELECT * from states WHERE nonsense;\nT3. SELECT * from states WHERE preceding_topical_relation = YES AND intent = ANALYSIS AND domain = GAMES;";
        let r = parse_icdst_output(text, 3, &od(), ParseMode::Lenient);
        assert!(matches!(r.failures[0].reason, FailureReason::MalformedRow { .. }));
        assert_eq!(r.failures[1], TurnFailure { turn: 2, reason: FailureReason::MissingBlock });
        assert_eq!(r.annotations[0].turn_index, 3);
        assert!(r.covers(3));
    }

    #[test]
    fn slot_lists() {
        let mwoz = LabelSchema::mwoz();
        let p = parse_slot_value_list("['hotel-area-east', 'train-day-friday']", &mwoz);
        assert!(p.errors.is_empty());
        let m = p.to_map();
        assert_eq!(m["hotel-area"], "east");
        assert_eq!(m["train-day"], "friday");

        let p = parse_slot_value_list("['hotel-book day-monday']", &mwoz);
        assert_eq!(p.entries, vec![SlotEntry { slot: "hotel-book day".into(), value: "monday".into() }]);

        assert_eq!(parse_slot_value_list("[]", &mwoz), SlotListParse::default());
        assert!(parse_slot_value_list("  ", &mwoz).entries.is_empty());

        let p = parse_slot_value_list("['spaceship-color-red', 'hotel-area-']", &mwoz);
        assert!(matches!(p.errors[0], FailureReason::UnknownSlot { .. }));
        assert!(matches!(p.errors[1], FailureReason::EmptySlotValue { .. }));
    }

    #[test]
    fn slot_values_with_apostrophes_and_double_quotes() {
        let mwoz = LabelSchema::mwoz();
        let p = parse_slot_value_list("['attraction-name-king's college', 'hotel-area-east']", &mwoz);
        assert_eq!(p.entries[0].value, "king's college");
        let p = parse_slot_value_list("[\"hotel-area-east\", \"hotel-stars-4\"]", &mwoz);
        assert_eq!(p.to_map()["hotel-stars"], "4");
    }

    #[test]
    fn mwoz_blocks() {
        let mwoz = LabelSchema::mwoz();
        let text = "<T1>\n<agent_context></agent_context>\n<user_utterance>taxi at 5pm</user_utterance>\n<updated_slot_value>['taxi-leave at-17:00']</updated_slot_value>\n</T1>\n<T2><updated_slot_value>[]</updated_slot_value></T2>\n<T3><user_utterance>x</user_utterance></T3>";
        let r = parse_mwoz_output(text, 3, &mwoz, ParseMode::Lenient);
        assert_eq!(r.annotations[0].entries, vec![SlotEntry { slot: "taxi-leave at".into(), value: "17:00".into() }]);
        assert!(r.annotations[1].entries.is_empty());
        assert_eq!(r.failures[0].turn, 3);
        assert!(r.covers(3));
    }

    #[test]
    fn conversation_reader_round_trip() {
        let conv = Conversation::from_pairs("c", [("a < b", Some("x & y")), ("multi\nline", None)]).unwrap();
        let text = crate::prompt::render_conversation_xml(&conv);
        assert_eq!(read_conversation_xml("c", &text).unwrap(), conv);
    }
}
