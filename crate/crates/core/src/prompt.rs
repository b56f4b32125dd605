//! Prompt rendering for every supported prompting strategy.
//!
//! Instruction text lives in `templates/v1/*.txt`, one file per variant.
//! A template may reference `{{schema}}`, `{{conversation}}` and
//! `{{turn_count}}`; substitution is single-pass, so placeholder-like text
//! inside utterances is never expanded.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conversation::Conversation;
use crate::error::{Error, Result};
use crate::schema::{LabelSchema, SchemaMode};
use crate::xml::escape;

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptVariant {
    /// XML input and output with per-turn summaries, relation, intent and domain.
    S3dstJoint,
    /// Joint prompt without the summary instruction and `<summary>` slot.
    S3dstNoPar,
    /// Joint prompt with the conversation given as plain numbered text.
    S3dstUnstructuredInput,
    /// Summaries and relation labels only; used for segmentation benchmarks.
    S3dstSegmentOnly,
    /// Slot-value extraction over MultiWOZ slots.
    S3dstMwoz,
    /// Turn-by-turn intent and domain without segmentation.
    TbtDst,
    /// SQL table formulation with one `SELECT` per turn.
    IcdstSql,
}

/// Shape of the text a model is asked to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputDialect {
    Xml,
    Sql,
    SlotList,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 7] = [
        PromptVariant::S3dstJoint,
        PromptVariant::S3dstNoPar,
        PromptVariant::S3dstUnstructuredInput,
        PromptVariant::S3dstSegmentOnly,
        PromptVariant::S3dstMwoz,
        PromptVariant::TbtDst,
        PromptVariant::IcdstSql,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptVariant::S3dstJoint => "S3DST_JOINT",
            PromptVariant::S3dstNoPar => "S3DST_NO_PAR",
            PromptVariant::S3dstUnstructuredInput => "S3DST_UNSTRUCTURED_INPUT",
            PromptVariant::S3dstSegmentOnly => "S3DST_SEGMENT_ONLY",
            PromptVariant::S3dstMwoz => "S3DST_MWOZ",
            PromptVariant::TbtDst => "TBT_DST",
            PromptVariant::IcdstSql => "ICDST_SQL",
        }
    }

    pub fn mode(self) -> SchemaMode {
        match self {
            PromptVariant::S3dstSegmentOnly => SchemaMode::SegmentOnly,
            PromptVariant::S3dstMwoz => SchemaMode::Mwoz,
            _ => SchemaMode::OpenDomain,
        }
    }

    pub fn dialect(self) -> OutputDialect {
        match self {
            PromptVariant::IcdstSql => OutputDialect::Sql,
            PromptVariant::S3dstMwoz => OutputDialect::SlotList,
            _ => OutputDialect::Xml,
        }
    }

    /// Whether the model is asked for a `<summary>` before its labels.
    pub fn has_par(self) -> bool {
        matches!(
            self,
            PromptVariant::S3dstJoint
                | PromptVariant::S3dstUnstructuredInput
                | PromptVariant::S3dstSegmentOnly
                | PromptVariant::TbtDst
        )
    }

    /// Whether the output carries a preceding-topical-relation label.
    pub fn has_segmentation(self) -> bool {
        !matches!(self, PromptVariant::TbtDst | PromptVariant::S3dstMwoz)
    }

    pub fn has_intent_domain(self) -> bool {
        self.mode() == SchemaMode::OpenDomain
    }

    pub fn template(self) -> &'static str {
        match self {
            PromptVariant::S3dstJoint => include_str!("../templates/v1/s3dst_joint.txt"),
            PromptVariant::S3dstNoPar => include_str!("../templates/v1/s3dst_no_par.txt"),
            PromptVariant::S3dstUnstructuredInput => {
                include_str!("../templates/v1/s3dst_unstructured_input.txt")
            }
            PromptVariant::S3dstSegmentOnly => {
                include_str!("../templates/v1/s3dst_segment_only.txt")
            }
            PromptVariant::S3dstMwoz => include_str!("../templates/v1/s3dst_mwoz.txt"),
            PromptVariant::TbtDst => include_str!("../templates/v1/tbt_dst.txt"),
            PromptVariant::IcdstSql => include_str!("../templates/v1/icdst_sql.txt"),
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().replace('-', "_").to_ascii_uppercase();
        PromptVariant::ALL
            .into_iter()
            .find(|v| v.name() == wanted)
            .ok_or_else(|| Error::UnknownName {
                kind: "prompt variant",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub variant: PromptVariant,
    pub text: String,
    pub turn_count: usize,
    pub schema_fingerprint: String,
    pub template_version: String,
}

/// `<T{i}>` blocks with nested `<user>` and `<agent>` tags, one tag per line.
pub fn render_conversation_xml(conv: &Conversation) -> String {
    conv.turns
        .iter()
        .map(|turn| {
            format!(
                "<T{i}>\n<user>{}</user>\n<agent>{}</agent>\n</T{i}>",
                escape(&turn.user),
                escape(turn.agent.as_deref().unwrap_or("")),
                i = turn.index
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Plain numbered turns `T1.` .. `Tt.` without markup.
pub fn render_conversation_plain(conv: &Conversation) -> String {
    conv.turns
        .iter()
        .map(|turn| {
            format!(
                "T{}.\nuser: {}\nagent: {}",
                turn.index,
                turn.user,
                turn.agent.as_deref().unwrap_or("")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// MultiWOZ layout: each turn carries the previous agent reply as
/// `<agent_context>` (empty on turn 1) followed by the user utterance.
pub fn render_conversation_mwoz(conv: &Conversation) -> String {
    let mut prev = "";
    let mut blocks = Vec::with_capacity(conv.turns.len());
    for turn in &conv.turns {
        blocks.push(format!(
            "<T{i}>\n<agent_context>{}</agent_context>\n<user>{}</user>\n</T{i}>",
            escape(prev),
            escape(&turn.user),
            i = turn.index
        ));
        prev = turn.agent.as_deref().unwrap_or("");
    }
    blocks.join("\n")
}

/// Renders the label block the variant's template expects.
pub fn render_schema(schema: &LabelSchema, variant: PromptVariant) -> Result<String> {
    check_mode(schema, variant)?;
    let mut out = String::new();
    match variant {
        PromptVariant::S3dstMwoz => push_slots(&mut out, schema),
        PromptVariant::IcdstSql => push_sql_table(&mut out, schema),
        PromptVariant::S3dstSegmentOnly => push_relations(&mut out, schema),
        PromptVariant::TbtDst => {
            push_domains(&mut out, schema);
            push_intents(&mut out, schema);
        }
        _ => {
            push_domains(&mut out, schema);
            push_relations(&mut out, schema);
            push_intents(&mut out, schema);
        }
    }
    // drop the final newline; the template supplies line breaks
    out.pop();
    Ok(out)
}

pub fn build_prompt(
    variant: PromptVariant,
    conv: &Conversation,
    schema: &LabelSchema,
) -> Result<RenderedPrompt> {
    if conv.is_empty() {
        return Err(Error::EmptyConversation);
    }
    let schema_block = render_schema(schema, variant)?;
    let conversation = match variant {
        PromptVariant::S3dstUnstructuredInput | PromptVariant::IcdstSql => {
            render_conversation_plain(conv)
        }
        PromptVariant::S3dstMwoz => render_conversation_mwoz(conv),
        _ => render_conversation_xml(conv),
    };
    let turn_count = conv.len().to_string();
    let text = fill_template(
        variant.template(),
        &[
            ("schema", &schema_block),
            ("conversation", &conversation),
            ("turn_count", &turn_count),
        ],
    );
    Ok(RenderedPrompt {
        variant,
        text,
        turn_count: conv.len(),
        schema_fingerprint: schema.fingerprint(),
        template_version: TEMPLATE_VERSION.to_string(),
    })
}

fn check_mode(schema: &LabelSchema, variant: PromptVariant) -> Result<()> {
    schema
        .validate_for(variant.mode())
        .map_err(|_| Error::SchemaModeMismatch {
            variant: variant.name(),
            needed: match variant.mode() {
                SchemaMode::OpenDomain => "open-domain (intents and domains)",
                SchemaMode::SegmentOnly => "segmentation-label",
                SchemaMode::Mwoz => "MultiWOZ (slots)",
            },
        })
}

fn fill_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 4096);
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let replaced = after.find("}}").and_then(|close| {
            let key = &after[..close];
            values
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (*v, close + 2))
        });
        match replaced {
            Some((value, consumed)) => {
                out.push_str(value);
                rest = &after[consumed..];
            }
            None => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn push_domains(out: &mut String, schema: &LabelSchema) {
    out.push_str("<valid_domains>\n");
    for d in &schema.domains {
        out.push_str(&format!("<item>{d}</item>\n"));
    }
    out.push_str("</valid_domains>\n");
}

fn push_relations(out: &mut String, schema: &LabelSchema) {
    out.push_str("<valid_preceding_topical_relation>\n");
    for label in [schema.yes_label(), schema.no_label()].into_iter().flatten() {
        push_named_item(out, &label.name, label.description.as_deref());
    }
    out.push_str("</valid_preceding_topical_relation>\n");
}

fn push_intents(out: &mut String, schema: &LabelSchema) {
    out.push_str("<valid_intents>\n");
    for label in &schema.intents {
        push_named_item(out, &label.name, label.description.as_deref());
    }
    out.push_str("</valid_intents>\n");
}

fn push_named_item(out: &mut String, name: &str, desc: Option<&str>) {
    out.push_str("<item>\n");
    out.push_str(&format!("<name>{name}</name>\n"));
    if let Some(desc) = desc {
        out.push_str(&format!("<desc>{desc}</desc>\n"));
    }
    out.push_str("</item>\n");
}

fn push_slots(out: &mut String, schema: &LabelSchema) {
    out.push_str("<slots>\n");
    for slot in &schema.slots {
        out.push_str("<item>\n");
        out.push_str(&format!("<name>{}</name>\n", slot.name));
        out.push_str(&format!("<description>{}</description>\n", slot.description));
        if let Some(values) = slot.valid_values.as_ref().filter(|v| !v.is_empty()) {
            out.push_str(&format!("<valid_values>{}</valid_values>\n", values.join(", ")));
        }
        out.push_str("</item>\n");
    }
    out.push_str("</slots>\n");
}

fn push_sql_table(out: &mut String, schema: &LabelSchema) {
    let domains = schema.domains.join(", ");
    let intents: Vec<&str> = schema.intents.iter().map(|l| l.name.as_str()).collect();
    out.push_str("CREATE TABLE states(\n");
    out.push_str(&format!("domain text CHECK (domain IN ({domains})),\n"));
    out.push_str(
        "preceding_topical_relation text CHECK (preceding_topical_relation IN (YES, NO)),\n",
    );
    out.push_str(&format!(
        "intent text CHECK (intent IN ({})),\n",
        intents.join(", ")
    ));
    out.push_str(")\n/*\n## DESCRIPTION OF SELECTED COLUMN-VALUE PAIRS:\n");
    for label in [schema.no_label(), schema.yes_label()].into_iter().flatten() {
        if let Some(desc) = &label.description {
            out.push_str(&format!(
                "- preceding_topical_relation-{}: {desc}\n",
                label.name
            ));
        }
    }
    for label in &schema.intents {
        if let Some(desc) = &label.description {
            out.push_str(&format!("- intent-{}: {desc}\n", label.name));
        }
    }
    out.push_str("*/\n");
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv() -> Conversation {
        Conversation::from_pairs(
            "c",
            [("hi", Some("hello")), ("weather in Paris?", Some("Sunny."))],
        )
        .unwrap()
    }

    #[test]
    fn single_turn_xml() {
        let c = Conversation::from_pairs("c", [("hi", Some("hello"))]).unwrap();
        assert_eq!(
            render_conversation_xml(&c).replace('\n', ""),
            "<T1><user>hi</user><agent>hello</agent></T1>"
        );
    }

    #[test]
    fn xml_escapes_and_handles_missing_agent() {
        let c = Conversation::from_pairs("c", [("a < b & c", None)]).unwrap();
        assert_eq!(
            render_conversation_xml(&c),
            "<T1>\n<user>a &lt; b &amp; c</user>\n<agent></agent>\n</T1>"
        );
        let empty = Conversation::new("e", vec![]).unwrap();
        assert_eq!(render_conversation_xml(&empty), "");
    }

    #[test]
    fn mwoz_agent_context_is_previous_reply() {
        let text = render_conversation_mwoz(&conv());
        assert!(text.starts_with("<T1>\n<agent_context></agent_context>\n<user>hi</user>"));
        assert!(text.contains("<T2>\n<agent_context>hello</agent_context>"));
    }

    #[test]
    fn schema_blocks() {
        let od = LabelSchema::open_domain();
        let block = render_schema(&od, PromptVariant::S3dstJoint).unwrap();
        let d = block.find("<valid_domains>").unwrap();
        let r = block.find("<valid_preceding_topical_relation>").unwrap();
        let i = block.find("<valid_intents>").unwrap();
        assert!(d < r && r < i);
        assert!(block.contains(
            "<desc>The current turn has **some or any** topical/subtopical relation to the preceding conversation context.</desc>"
        ));

        let mwoz = LabelSchema::mwoz();
        let block = render_schema(&mwoz, PromptVariant::S3dstMwoz).unwrap();
        assert!(block.contains(
            "<item>\n<name>taxi-leave at</name>\n<description>the time when the user wants to get the taxi</description>\n</item>"
        ));
        assert!(block.contains("<name>hotel-area</name>"));
        assert!(block.contains("<valid_values>centre, east, north, south, west, dontcare</valid_values>"));
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let od = LabelSchema::open_domain();
        let mwoz = LabelSchema::mwoz();
        assert!(matches!(
            render_schema(&od, PromptVariant::S3dstMwoz),
            Err(Error::SchemaModeMismatch { .. })
        ));
        assert!(build_prompt(PromptVariant::S3dstJoint, &conv(), &mwoz).is_err());
        // segment-only needs nothing beyond YES/NO
        assert!(build_prompt(PromptVariant::S3dstSegmentOnly, &conv(), &mwoz).is_ok());
    }

    #[test]
    fn empty_conversation_is_rejected() {
        let empty = Conversation::new("e", vec![]).unwrap();
        assert!(matches!(
            build_prompt(PromptVariant::S3dstJoint, &empty, &LabelSchema::open_domain()),
            Err(Error::EmptyConversation)
        ));
    }

    #[test]
    fn placeholders_in_utterances_are_not_expanded() {
        let c = Conversation::from_pairs("c", [("say {{turn_count}} {{schema}}", Some("ok"))])
            .unwrap();
        let p = build_prompt(PromptVariant::S3dstJoint, &c, &LabelSchema::open_domain()).unwrap();
        assert!(p.text.contains("<user>say {{turn_count}} {{schema}}</user>"));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in PromptVariant::ALL {
            assert_eq!(v.name().parse::<PromptVariant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
        assert_eq!("tbt-dst".parse::<PromptVariant>().unwrap(), PromptVariant::TbtDst);
        assert!("nope".parse::<PromptVariant>().is_err());
    }

    #[test]
    fn joint_prompt_contents() {
        let p = build_prompt(PromptVariant::S3dstJoint, &conv(), &LabelSchema::open_domain())
            .unwrap();
        assert!(p.text.contains(
            "When preceding_topical_relation is YES, you must use the exact same intent and domain label"
        ));
        assert!(p.text.contains("<summary>"));
        assert_eq!(p.turn_count, 2);
        assert!(p.text.ends_with("</T2>\n## OUTPUT ##\n"));
    }

    #[test]
    fn icdst_starts_with_ddl() {
        let p = build_prompt(PromptVariant::IcdstSql, &conv(), &LabelSchema::open_domain())
            .unwrap();
        assert!(p.text.starts_with("CREATE TABLE states(\n"));
        assert!(p.text.contains(
            "T{turn number}. SELECT * from states WHERE preceding_topical_relation = {your answer}"
        ));
        assert!(p.text.contains("- intent-INFORMATION SEEKING: The user wants to find factual information or answers to specific questions."));
    }
}
