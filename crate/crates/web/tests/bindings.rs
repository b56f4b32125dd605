use segdst_core::data::load_jsonl;
use segdst_core::{build_prompt, LabelSchema, PromptVariant};
use segdst_web::{analyze_output, parse_transcript, render_prompt, segmentation_detail, segmentation_metrics, variants};
use serde_json::Value;

const TRANSCRIPT: &str = "user: Find me a flight to Tokyo\nagent: Sure, which dates?\n\nuser: Next Friday.\nActually Saturday.\nagent: Done.\nuser: Now write a haiku about rain";

#[test]
fn transcript_lines_become_turns() {
    let conv = parse_transcript(TRANSCRIPT).unwrap();
    assert_eq!(conv.len(), 3);
    assert_eq!(conv.turns[1].user, "Next Friday.\nActually Saturday.");
    assert_eq!(conv.turns[1].agent.as_deref(), Some("Done."));
    assert_eq!(conv.turns[2].agent, None);

    assert!(parse_transcript("agent: hello").unwrap_err().contains("line 1"));
    assert!(parse_transcript("user: a\nagent: b\nagent: c").unwrap_err().contains("line 3"));
    assert!(parse_transcript("hello").is_err());
    assert!(parse_transcript("  \n").is_err());
}

#[test]
fn rendered_prompt_matches_core() {
    let list: Vec<String> = serde_json::from_str(&variants()).unwrap();
    assert_eq!(list.len(), 7);
    let conv = parse_transcript(TRANSCRIPT).unwrap();
    let expected = build_prompt(PromptVariant::IcdstSql, &conv, &LabelSchema::open_domain()).unwrap().text;
    assert_eq!(render_prompt("icdst-sql", TRANSCRIPT).unwrap(), expected);
    assert!(render_prompt("nope", TRANSCRIPT).is_err());
}

#[test]
fn analysis_reconstructs_segments() {
    let output = "<T1>\n<summary>flight</summary>\n<preceding_topical_relation>NO</preceding_topical_relation>\n<intent>INFORMATION SEEKING</intent>\n<domain>TRAVEL</domain>\n</T1>\n\
<T2>\n<summary>dates</summary>\n<preceding_topical_relation>YES</preceding_topical_relation>\n<intent>INFORMATION SEEKING</intent>\n<domain>TRAVEL</domain>\n</T2>\n\
<T3>\n<summary>haiku</summary>\n<preceding_topical_relation>NO</preceding_topical_relation>\n<intent>CREATION</intent>\n<domain>LITERATURE AND POETRY</domain>\n</T3>";
    let json: Value = serde_json::from_str(&analyze_output("S3DST_JOINT", TRANSCRIPT, output, false).unwrap()).unwrap();
    assert_eq!(json["failures"].as_array().unwrap().len(), 0);
    let segments = json["record"]["segments"].as_array().unwrap();
    assert_eq!(segments.len(), 2);

    let fenced = format!("```xml\n{output}\n```");
    let json: Value = serde_json::from_str(&analyze_output("S3DST_JOINT", TRANSCRIPT, &fenced, false).unwrap()).unwrap();
    assert!(!json["recovered"].as_array().unwrap().is_empty());
    assert_eq!(json["record"]["segments"].as_array().unwrap().len(), 2);
}

#[test]
fn window_detail_agrees_with_totals() {
    let d = segmentation_detail(6, "2, 4", "3", 1).unwrap();
    assert_eq!(d.windows.len(), 5);
    assert!((d.pk - 0.6).abs() < 1e-12);
    assert!((d.window_diff - 0.6).abs() < 1e-12);
    let pk_errors = d.windows.iter().filter(|w| w.pk_error).count();
    assert_eq!(pk_errors, 3);
    // window starting at 2 holds the reference boundary 2 only
    assert_eq!((d.windows[1].reference_boundaries, d.windows[1].hypothesis_boundaries), (1, 0));

    // k = 0 uses the default: 6 units, 3 segments -> 1
    assert_eq!(segmentation_detail(6, "2 4", "", 0).unwrap().k, 1);
    assert!(segmentation_metrics(6, "9", "", 1).is_err());
    assert!(segmentation_metrics(6, "x", "", 1).is_err());
    assert!(segmentation_metrics(6, "2", "", 6).is_err());
}

#[test]
fn fixture_conversation_renders_through_transcript_form() {
    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/open_domain.jsonl");
    let bundle = load_jsonl(fixtures).unwrap();
    let conv = bundle.get("c02").unwrap();
    let transcript: String = conv
        .turns
        .iter()
        .map(|t| match &t.agent {
            Some(a) => format!("user: {}\nagent: {}\n", t.user, a),
            None => format!("user: {}\n", t.user),
        })
        .collect();
    let rebuilt = parse_transcript(&transcript).unwrap();
    assert_eq!(rebuilt.turns, conv.turns);
}
