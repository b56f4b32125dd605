//! Rendered prompts compared byte for byte against checked-in files.
//! Regenerate with `SEGDST_BLESS=1 cargo test -p segdst-core --test golden`
//! and review the diff.

use std::path::PathBuf;

use segdst_core::data::load_jsonl;
use segdst_core::{build_prompt, Conversation, LabelSchema, PromptVariant};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests")
}

fn fixture_conversation() -> Conversation {
    let bundle = load_jsonl(root().join("fixtures/open_domain.jsonl")).unwrap();
    bundle.get("c01").unwrap().clone()
}

fn schema_for(variant: PromptVariant) -> LabelSchema {
    if variant == PromptVariant::S3dstMwoz {
        LabelSchema::mwoz()
    } else {
        LabelSchema::open_domain()
    }
}

fn golden_path(variant: PromptVariant) -> PathBuf {
    root().join("golden").join(format!("{}.txt", variant.name().to_lowercase()))
}

#[test]
fn prompts_match_golden_files() {
    let conv = fixture_conversation();
    let bless = std::env::var_os("SEGDST_BLESS").is_some();
    for variant in PromptVariant::ALL {
        let rendered = build_prompt(variant, &conv, &schema_for(variant)).unwrap().text;
        let path = golden_path(variant);
        if bless {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &rendered).unwrap();
        }
        let golden = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(rendered == golden, "{variant} prompt differs from {}", path.display());
    }
}

#[test]
fn no_par_golden_only_deletes_par_lines() {
    let joint = std::fs::read_to_string(golden_path(PromptVariant::S3dstJoint)).unwrap();
    let no_par = std::fs::read_to_string(golden_path(PromptVariant::S3dstNoPar)).unwrap();
    let mut kept = no_par.lines().peekable();
    let mut deleted = Vec::new();
    for line in joint.lines() {
        if kept.peek() == Some(&line) {
            kept.next();
        } else {
            deleted.push(line);
        }
    }
    assert!(kept.next().is_none(), "No-PAR prompt has lines the joint prompt lacks");
    assert_eq!(deleted.len(), 2, "{deleted:?}");
    assert!(deleted.iter().all(|l| l.to_lowercase().contains("summar")), "{deleted:?}");
}

#[test]
fn tag_vocabulary_per_variant() {
    let conv = fixture_conversation();
    let render = |v| build_prompt(v, &conv, &schema_for(v)).unwrap().text;
    assert!(render(PromptVariant::S3dstJoint).contains("<valid_preceding_topical_relation>"));
    let tbt = render(PromptVariant::TbtDst);
    assert!(!tbt.contains("preceding_topical_relation"));
    assert!(!tbt.to_lowercase().contains("segment"));
    assert!(!render(PromptVariant::S3dstNoPar).contains("<summary>"));
    // the unstructured variant gets plain text, not turn tags
    let plain = render(PromptVariant::S3dstUnstructuredInput);
    assert!(plain.contains("user: Hi there! How are you today?"));
    assert!(!plain.contains("<user>Hi there!"));
    // special characters are escaped inside XML input
    assert!(render(PromptVariant::S3dstJoint).contains("Haneda &amp; Delta"));
}
