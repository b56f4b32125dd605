//! Label vocabularies: segmentation labels, intents, domains and slots.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const OPEN_DOMAIN_SCHEMA: &str = include_str!("../resources/open_domain_schema.json");
const MWOZ_SCHEMA: &str = include_str!("../resources/mwoz_schema.json");

/// Slot names used for intent and domain when open-domain states are
/// expressed as slot/value maps.
pub const INTENT_SLOT: &str = "intent";
pub const DOMAIN_SLOT: &str = "domain";
/// Per-turn relation label key used when scoring the segment component.
pub const SEGMENT_SLOT: &str = "segment";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Label {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Label {
            name: name.into(),
            description: Some(description.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    /// `{domain}-{slot}`; the slot part may contain spaces.
    pub name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_values: Option<Vec<String>>,
}

impl SlotSpec {
    pub fn free(name: impl Into<String>, description: impl Into<String>) -> Self {
        SlotSpec {
            name: name.into(),
            description: description.into(),
            valid_values: None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.valid_values.as_ref().is_some_and(|v| !v.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaMode {
    /// Intents and domains per segment.
    OpenDomain,
    /// Only the YES/NO segmentation labels are needed.
    SegmentOnly,
    /// MultiWOZ-style slots.
    Mwoz,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub segmentation_labels: Vec<Label>,
    #[serde(default)]
    pub intents: Vec<Label>,
    #[serde(default)]
    pub domains: Vec<String>,
    #[serde(default)]
    pub slots: Vec<SlotSpec>,
}

impl LabelSchema {
    /// The four-intent, 49-domain open-domain taxonomy.
    pub fn open_domain() -> Self {
        serde_json::from_str(OPEN_DOMAIN_SCHEMA).expect("bundled open-domain schema parses")
    }

    /// MultiWOZ slots for the hotel, restaurant, attraction, train and taxi
    /// domains.
    pub fn mwoz() -> Self {
        serde_json::from_str(MWOZ_SCHEMA).expect("bundled MultiWOZ schema parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: LabelSchema =
            serde_json::from_str(text).map_err(|e| Error::InvalidSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelSchema::from_json(&text)
    }

    pub fn yes_label(&self) -> Option<&Label> {
        self.segmentation_labels.iter().find(|l| l.name == "YES")
    }

    pub fn no_label(&self) -> Option<&Label> {
        self.segmentation_labels.iter().find(|l| l.name == "NO")
    }

    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Case-insensitive lookup returning the schema's spelling.
    pub fn canonical_intent(&self, value: &str) -> Option<&str> {
        self.intents
            .iter()
            .map(|l| l.name.as_str())
            .find(|name| name.eq_ignore_ascii_case(value))
    }

    pub fn canonical_domain(&self, value: &str) -> Option<&str> {
        self.domains
            .iter()
            .map(String::as_str)
            .find(|name| name.eq_ignore_ascii_case(value))
    }

    /// Structural checks that hold regardless of mode.
    pub fn validate(&self) -> Result<()> {
        let mut seg: Vec<&str> = self.segmentation_labels.iter().map(|l| l.name.as_str()).collect();
        seg.sort_unstable();
        if seg != ["NO", "YES"] {
            return Err(Error::InvalidSchema(
                "segmentation labels must be exactly YES and NO".into(),
            ));
        }
        unique("intent", self.intents.iter().map(|l| l.name.as_str()))?;
        unique("domain", self.domains.iter().map(String::as_str))?;
        unique("slot", self.slots.iter().map(|s| s.name.as_str()))?;
        for slot in &self.slots {
            match slot.name.split_once('-') {
                Some((domain, rest)) if !domain.is_empty() && !rest.is_empty() => {}
                _ => {
                    return Err(Error::InvalidSchema(format!(
                        "slot `{}` is not of the form domain-slot",
                        slot.name
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, mode: SchemaMode) -> Result<()> {
        self.validate()?;
        match mode {
            SchemaMode::OpenDomain if self.intents.is_empty() || self.domains.is_empty() => Err(
                Error::InvalidSchema("open-domain mode needs intents and domains".into()),
            ),
            SchemaMode::Mwoz if self.slots.is_empty() => {
                Err(Error::InvalidSchema("MultiWOZ mode needs slots".into()))
            }
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 of the schema's canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn unique<'a>(kind: &str, names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if name.trim().is_empty() {
            return Err(Error::InvalidSchema(format!("empty {kind} name")));
        }
        if !seen.insert(name) {
            return Err(Error::InvalidSchema(format!("duplicate {kind} `{name}`")));
        }
    }
    Ok(())
}
