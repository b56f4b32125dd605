//! Zero-shot joint dialogue segmentation and state tracking.
//!
//! The crate is pure: it renders prompts, parses model outputs, rebuilds
//! segment-level dialogue states and scores them. Talking to a model lives
//! elsewhere.

pub mod conversation;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod parse;
pub mod prompt;
pub mod record;
pub mod schema;
pub mod track;
pub mod xml;

pub use conversation::{Conversation, Speaker, Turn, Utterance};
pub use error::{Error, Result};
pub use prompt::{build_prompt, PromptVariant, RenderedPrompt};
pub use record::{BoundarySet, DialogueStateRecord, Relation, SegmentState, TurnSlotState};
pub use schema::LabelSchema;
