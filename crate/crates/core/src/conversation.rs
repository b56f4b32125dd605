//! Conversations as ordered user/agent turn pairs.
//!
//! A raw chat log is a flat stream of utterances. Consecutive user messages
//! are grouped into one turn so that every turn is a single (user, agent)
//! pair; the agent reply may be missing only on the last turn.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

impl Utterance {
    pub fn user(text: impl Into<String>) -> Self {
        Utterance {
            speaker: Speaker::User,
            text: text.into(),
        }
    }

    pub fn agent(text: impl Into<String>) -> Self {
        Utterance {
            speaker: Speaker::Agent,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    /// 1-based position in the conversation.
    pub index: usize,
    pub user: String,
    /// `None` means the user has not been answered yet, which is distinct
    /// from an empty reply.
    pub agent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source: BTreeMap<String, String>,
}

impl Conversation {
    /// Builds a conversation from already-paired turns, checking turn
    /// invariants.
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self> {
        let conv = Conversation {
            id: id.into(),
            turns,
            source: BTreeMap::new(),
        };
        conv.check()?;
        Ok(conv)
    }

    /// Builds a conversation from `(user, agent)` pairs, numbering turns
    /// from 1.
    pub fn from_pairs<I, U>(id: impl Into<String>, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (U, Option<U>)>,
        U: Into<String>,
    {
        let turns = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (user, agent))| Turn {
                index: i + 1,
                user: user.into(),
                agent: agent.map(Into::into),
            })
            .collect();
        Conversation::new(id, turns)
    }

    pub fn from_events(id: impl Into<String>, events: &[Utterance]) -> Result<Self> {
        Conversation::new(id, normalize_events(events)?)
    }

    pub fn with_source(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.source.insert(key.into(), value.into());
        self
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn turn(&self, index: usize) -> Option<&Turn> {
        index.checked_sub(1).and_then(|i| self.turns.get(i))
    }

    /// Flattens the conversation back into an utterance stream.
    pub fn events(&self) -> Vec<Utterance> {
        let mut out = Vec::with_capacity(self.turns.len() * 2);
        for turn in &self.turns {
            out.push(Utterance::user(turn.user.clone()));
            if let Some(agent) = &turn.agent {
                out.push(Utterance::agent(agent.clone()));
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let last = self.turns.len();
        for (position, turn) in self.turns.iter().enumerate() {
            if turn.index != position + 1 {
                return Err(Error::NonContiguousTurns {
                    position: position + 1,
                    found: turn.index,
                });
            }
            if turn.user.is_empty() {
                return Err(Error::EmptyUserText(turn.index));
            }
            if turn.agent.is_none() && turn.index != last {
                return Err(Error::MissingAgentReply(turn.index));
            }
        }
        Ok(())
    }
}

/// Groups a flat utterance stream into turns.
///
/// Consecutive user utterances are joined with a single newline. Each agent
/// utterance closes the open turn; further agent utterances before the next
/// user message are appended to that same reply with a newline. A trailing
/// user run becomes a final turn without an agent reply.
pub fn normalize_events(events: &[Utterance]) -> Result<Vec<Turn>> {
    let first = events.first().ok_or(Error::EmptyEvents)?;
    if first.speaker == Speaker::Agent {
        return Err(Error::LeadingAgent);
    }

    let mut turns: Vec<Turn> = Vec::new();
    let mut user: Option<String> = None;
    for event in events {
        match event.speaker {
            Speaker::User => match &mut user {
                Some(open) => {
                    open.push('\n');
                    open.push_str(&event.text);
                }
                None => user = Some(event.text.clone()),
            },
            Speaker::Agent => match user.take() {
                Some(text) => turns.push(Turn {
                    index: turns.len() + 1,
                    user: text,
                    agent: Some(event.text.clone()),
                }),
                None => {
                    // agent spoke twice in a row
                    let prev = turns.last_mut().and_then(|t| t.agent.as_mut());
                    if let Some(reply) = prev {
                        reply.push('\n');
                        reply.push_str(&event.text);
                    }
                }
            },
        }
    }
    if let Some(text) = user {
        turns.push(Turn {
            index: turns.len() + 1,
            user: text,
            agent: None,
        });
    }

    if let Some(turn) = turns.iter().find(|t| t.user.is_empty()) {
        return Err(Error::EmptyUserText(turn.index));
    }
    Ok(turns)
}
