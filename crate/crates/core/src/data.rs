//! Dataset loading into conversations plus gold annotations.
//!
//! Every loader returns conversations sorted by id, so results do not
//! depend on file order or directory enumeration order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::conversation::{Conversation, Turn};
use crate::error::{Error, Result};
use crate::record::{validate_record, BoundarySet, DialogueStateRecord, TurnSlotState};
use crate::schema::LabelSchema;
use crate::track::normalize_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Mwoz21,
    Mwoz24,
    Dialseg711,
    Jsonl,
}

impl DatasetFormat {
    pub fn name(self) -> &'static str {
        match self {
            DatasetFormat::Mwoz21 => "mwoz21",
            DatasetFormat::Mwoz24 => "mwoz24",
            DatasetFormat::Dialseg711 => "dialseg711",
            DatasetFormat::Jsonl => "jsonl",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mwoz21" => Ok(DatasetFormat::Mwoz21),
            "mwoz24" => Ok(DatasetFormat::Mwoz24),
            "dialseg711" => Ok(DatasetFormat::Dialseg711),
            "jsonl" => Ok(DatasetFormat::Jsonl),
            _ => Err(Error::UnknownName {
                kind: "dataset format",
                value: s.to_string(),
            }),
        }
    }
}

/// Gold annotation for one conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gold {
    /// Boundaries plus per-segment intent/domain.
    Segments(DialogueStateRecord),
    /// Cumulative slot state after every turn.
    SlotStates { states: Vec<TurnSlotState> },
    /// Segmentation only.
    Boundaries(BoundarySet),
}

impl Gold {
    pub fn boundaries(&self) -> Option<&BoundarySet> {
        match self {
            Gold::Segments(r) => Some(&r.boundaries),
            Gold::Boundaries(b) => Some(b),
            Gold::SlotStates { .. } => None,
        }
    }

    /// Why this gold cannot describe a conversation of `t` turns, if it
    /// cannot.
    pub fn mismatch(&self, t: usize) -> Option<String> {
        match self {
            Gold::Segments(r) => {
                let v = validate_record(r, t);
                (!v.is_empty()).then(|| {
                    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
                })
            }
            Gold::Boundaries(b) => {
                (b.len() != t).then(|| format!("gold covers {} turns, conversation has {t}", b.len()))
            }
            Gold::SlotStates { states } => {
                let idx: Vec<usize> = states.iter().map(|s| s.turn_index).collect();
                (idx != (1..=t).collect::<Vec<_>>()).then(|| {
                    format!("gold states for {} turns, conversation has {t}", states.len())
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub conversations: Vec<Conversation>,
    pub gold: BTreeMap<String, Gold>,
    pub format: DatasetFormat,
}

impl DatasetBundle {
    pub fn new(
        mut conversations: Vec<Conversation>,
        gold: BTreeMap<String, Gold>,
        format: DatasetFormat,
    ) -> Result<Self> {
        conversations.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = conversations.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateId(w[0].id.clone()));
        }
        let bundle = DatasetBundle {
            conversations,
            gold,
            format,
        };
        bundle.check()?;
        Ok(bundle)
    }

    fn check(&self) -> Result<()> {
        for (id, gold) in &self.gold {
            let conv = self.get(id).ok_or_else(|| Error::BadDialogue {
                path: PathBuf::new(),
                id: id.clone(),
                message: "gold entry without a conversation".into(),
            })?;
            if let Some(message) = gold.mismatch(conv.len()) {
                return Err(Error::BadDialogue {
                    path: PathBuf::new(),
                    id: id.clone(),
                    message,
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Conversation> {
        self.conversations
            .binary_search_by(|c| c.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.conversations[i])
    }

    pub fn turn_count(&self) -> usize {
        self.conversations.iter().map(Conversation::len).sum()
    }

    pub fn boundary_count(&self) -> usize {
        self.gold
            .values()
            .filter_map(Gold::boundaries)
            .map(|b| b.indices().len())
            .sum()
    }

    fn subset(&self, ids: &BTreeSet<&str>) -> DatasetBundle {
        DatasetBundle {
            conversations: self
                .conversations
                .iter()
                .filter(|c| ids.contains(c.id.as_str()))
                .cloned()
                .collect(),
            gold: self
                .gold
                .iter()
                .filter(|(id, _)| ids.contains(id.as_str()))
                .map(|(id, g)| (id.clone(), g.clone()))
                .collect(),
            format: self.format,
        }
    }
}

/// Loads `path` in the given format, using the bundled MultiWOZ schema for
/// slot normalization.
pub fn load(path: impl AsRef<Path>, format: DatasetFormat) -> Result<DatasetBundle> {
    let path = path.as_ref();
    match format {
        DatasetFormat::Jsonl => load_jsonl(path),
        DatasetFormat::Dialseg711 => load_dialseg711(path, &DialSegOptions::default()),
        DatasetFormat::Mwoz21 => load_mwoz(path, MwozVersion::V21, &LabelSchema::mwoz()),
        DatasetFormat::Mwoz24 => load_mwoz(path, MwozVersion::V24, &LabelSchema::mwoz()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct JsonlTurn {
    user: String,
    agent: Option<String>,
}

/// One line of the canonical JSONL format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct JsonlRecord {
    id: String,
    turns: Vec<JsonlTurn>,
    #[serde(default)]
    gold: Option<Gold>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    source: BTreeMap<String, String>,
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut conversations = Vec::new();
    let mut gold = BTreeMap::new();
    let mut ids = BTreeSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        let mut conv = Conversation::from_pairs(
            rec.id.clone(),
            rec.turns.into_iter().map(|t| (t.user, t.agent)),
        )
        .map_err(|e| malformed(e.to_string()))?;
        conv.source = rec.source;
        if let Some(g) = rec.gold {
            if let Some(message) = g.mismatch(conv.len()) {
                return Err(malformed(message));
            }
            gold.insert(rec.id, g);
        }
        conversations.push(conv);
    }
    DatasetBundle::new(conversations, gold, DatasetFormat::Jsonl)
}

/// Writes the bundle as canonical JSONL, one conversation per line.
pub fn write_jsonl(bundle: &DatasetBundle, out: &mut impl Write) -> std::io::Result<()> {
    for conv in &bundle.conversations {
        let rec = JsonlRecord {
            id: conv.id.clone(),
            turns: conv
                .turns
                .iter()
                .map(|t| JsonlTurn {
                    user: t.user.clone(),
                    agent: t.agent.clone(),
                })
                .collect(),
            gold: bundle.gold.get(&conv.id).cloned(),
            source: conv.source.clone(),
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MwozVersion {
    V21,
    V24,
}

impl MwozVersion {
    fn format(self) -> DatasetFormat {
        match self {
            MwozVersion::V21 => DatasetFormat::Mwoz21,
            MwozVersion::V24 => DatasetFormat::Mwoz24,
        }
    }
}

/// Maps a raw MultiWOZ metadata key to a schema slot name.
fn mwoz_slot_name(domain: &str, key: &str, booking: bool) -> String {
    let slot = if booking {
        match key {
            "people" => "book number_of_people".to_string(),
            "stay" => "book number_of_days".to_string(),
            other => format!("book {}", other.to_lowercase()),
        }
    } else {
        match (domain, key) {
            ("train", "leaveAt") => "leave_at_time".to_string(),
            ("train", "arriveBy") => "arrive_by_time".to_string(),
            (_, "leaveAt") => "leave at".to_string(),
            (_, "arriveBy") => "arrive by".to_string(),
            (_, other) => other.to_lowercase(),
        }
    };
    format!("{domain}-{slot}")
}

fn is_absent(value: &str) -> bool {
    let v = value.trim();
    v.is_empty() || v.eq_ignore_ascii_case("not mentioned") || v.eq_ignore_ascii_case("none")
}

fn mwoz_state(metadata: &Value, schema: &LabelSchema) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut state = BTreeMap::new();
    let Some(domains) = metadata.as_object() else {
        return Ok(state);
    };
    for (domain, sections) in domains {
        let sections = sections
            .as_object()
            .ok_or_else(|| format!("metadata for {domain} is not an object"))?;
        if !sections.contains_key("semi") && !sections.contains_key("book") {
            return Err(format!(
                "metadata for {domain} has neither `semi` nor `book`; not a 2.1/2.4 layout"
            ));
        }
        for (section, booking) in [("semi", false), ("book", true)] {
            let Some(fields) = sections.get(section).and_then(Value::as_object) else {
                continue;
            };
            for (key, value) in fields {
                let Some(value) = value.as_str() else {
                    // `booked` lists and similar
                    continue;
                };
                if is_absent(value) {
                    continue;
                }
                let name = mwoz_slot_name(domain, key, booking);
                if let Some(spec) = schema.slot(&name) {
                    state.insert(name, normalize_value(spec, value).value);
                }
            }
        }
    }
    Ok(state)
}

/// Loads a MultiWOZ 2.1/2.4 `data.json`-style file: an object from
/// dialogue id to `{"log": [...]}`, where even log entries are user turns
/// and odd entries are system turns carrying the belief state in
/// `metadata`.
pub fn load_mwoz(path: impl AsRef<Path>, version: MwozVersion, schema: &LabelSchema) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root: Value = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let dialogues = root.as_object().ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        message: "expected an object keyed by dialogue id (MultiWOZ 2.1/2.4 layout)".into(),
    })?;

    let mut conversations = Vec::with_capacity(dialogues.len());
    let mut gold = BTreeMap::new();
    for (id, dialogue) in dialogues {
        let bad = |message: String| Error::BadDialogue {
            path: path.to_path_buf(),
            id: id.clone(),
            message,
        };
        let log = dialogue
            .get("log")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `log` array; unknown MultiWOZ version layout".into()))?;
        if log.len() % 2 != 0 {
            return Err(bad(format!(
                "{} log entries: last user turn has no belief state, so gold does not match the turn count",
                log.len()
            )));
        }
        let mut turns = Vec::with_capacity(log.len() / 2);
        let mut states = Vec::with_capacity(log.len() / 2);
        for (k, pair) in log.chunks(2).enumerate() {
            let text_of = |v: &Value| v.get("text").and_then(Value::as_str).map(str::to_string);
            let user = text_of(&pair[0]).ok_or_else(|| bad(format!("turn {} has no user text", k + 1)))?;
            let agent = text_of(&pair[1]).ok_or_else(|| bad(format!("turn {} has no system text", k + 1)))?;
            let state = match pair[1].get("metadata") {
                Some(m) => mwoz_state(m, schema).map_err(bad)?,
                None => BTreeMap::new(),
            };
            turns.push(Turn {
                index: k + 1,
                user,
                agent: Some(agent),
            });
            states.push(TurnSlotState {
                turn_index: k + 1,
                state,
            });
        }
        let conv = Conversation::new(id.clone(), turns)
            .map_err(|e| bad(e.to_string()))?
            .with_source("dataset", version.format().name());
        conversations.push(conv);
        gold.insert(id.clone(), Gold::SlotStates { states });
    }
    DatasetBundle::new(conversations, gold, version.format())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialSegOptions {
    /// A line made only of this character (at least `min_run` times)
    /// separates topic segments.
    pub separator_char: char,
    pub min_run: usize,
}

impl Default for DialSegOptions {
    fn default() -> Self {
        DialSegOptions {
            separator_char: '=',
            min_run: 3,
        }
    }
}

impl DialSegOptions {
    fn is_separator(&self, line: &str) -> bool {
        line.chars().count() >= self.min_run && line.chars().all(|c| c == self.separator_char)
    }
}

/// Parses one DialSeg711-style file: one utterance per line, alternating
/// user/agent, with separator lines between topic segments.
pub fn parse_dialseg_text(
    id: &str,
    text: &str,
    options: &DialSegOptions,
) -> std::result::Result<(Conversation, BoundarySet), String> {
    let mut utterances: Vec<&str> = Vec::new();
    let mut cuts = BTreeSet::new();
    // a separator after an odd count is only fatal if more text follows
    let mut odd_separator = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if options.is_separator(line) {
            if utterances.len() % 2 != 0 {
                odd_separator = Some(utterances.len());
            } else {
                cuts.insert(utterances.len() / 2);
            }
        } else {
            if let Some(n) = odd_separator {
                return Err(format!("separator after {n} utterances falls inside a user/agent pair"));
            }
            utterances.push(line);
        }
    }
    let pairs = utterances
        .chunks(2)
        .map(|p| (p[0].to_string(), p.get(1).map(|a| a.to_string())));
    let conv = Conversation::from_pairs(id, pairs).map_err(|e| e.to_string())?;
    let t = conv.len();
    // leading/trailing/repeated separators carry no boundary
    let boundaries = BoundarySet::new(t, cuts.into_iter().filter(|&c| c >= 1 && c < t))
        .map_err(|e| e.to_string())?;
    Ok((conv, boundaries))
}

/// Loads every regular, non-hidden file in `dir`; the id is the file stem.
pub fn load_dialseg711(dir: impl AsRef<Path>, options: &DialSegOptions) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if path.is_file() && !hidden {
            files.push(path);
        }
    }
    files.sort();

    let mut conversations = Vec::with_capacity(files.len());
    let mut gold = BTreeMap::new();
    for path in files {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (conv, boundaries) = parse_dialseg_text(&id, &text, options).map_err(|message| Error::BadDialogue {
            path: path.clone(),
            id: id.clone(),
            message,
        })?;
        if gold.insert(id.clone(), Gold::Boundaries(boundaries)).is_some() {
            return Err(Error::DuplicateId(id));
        }
        conversations.push(conv.with_source("dataset", "dialseg711"));
    }
    DatasetBundle::new(conversations, gold, DatasetFormat::Dialseg711)
}

/// Unbiased draw from `0..bound` by rejection sampling.
fn below(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}

/// Deterministic permutation of `0..n`: Fisher–Yates driven by ChaCha8
/// seeded with `seed_from_u64(seed)`, swapping position `i` (from `n-1`
/// down to 1) with a uniform draw from `0..=i`.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = below(&mut rng, i as u64 + 1) as usize;
        order.swap(i, j);
    }
    order
}

/// Splits the bundle into `n_dev` development conversations and the rest
/// for testing. Both halves stay sorted by id.
pub fn split_dev_test(bundle: &DatasetBundle, n_dev: usize, seed: u64) -> Result<(DatasetBundle, DatasetBundle)> {
    let total = bundle.conversations.len();
    if n_dev >= total {
        return Err(Error::SplitRange { n_dev, total });
    }
    let order = seeded_permutation(total, seed);
    let ids = |range: &[usize]| -> BTreeSet<&str> {
        range.iter().map(|&i| bundle.conversations[i].id.as_str()).collect()
    };
    let (dev, test) = order.split_at(n_dev);
    Ok((bundle.subset(&ids(dev)), bundle.subset(&ids(test))))
}
