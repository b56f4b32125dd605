//! Boundaries, segment states and the joint prediction record.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a turn continues the preceding topic (`Yes`) or opens a new
/// segment (`No`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Relation {
    Yes,
    No,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Yes => "YES",
            Relation::No => "NO",
        }
    }

    pub fn parse(value: &str) -> Option<Self> {
        let v = value.trim();
        if v.eq_ignore_ascii_case("yes") {
            Some(Relation::Yes)
        } else if v.eq_ignore_ascii_case("no") {
            Some(Relation::No)
        } else {
            None
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Segment boundaries over `length` units. Index `i` marks a boundary
/// between unit `i` and unit `i + 1`, so valid indices are `1..length`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBoundarySet")]
pub struct BoundarySet {
    length: usize,
    indices: BTreeSet<usize>,
}

#[derive(Deserialize)]
struct RawBoundarySet {
    length: usize,
    indices: BTreeSet<usize>,
}

impl TryFrom<RawBoundarySet> for BoundarySet {
    type Error = Error;

    fn try_from(raw: RawBoundarySet) -> Result<Self> {
        BoundarySet::new(raw.length, raw.indices)
    }
}

impl BoundarySet {
    pub fn new(length: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let indices: BTreeSet<usize> = indices.into_iter().collect();
        if let Some(&index) = indices.iter().find(|&&i| i == 0 || i >= length) {
            return Err(Error::BoundaryOutOfRange { index, length });
        }
        Ok(BoundarySet { length, indices })
    }

    pub fn empty(length: usize) -> Self {
        BoundarySet {
            length,
            indices: BTreeSet::new(),
        }
    }

    /// Boundaries implied by consecutive segment lengths.
    pub fn from_segment_lengths(lengths: &[usize]) -> Result<Self> {
        let length = lengths.iter().sum();
        let mut cut = 0;
        let mut indices = Vec::new();
        for &len in lengths.iter().take(lengths.len().saturating_sub(1)) {
            cut += len;
            indices.push(cut);
        }
        BoundarySet::new(length, indices)
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn indices(&self) -> &BTreeSet<usize> {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.contains(&index)
    }

    /// Inclusive `(start, end)` spans of the segments, 1-based.
    pub fn spans(&self) -> Vec<(usize, usize)> {
        if self.length == 0 {
            return Vec::new();
        }
        let mut spans = Vec::with_capacity(self.indices.len() + 1);
        let mut start = 1;
        for &b in &self.indices {
            spans.push((start, b));
            start = b + 1;
        }
        spans.push((start, self.length));
        spans
    }

    pub fn segment_lengths(&self) -> Vec<usize> {
        self.spans().into_iter().map(|(s, e)| e - s + 1).collect()
    }

    /// Per-unit relation labels: unit 1 and every unit right after a
    /// boundary is `No`.
    pub fn relations(&self) -> Vec<Relation> {
        (1..=self.length)
            .map(|i| {
                if i == 1 || self.indices.contains(&(i - 1)) {
                    Relation::No
                } else {
                    Relation::Yes
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentState {
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub slot_values: BTreeMap<String, String>,
}

impl SegmentState {
    pub fn new(start: usize, end: usize) -> Self {
        SegmentState {
            start,
            end,
            slot_values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, slot: impl Into<String>, value: impl Into<String>) -> Self {
        self.slot_values.insert(slot.into(), value.into());
        self
    }

    pub fn contains(&self, turn: usize) -> bool {
        self.start <= turn && turn <= self.end
    }
}

/// Boundary set plus one state per segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueStateRecord {
    pub boundaries: BoundarySet,
    pub segments: Vec<SegmentState>,
}

impl DialogueStateRecord {
    pub fn turn_count(&self) -> usize {
        self.boundaries.len()
    }

    pub fn segment_at(&self, turn: usize) -> Option<&SegmentState> {
        self.segments.iter().find(|s| s.contains(turn))
    }

    /// Builds a record from segment states, deriving boundaries from the
    /// segment ends.
    pub fn from_segments(t: usize, segments: Vec<SegmentState>) -> Result<Self> {
        let cuts = segments
            .iter()
            .take(segments.len().saturating_sub(1))
            .map(|s| s.end);
        Ok(DialogueStateRecord {
            boundaries: BoundarySet::new(t, cuts)?,
            segments,
        })
    }
}

/// Cumulative belief state as of one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnSlotState {
    pub turn_index: usize,
    #[serde(default)]
    pub state: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LengthMismatch { record: usize, expected: usize },
    SegmentOutOfRange { start: usize, end: usize },
    Unsorted { position: usize },
    Gap { turn: usize },
    Overlap { turn: usize },
    BoundaryMismatch {
        boundaries: Vec<usize>,
        cuts: Vec<usize>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch { record, expected } => {
                write!(f, "record covers {record} turns, expected {expected}")
            }
            Violation::SegmentOutOfRange { start, end } => {
                write!(f, "segment [{start}..{end}] out of range")
            }
            Violation::Unsorted { position } => write!(f, "segment {position} out of order"),
            Violation::Gap { turn } => write!(f, "gap at turn {turn}"),
            Violation::Overlap { turn } => write!(f, "overlap at turn {turn}"),
            Violation::BoundaryMismatch { boundaries, cuts } => write!(
                f,
                "boundaries {boundaries:?} do not match segment cut points {cuts:?}"
            ),
        }
    }
}

/// Lists every way `record` fails to be a consistent partition of `1..=t`.
/// An empty list means the record is valid.
pub fn validate_record(record: &DialogueStateRecord, t: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.boundaries.len() != t {
        out.push(Violation::LengthMismatch {
            record: record.boundaries.len(),
            expected: t,
        });
    }

    let mut cover = vec![0usize; t + 1];
    for seg in &record.segments {
        if seg.start < 1 || seg.start > seg.end || seg.end > t {
            out.push(Violation::SegmentOutOfRange {
                start: seg.start,
                end: seg.end,
            });
            continue;
        }
        for c in &mut cover[seg.start..=seg.end] {
            *c += 1;
        }
    }
    for (position, pair) in record.segments.windows(2).enumerate() {
        if pair[1].start < pair[0].start {
            out.push(Violation::Unsorted {
                position: position + 2,
            });
        }
    }
    for (turn, &c) in cover.iter().enumerate().skip(1) {
        match c {
            0 => out.push(Violation::Gap { turn }),
            1 => {}
            _ => out.push(Violation::Overlap { turn }),
        }
    }

    let mut ends: Vec<usize> = record.segments.iter().map(|s| s.end).collect();
    ends.sort_unstable();
    ends.pop();
    let boundaries: Vec<usize> = record.boundaries.indices().iter().copied().collect();
    if ends != boundaries {
        out.push(Violation::BoundaryMismatch {
            boundaries,
            cuts: ends,
        });
    }
    out
}
