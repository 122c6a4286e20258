//! Moderation corpora: comment records, ingestion, balanced dataset
//! construction, and synthetic planted-keyword fixtures.

mod balance;
mod ingest;
mod synth;

pub use balance::{build_balanced, merge_datasets};
pub use ingest::{ingest, ingest_all, IngestFormat, IngestStats, IngestStream};
pub use synth::{contains_any_term, synth_corpus, FILLER_WORDS};

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Binary moderation outcome for a comment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// The comment stayed up.
    Kept,
    /// The comment was removed by a moderator.
    Moderated,
}

impl Label {
    pub fn from_u8(v: u8) -> Result<Self, CorpusError> {
        match v {
            0 => Ok(Label::Kept),
            1 => Ok(Label::Moderated),
            other => Err(CorpusError::InvalidLabel(other as i64)),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Kept => 0,
            Label::Moderated => 1,
        }
    }

    pub fn is_moderated(self) -> bool {
        matches!(self, Label::Moderated)
    }

    /// Class index used by the classifiers (kept = 0, moderated = 1).
    pub fn class_index(self) -> usize {
        self.as_u8() as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).map_err(|_| D::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// One community comment with its moderation outcome. The atomic unit of
/// training and evaluation.
///
/// Text is whitespace-normalized on construction: runs of whitespace
/// collapse to single spaces and the ends are trimmed, which keeps window
/// tokenization stable downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub id: String,
    pub community: String,
    pub text: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

impl CommentRecord {
    /// Build a validated record. Fails on empty community or on text that
    /// is empty after whitespace normalization.
    pub fn new(
        id: impl Into<String>,
        community: impl Into<String>,
        text: &str,
        label: Label,
        timestamp: Option<i64>,
    ) -> Result<Self, CorpusError> {
        let community = community.into();
        if community.is_empty() {
            return Err(CorpusError::EmptyCommunity);
        }
        let text = normalize_whitespace(text);
        if text.is_empty() {
            return Err(CorpusError::EmptyText);
        }
        Ok(CommentRecord { id: id.into(), community, text, label, timestamp })
    }

    /// Re-validate a deserialized record, normalizing its text in place.
    pub fn validate(mut self) -> Result<Self, CorpusError> {
        self.text = normalize_whitespace(&self.text);
        if self.text.is_empty() {
            return Err(CorpusError::EmptyText);
        }
        if self.community.is_empty() {
            return Err(CorpusError::EmptyCommunity);
        }
        Ok(self)
    }
}

/// Collapse whitespace runs to single spaces and trim the ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A balanced per-community dataset with disjoint train/test splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommunityDataset {
    pub community: String,
    pub train: Vec<CommentRecord>,
    pub test: Vec<CommentRecord>,
}

impl CommunityDataset {
    /// Check the dataset invariants: ids disjoint across splits and the
    /// train labels balanced to within one record.
    pub fn check_invariants(&self) -> Result<(), CorpusError> {
        let train_ids: HashSet<&str> = self.train.iter().map(|r| r.id.as_str()).collect();
        if self.test.iter().any(|r| train_ids.contains(r.id.as_str())) {
            return Err(CorpusError::SplitOverlap);
        }
        let pos = self.train.iter().filter(|r| r.label.is_moderated()).count() as i64;
        let neg = self.train.len() as i64 - pos;
        if (pos - neg).abs() > 1 {
            return Err(CorpusError::Unbalanced { moderated: pos as usize, kept: neg as usize });
        }
        Ok(())
    }

    /// Write `train.jsonl` and `test.jsonl` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir).map_err(|e| CorpusError::Io(dir.display().to_string(), e))?;
        for (name, records) in [("train.jsonl", &self.train), ("test.jsonl", &self.test)] {
            let path = dir.join(name);
            let mut out = String::new();
            for r in records {
                out.push_str(&serde_json::to_string(r).expect("record serializes"));
                out.push('\n');
            }
            std::fs::write(&path, out).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        }
        Ok(())
    }

    /// Load a dataset previously written by [`CommunityDataset::save`].
    pub fn load(community: &str, dir: &Path) -> Result<Self, CorpusError> {
        let read = |name: &str| -> Result<Vec<CommentRecord>, CorpusError> {
            let (records, _) = ingest_all(&dir.join(name), IngestFormat::Jsonl)?;
            Ok(records)
        };
        Ok(CommunityDataset {
            community: community.to_string(),
            train: read("train.jsonl")?,
            test: read("test.jsonl")?,
        })
    }
}

/// Errors from corpus construction and ingestion.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("comment text is empty after whitespace normalization")]
    EmptyText,
    #[error("community name is empty")]
    EmptyCommunity,
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(i64),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("more than half of the input lines were malformed ({malformed} of {total})")]
    MostlyMalformed { malformed: usize, total: usize },
    #[error("missing TSV header `id\\tcommunity\\ttext\\tlabel`, got {0:?}")]
    BadTsvHeader(String),
    #[error(
        "not enough usable records for community {community}: \
         {moderated} moderated + {kept} kept, need at least {needed} with both labels present"
    )]
    InsufficientData { community: String, moderated: usize, kept: usize, needed: usize },
    #[error("community {community} has only one label class present")]
    SingleClass { community: String },
    #[error("train/test splits share a record id")]
    SplitOverlap,
    #[error("train split is unbalanced: {moderated} moderated vs {kept} kept")]
    Unbalanced { moderated: usize, kept: usize },
    #[error("planted term list is empty")]
    NoPlantedTerms,
    #[error("n_per_class must be at least 1")]
    EmptySynthClass,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_runs_and_trims() {
        assert_eq!(normalize_whitespace("  a \t b\n\nc  "), "a b c");
        assert_eq!(normalize_whitespace("\t\n "), "");
        assert_eq!(normalize_whitespace("plain"), "plain");
    }

    #[test]
    fn record_rejects_empty_text_and_community() {
        assert!(matches!(
            CommentRecord::new("1", "games", "   ", Label::Kept, None),
            Err(CorpusError::EmptyText)
        ));
        assert!(matches!(
            CommentRecord::new("1", "", "hi", Label::Kept, None),
            Err(CorpusError::EmptyCommunity)
        ));
    }

    #[test]
    fn label_round_trips_through_json_as_integer() {
        let r = CommentRecord::new("a", "games", "some text", Label::Moderated, Some(5)).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"label\":1"), "{json}");
        let back: CommentRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn label_rejects_out_of_range() {
        let err = serde_json::from_str::<CommentRecord>(
            r#"{"id":"a","community":"c","text":"t","label":2}"#,
        );
        assert!(err.is_err());
    }
}
