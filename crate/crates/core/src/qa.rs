//! Result types shared by the reasoning and search backends.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arbiter::FeatureVector;
use crate::kb::{EntityId, KnowledgeBase, Triple, Value};
use crate::nlu::{is_content, Lexicon, Pos, QuestionFrame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Reasoning,
    Search,
    None,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Reasoning => "REASONING",
            Source::Search => "SEARCH",
            Source::None => "NONE",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnswerKind {
    EntitySet,
    Count,
    Definition,
}

impl std::str::FromStr for AnswerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ENTITY_SET" => Ok(AnswerKind::EntitySet),
            "COUNT" => Ok(AnswerKind::Count),
            "DEFINITION" => Ok(AnswerKind::Definition),
            other => Err(format!("unknown answer kind {other:?}")),
        }
    }
}

/// Output of one backend for one resolved question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QAResult {
    pub source: Source,
    pub kind: AnswerKind,
    pub values: BTreeSet<Value>,
    pub provenance: BTreeSet<Triple>,
    pub query_debug: String,
    pub features: FeatureVector,
    pub failed: bool,
    /// Main question entity, used by generation.
    pub subject: Option<EntityId>,
    /// Predicate phrase (lemma) the answer was found through.
    pub predicate_phrase: Option<String>,
    pub error: Option<String>,
}

/// Inputs to feature extraction that only the backend knows.
#[derive(Clone, Copy, Debug, Default)]
pub struct Evidence {
    pub coverage: f64,
    pub relevance: f64,
    pub rule_priority: Option<i64>,
}

impl QAResult {
    pub fn failed(source: Source, frame: &QuestionFrame, kb: &KnowledgeBase, error: impl Into<String>) -> QAResult {
        let mut r = QAResult {
            source,
            kind: AnswerKind::EntitySet,
            values: BTreeSet::new(),
            provenance: BTreeSet::new(),
            query_debug: String::new(),
            features: FeatureVector::default(),
            failed: true,
            subject: None,
            predicate_phrase: None,
            error: Some(error.into()),
        };
        r.features = FeatureVector::extract(&r, frame, kb, Evidence::default());
        r
    }
}

/// Lemmas of all content tokens of the frame, including those inside name
/// mentions, minus tokens absorbed by resolution.
pub fn question_lemmas(frame: &QuestionFrame, lexicon: &Lexicon) -> BTreeSet<String> {
    frame
        .raw_tokens
        .iter()
        .enumerate()
        .filter(|(i, t)| !frame.absorbed.contains(i) && t.pos != Pos::Punct && is_content(t, lexicon))
        .map(|(_, t)| t.lemma.clone())
        .collect()
}
