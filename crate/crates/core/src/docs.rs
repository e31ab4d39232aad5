//! Documentary retrieval over entity-annotated paragraphs: tf-idf cosine on
//! question terms plus a weighted entity-overlap bonus.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{EntityId, KnowledgeBase};
use crate::nlu::{tokenize, Lexicon};

pub const DEFAULT_ENTITY_WEIGHT: f64 = 10.0;

#[derive(Debug, Error)]
pub enum DocsError {
    #[error("{source_name}:{line}: {message}")]
    Malformed { source_name: String, line: usize, message: String },
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub doc_id: String,
    pub source_title: String,
    pub entities: BTreeSet<EntityId>,
    pub text: String,
}

#[derive(Deserialize)]
struct ParagraphRecord {
    doc_id: String,
    source_title: String,
    #[serde(default)]
    entities: String,
    text: String,
}

#[derive(Clone, Debug, Default)]
pub struct DocIndex {
    paragraphs: Vec<Paragraph>,
    /// term -> (paragraph index, raw count)
    postings: BTreeMap<String, Vec<(usize, usize)>>,
    entity_postings: BTreeMap<EntityId, BTreeSet<usize>>,
    /// Euclidean norm of each paragraph's tf-idf vector.
    norms: Vec<f64>,
    pub entity_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Excerpt {
    pub paragraph: Paragraph,
    pub score: f64,
}

/// Index terms of a text: normalized tokens with letters or digits, minus
/// stopwords.
pub fn terms(text: &str, lexicon: &Lexicon) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .map(|t| t.norm)
        .filter(|n| n.chars().any(char::is_alphanumeric) && !lexicon.is_stopword(n))
        .collect()
}

fn counts(terms: &[String]) -> BTreeMap<&str, usize> {
    let mut c = BTreeMap::new();
    for t in terms {
        *c.entry(t.as_str()).or_insert(0) += 1;
    }
    c
}

fn tf(count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        1.0 + (count as f64).ln()
    }
}

/// Parse paragraph records, dropping annotations unknown to the KB.
pub fn parse_paragraphs(reader: impl BufRead, source_name: &str, kb: &KnowledgeBase) -> Result<Vec<Paragraph>, DocsError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DocsError::Malformed { source_name: source_name.to_owned(), line: i + 1, message };
        let rec: ParagraphRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if rec.text.trim().is_empty() {
            return Err(err("paragraph text is empty".into()));
        }
        let mut entities = BTreeSet::new();
        for raw in rec.entities.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match EntityId::new(raw) {
                Ok(id) if kb.contains(&id) => {
                    entities.insert(id);
                }
                _ => warn!("{source_name}:{}: dropping unknown entity annotation {raw:?} on {}", i + 1, rec.doc_id),
            }
        }
        out.push(Paragraph { doc_id: rec.doc_id, source_title: rec.source_title, entities, text: rec.text });
    }
    Ok(out)
}

impl DocIndex {
    pub fn load(path: &Path, kb: &KnowledgeBase, lexicon: &Lexicon) -> Result<DocIndex, DocsError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(DocIndex::build(parse_paragraphs(file, &path.display().to_string(), kb)?, lexicon))
    }

    pub fn build(paragraphs: Vec<Paragraph>, lexicon: &Lexicon) -> DocIndex {
        let mut index = DocIndex { entity_weight: DEFAULT_ENTITY_WEIGHT, ..Default::default() };
        for (di, p) in paragraphs.iter().enumerate() {
            let ts = terms(&p.text, lexicon);
            for (term, c) in counts(&ts) {
                index.postings.entry(term.to_owned()).or_default().push((di, c));
            }
            for e in &p.entities {
                index.entity_postings.entry(e.clone()).or_default().insert(di);
            }
        }
        index.paragraphs = paragraphs;
        let mut sq = vec![0.0; index.paragraphs.len()];
        for (term, posting) in &index.postings {
            let idf = index.idf(term);
            for &(di, c) in posting {
                sq[di] += (tf(c) * idf).powi(2);
            }
        }
        index.norms = sq.into_iter().map(f64::sqrt).collect();
        index
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn postings(&self, term: &str) -> &[(usize, usize)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    /// Smoothed inverse document frequency `ln((N+1)/(df+1)) + 1`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.paragraphs.len() as f64;
        let df = self.postings(term).len() as f64;
        ((n + 1.0) / (df + 1.0)).ln() + 1.0
    }

    /// Ranked paragraphs sharing at least one entity or term with the query.
    pub fn retrieve(
        &self,
        question_entities: &BTreeSet<EntityId>,
        answer_entities: &BTreeSet<EntityId>,
        question_terms: &[String],
        k: usize,
    ) -> Result<Vec<Excerpt>, DocsError> {
        if k == 0 {
            return Err(DocsError::ZeroK);
        }
        let wanted: BTreeSet<&EntityId> = question_entities.iter().chain(answer_entities).collect();
        let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &wanted {
            for &di in self.entity_postings.get(*e).into_iter().flatten() {
                *overlap.entry(di).or_insert(0) += 1;
            }
        }
        let q = counts(question_terms);
        let q_weights: Vec<(&str, f64)> = q.iter().map(|(t, &c)| (*t, tf(c) * self.idf(t))).collect();
        let q_norm = q_weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        let mut dot: BTreeMap<usize, f64> = BTreeMap::new();
        for (term, qw) in &q_weights {
            let idf = self.idf(term);
            for &(di, c) in self.postings(term) {
                *dot.entry(di).or_insert(0.0) += qw * tf(c) * idf;
            }
        }
        let docs: BTreeSet<usize> = overlap.keys().chain(dot.keys()).copied().collect();
        let mut scored: Vec<(usize, f64)> = docs
            .into_iter()
            .map(|di| {
                let denom = q_norm * self.norms[di];
                let cosine = if denom > 0.0 { dot.get(&di).copied().unwrap_or(0.0) / denom } else { 0.0 };
                (di, self.entity_weight * overlap.get(&di).copied().unwrap_or(0) as f64 + cosine)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1).then_with(|| self.paragraphs[a.0].doc_id.cmp(&self.paragraphs[b.0].doc_id))
        });
        scored.truncate(k);
        Ok(scored.into_iter().map(|(di, score)| Excerpt { paragraph: self.paragraphs[di].clone(), score }).collect())
    }
}
