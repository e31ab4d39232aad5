//! Search backend: candidate subjects, predicates and types from the
//! question, a subjects × predicates correlation matrix of KB triples, and
//! selection by question coverage and entity relevance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::arbiter::FeatureVector;
use crate::kb::{Datatype, EntityId, KnowledgeBase, Triple, Value};
use crate::nlu::{Lexicon, QuestionFrame, WhType};
use crate::qa::{question_lemmas, AnswerKind, Evidence, QAResult, Source};
use crate::text::words;

/// Candidates per name mention considered as matrix rows.
const MAX_CANDIDATES_PER_MENTION: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub expand: usize,
    pub type_bonus: f64,
    /// Relative tolerance under which two cell totals tie.
    pub tie_epsilon: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { expand: 1, type_bonus: 1.5, tie_epsilon: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub entity: EntityId,
    /// Words of the question mention that produced this candidate.
    pub surface_words: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CandidateSet {
    pub subjects: Vec<Subject>,
    pub predicates: BTreeSet<EntityId>,
    pub types: BTreeSet<EntityId>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty() && self.predicates.is_empty()
    }
}

/// How a row entered the matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RowOrigin {
    /// Index into `CandidateSet::subjects`.
    pub subject: usize,
    /// Predicate linking the row to that subject, for expanded rows.
    pub via: Option<EntityId>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrelationMatrix {
    pub rows: BTreeMap<EntityId, RowOrigin>,
    pub cols: BTreeSet<EntityId>,
    pub cells: BTreeMap<(EntityId, EntityId), BTreeSet<Triple>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellScore {
    pub coverage: f64,
    pub relevance: f64,
    pub type_match: bool,
    pub total: f64,
}

pub fn collect_candidates(frame: &QuestionFrame, lexicon: &Lexicon) -> CandidateSet {
    let mut cands = CandidateSet::default();
    for m in frame.name_mentions() {
        let surface_words = frame.raw_tokens[m.start..m.end].iter().map(|t| t.lemma.clone()).collect::<Vec<_>>();
        for (id, _) in m.candidates.iter().take(MAX_CANDIDATES_PER_MENTION) {
            if !cands.subjects.iter().any(|s| s.entity == *id) {
                cands.subjects.push(Subject { entity: id.clone(), surface_words: surface_words.clone() });
            }
        }
    }
    for (_, t) in frame.content_lemmas(lexicon) {
        if let Some(ps) = lexicon.synonyms(&t.lemma) {
            cands.predicates.extend(ps.iter().cloned());
        }
    }
    cands.types = frame.mentions.iter().filter_map(|m| m.type_id.clone()).collect();
    cands
}

/// Direct cells for every subject, plus rows reached in `expand` hops
/// through any candidate predicate (in either direction). An expanded row
/// only fills cells for predicates other than the one it was reached by.
pub fn build_matrix(cands: &CandidateSet, kb: &KnowledgeBase, expand: usize) -> CorrelationMatrix {
    let mut m = CorrelationMatrix { cols: cands.predicates.clone(), ..Default::default() };
    for (si, s) in cands.subjects.iter().enumerate() {
        m.rows.entry(s.entity.clone()).or_insert(RowOrigin { subject: si, via: None });
    }
    let mut frontier: Vec<EntityId> = m.rows.keys().cloned().collect();
    for _ in 0..expand {
        let mut next = Vec::new();
        for row in &frontier {
            let subject = m.rows[row].subject;
            for p in &cands.predicates {
                let neighbours = kb
                    .match_pattern(Some(row), Some(p), None)
                    .into_iter()
                    .filter_map(|t| t.object.as_entity().cloned())
                    .chain(kb.match_pattern(None, Some(p), Some(&Value::Entity(row.clone()))).into_iter().map(|t| t.subject));
                for n in neighbours {
                    if !m.rows.contains_key(&n) {
                        m.rows.insert(n.clone(), RowOrigin { subject, via: Some(p.clone()) });
                        next.push(n);
                    }
                }
            }
        }
        frontier = next;
    }
    for (row, origin) in &m.rows {
        for p in &cands.predicates {
            if origin.via.as_ref() == Some(p) {
                continue;
            }
            let triples: BTreeSet<Triple> = kb.match_pattern(Some(row), Some(p), None).into_iter().collect();
            if !triples.is_empty() {
                m.cells.insert((row.clone(), p.clone()), triples);
            }
        }
    }
    m
}

fn label_words(kb: &KnowledgeBase, id: &EntityId, lang: &str) -> BTreeSet<String> {
    words(&kb.label(id, lang)).into_iter().collect()
}

fn normalized(x: f64, max: f64) -> f64 {
    if max > 0.0 {
        x / max
    } else {
        0.0
    }
}

/// Score one cell against the question lemmas.
pub fn score_cell(
    matrix: &CorrelationMatrix,
    cell: &(EntityId, EntityId),
    cands: &CandidateSet,
    question: &BTreeSet<String>,
    kb: &KnowledgeBase,
    lexicon: &Lexicon,
    config: &SearchConfig,
) -> CellScore {
    let (row, col) = cell;
    let origin = &matrix.rows[row];
    let lang = lexicon.language.as_str();
    let mut explained = label_words(kb, row, lang);
    explained.extend(cands.subjects[origin.subject].surface_words.iter().cloned());
    explained.extend(lexicon.words_for_predicate(col).map(str::to_owned));
    if let Some(via) = &origin.via {
        explained.extend(lexicon.words_for_predicate(via).map(str::to_owned));
    }
    if let Some(e) = kb.entity(row) {
        for t in &e.types {
            explained.extend(lexicon.words_for_type(t).map(str::to_owned));
        }
    }
    let coverage = if question.is_empty() {
        1.0
    } else {
        question.iter().filter(|l| explained.contains(*l)).count() as f64 / question.len() as f64
    };
    let max_row = matrix.rows.keys().map(|r| kb.pagerank(r)).fold(0.0, f64::max);
    let relevance = normalized(kb.pagerank(row), max_row);
    let type_match = !cands.types.is_empty()
        && matrix.cells[cell].iter().any(|t| {
            t.object.as_entity().and_then(|o| kb.entity(o)).is_some_and(|e| !e.types.is_disjoint(&cands.types))
        });
    let total = coverage * relevance * if type_match { config.type_bonus } else { 1.0 };
    CellScore { coverage, relevance, type_match, total }
}

fn definition_result(frame: &QuestionFrame, cands: &CandidateSet, kb: &KnowledgeBase) -> Option<QAResult> {
    let best = cands.subjects.iter().map(|s| &s.entity).max_by(|a, b| {
        kb.pagerank(a).total_cmp(&kb.pagerank(b)).then_with(|| b.cmp(a))
    })?;
    let entity = kb.entity(best)?;
    let p31 = EntityId::new("P31").ok()?;
    let provenance: BTreeSet<Triple> = kb.match_pattern(Some(best), Some(&p31), None).into_iter().collect();
    let mut r = QAResult {
        source: Source::Search,
        kind: AnswerKind::Definition,
        values: BTreeSet::from([Value::Entity(best.clone())]),
        provenance,
        query_debug: format!("DEFINITION {}", entity.id),
        features: FeatureVector::default(),
        failed: false,
        subject: Some(best.clone()),
        predicate_phrase: None,
        error: None,
    };
    let evidence = Evidence { coverage: 1.0, relevance: normalized(kb.pagerank(best), kb.max_pagerank()), rule_priority: None };
    r.features = FeatureVector::extract(&r, frame, kb, evidence);
    Some(r)
}

/// Run the whole search pipeline for one resolved frame.
pub fn answer_search(frame: &QuestionFrame, kb: &KnowledgeBase, lexicon: &Lexicon, config: &SearchConfig) -> QAResult {
    let cands = collect_candidates(frame, lexicon);
    if cands.is_empty() {
        return QAResult::failed(Source::Search, frame, kb, "no candidate entities or predicates");
    }
    if cands.predicates.is_empty() {
        return definition_result(frame, &cands, kb)
            .unwrap_or_else(|| QAResult::failed(Source::Search, frame, kb, "no candidate predicates"));
    }
    let matrix = build_matrix(&cands, kb, config.expand);
    score_and_select(&matrix, &cands, frame, kb, lexicon, config)
}

pub fn score_and_select(
    matrix: &CorrelationMatrix,
    cands: &CandidateSet,
    frame: &QuestionFrame,
    kb: &KnowledgeBase,
    lexicon: &Lexicon,
    config: &SearchConfig,
) -> QAResult {
    if matrix.cells.is_empty() {
        return QAResult::failed(Source::Search, frame, kb, "correlation matrix is empty");
    }
    let question = question_lemmas(frame, lexicon);
    let scored: Vec<(&(EntityId, EntityId), CellScore)> = matrix
        .cells
        .keys()
        .map(|cell| (cell, score_cell(matrix, cell, cands, &question, kb, lexicon, config)))
        .collect();
    let best = scored.iter().map(|(_, s)| s.total).fold(f64::NEG_INFINITY, f64::max);
    let floor = best - config.tie_epsilon * best.abs().max(f64::MIN_POSITIVE);
    let winners: Vec<&(&(EntityId, EntityId), CellScore)> = scored.iter().filter(|(_, s)| s.total >= floor).collect();

    let provenance: BTreeSet<Triple> = winners.iter().flat_map(|(cell, _)| matrix.cells[*cell].iter().cloned()).collect();
    let mut values: BTreeSet<Value> = provenance.iter().map(|t| t.object.clone()).collect();
    let mut kind = AnswerKind::EntitySet;
    if frame.wh_type == WhType::HowMany {
        values = BTreeSet::from([Value::literal(values.len().to_string(), Datatype::Number)]);
        kind = AnswerKind::Count;
    }
    let top = winners[0];
    let subject = cands.subjects[matrix.rows[&top.0 .0].subject].entity.clone();
    let predicate_phrase = lexicon.words_for_predicate(&top.0 .1).next().map(str::to_owned);
    let query_debug = winners
        .iter()
        .map(|((row, col), s)| format!("CELL {row} {col} coverage={:.4} relevance={:.4} total={:.4}", s.coverage, s.relevance, s.total))
        .collect::<Vec<_>>()
        .join("\n");
    let mut r = QAResult {
        source: Source::Search,
        kind,
        values,
        provenance,
        query_debug,
        features: FeatureVector::default(),
        failed: false,
        subject: Some(subject),
        predicate_phrase,
        error: None,
    };
    let evidence = Evidence { coverage: top.1.coverage, relevance: top.1.relevance, rule_priority: None };
    r.features = FeatureVector::extract(&r, frame, kb, evidence);
    r
}

impl CorrelationMatrix {
    /// Text table of rows × predicates with triple counts, for tracing.
    pub fn dump(&self, kb: &KnowledgeBase, lang: &str) -> String {
        let mut out = String::from("row");
        for c in &self.cols {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
        for row in self.rows.keys() {
            let _ = write!(out, "{} ({row})", kb.label(row, lang));
            for c in &self.cols {
                let n = self.cells.get(&(row.clone(), c.clone())).map_or(0, BTreeSet::len);
                let _ = write!(out, "\t{n}");
            }
            out.push('\n');
        }
        out
    }
}
