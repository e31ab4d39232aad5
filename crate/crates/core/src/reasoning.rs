//! Grammar-driven backend: ordered rule patterns matched against the
//! resolved question, each tied to a graph-query template.
//!
//! Grammar file, one block per rule, blocks separated by blank lines:
//!
//! ```text
//! RULE father_of 20
//! PATTERN what be ENTITY PRED *
//! QUERY SELECT ?y
//! QUERY $e1 $p1 ?y
//! KIND ENTITY_SET
//! ```
//!
//! Pattern atoms: a lowercase lemma, `@POS`, `ENTITY`, `PRED`, `TYPE` (slots
//! numbered left to right as `$e1`, `$p1`, `$t1`, ...), or `*` (any run of
//! tokens). Punctuation is ignored on both sides.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::arbiter::FeatureVector;
use crate::kb::{Datatype, EntityId, KnowledgeBase, Value};
use crate::nlu::{is_content, Lexicon, MentionKind, Pos, QuestionFrame, WhType};
use crate::qa::{question_lemmas, AnswerKind, Evidence, QAResult, Source};
use crate::query::{self, split_terms, Aggregate, GraphQuery, Term, TriplePattern};
use crate::text::normalize;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("{source_name}: block {block}: {message}")]
    Block { source_name: String, block: usize, message: String },
    #[error("grammar has no rules")]
    Empty,
    #[error("rule {rule}: predicate {predicate} is not declared in the knowledge base")]
    UnknownPredicate { rule: String, predicate: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum InstantiateError {
    #[error("placeholder ${0} is not bound")]
    Unbound(String),
    #[error("slot ${0} has no candidates")]
    NoCandidate(String),
    #[error(transparent)]
    Invalid(#[from] query::QueryError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Atom {
    Lemma(String),
    PosClass(Pos),
    Entity(String),
    Pred(String),
    Type(String),
    Wildcard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RulePattern {
    pub name: String,
    pub atoms: Vec<Atom>,
    pub priority: i64,
}

impl RulePattern {
    pub fn wildcards(&self) -> usize {
        self.atoms.iter().filter(|a| **a == Atom::Wildcard).count()
    }

    fn slots(&self) -> BTreeSet<&str> {
        self.atoms
            .iter()
            .filter_map(|a| match a {
                Atom::Entity(s) | Atom::Pred(s) | Atom::Type(s) => Some(s.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TemplateTerm {
    Slot(String),
    Fixed(Term),
}

/// Graph-query template with `$slot` placeholders.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalPattern {
    pub rule: String,
    pub patterns: Vec<[TemplateTerm; 3]>,
    pub project: String,
    pub aggregate: Aggregate,
    pub answer_kind: AnswerKind,
}

impl LogicalPattern {
    fn placeholders(&self) -> BTreeSet<&str> {
        self.patterns
            .iter()
            .flatten()
            .filter_map(|t| match t {
                TemplateTerm::Slot(s) => Some(s.as_str()),
                TemplateTerm::Fixed(_) => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Grammar {
    pub rules: Vec<(RulePattern, LogicalPattern)>,
}

fn parse_atoms(text: &str) -> Result<Vec<Atom>, String> {
    let mut counters: BTreeMap<char, usize> = BTreeMap::new();
    let mut next = |c: char| {
        let n = counters.entry(c).or_insert(0);
        *n += 1;
        format!("{c}{n}")
    };
    let mut atoms = Vec::new();
    for raw in text.split_whitespace() {
        let atom = match raw {
            "*" => Atom::Wildcard,
            "ENTITY" => Atom::Entity(next('e')),
            "PRED" => Atom::Pred(next('p')),
            "TYPE" => Atom::Type(next('t')),
            _ if raw.starts_with('@') => Atom::PosClass(raw[1..].parse()?),
            _ if raw.chars().all(|c| !c.is_alphanumeric()) => continue,
            _ if raw.chars().any(|c| c.is_uppercase()) => return Err(format!("unknown atom {raw:?}")),
            _ => Atom::Lemma(normalize(raw)),
        };
        atoms.push(atom);
    }
    Ok(atoms)
}

fn parse_template_term(token: &str) -> Result<TemplateTerm, String> {
    match token.strip_prefix('$') {
        Some(slot) if !slot.is_empty() => Ok(TemplateTerm::Slot(slot.to_owned())),
        Some(_) => Err("empty placeholder".into()),
        None => Term::parse(token).map(TemplateTerm::Fixed),
    }
}

impl Grammar {
    pub fn load(path: &Path) -> Result<Grammar, GrammarError> {
        Grammar::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Grammar, GrammarError> {
        let mut blocks: Vec<Vec<&str>> = vec![Vec::new()];
        for line in text.lines() {
            let line = line.trim();
            if line.starts_with('#') {
                continue;
            }
            if line.is_empty() {
                if !blocks.last().unwrap().is_empty() {
                    blocks.push(Vec::new());
                }
            } else {
                blocks.last_mut().unwrap().push(line);
            }
        }
        blocks.retain(|b| !b.is_empty());

        let mut rules = Vec::new();
        let mut names = BTreeSet::new();
        for (bi, block) in blocks.iter().enumerate() {
            let err = |message: String| GrammarError::Block { source_name: source_name.to_owned(), block: bi + 1, message };
            let mut header = None;
            let mut atoms = None;
            let mut query_lines = Vec::new();
            let mut kind = None;
            for line in block {
                let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
                let rest = rest.trim();
                match keyword {
                    "RULE" => {
                        let mut parts = rest.split_whitespace();
                        let name = parts.next().ok_or_else(|| err("RULE needs a name".into()))?;
                        let priority: i64 = parts
                            .next()
                            .and_then(|p| p.parse().ok())
                            .ok_or_else(|| err("RULE needs an integer priority".into()))?;
                        header = Some((name.to_owned(), priority));
                    }
                    "PATTERN" => atoms = Some(parse_atoms(rest).map_err(&err)?),
                    "QUERY" => query_lines.push(rest),
                    "KIND" => kind = Some(rest.parse::<AnswerKind>().map_err(&err)?),
                    other => return Err(err(format!("unknown keyword {other:?}"))),
                }
            }
            let (name, priority) = header.ok_or_else(|| err("missing RULE line".into()))?;
            let atoms = atoms.ok_or_else(|| err("missing PATTERN line".into()))?;
            let answer_kind = kind.ok_or_else(|| err("missing KIND line".into()))?;
            if !names.insert(name.clone()) {
                return Err(err(format!("duplicate rule name {name:?}")));
            }
            let (head, body) = query_lines.split_first().ok_or_else(|| err("missing QUERY lines".into()))?;
            let mut head_parts = head.split_whitespace();
            let aggregate = match head_parts.next() {
                Some("SELECT") => Aggregate::List,
                Some("COUNT") => Aggregate::Count,
                _ => return Err(err("first QUERY line must be `SELECT ?v` or `COUNT ?v`".into())),
            };
            let project = head_parts
                .next()
                .filter(|v| v.starts_with('?'))
                .ok_or_else(|| err("missing projection variable".into()))?
                .to_owned();
            let mut patterns = Vec::new();
            for line in body {
                let tokens = split_terms(line).map_err(&err)?;
                if tokens.len() != 3 {
                    return Err(err(format!("query pattern needs 3 terms: {line:?}")));
                }
                let terms: Vec<TemplateTerm> =
                    tokens.iter().map(|t| parse_template_term(t)).collect::<Result<_, _>>().map_err(&err)?;
                patterns.push(<[TemplateTerm; 3]>::try_from(terms).expect("three terms"));
            }
            let rule = RulePattern { name: name.clone(), atoms, priority };
            let logical = LogicalPattern { rule: name, patterns, project, aggregate, answer_kind };
            if rule.slots().is_empty() {
                return Err(err("pattern has no slot".into()));
            }
            if let Some(missing) = logical.placeholders().difference(&rule.slots()).next() {
                return Err(err(format!("placeholder ${missing} has no matching slot")));
            }
            rules.push((rule, logical));
        }
        if rules.is_empty() {
            return Err(GrammarError::Empty);
        }
        rules.sort_by_key(|(r, _)| r.priority);
        Ok(Grammar { rules })
    }

    /// Every fixed predicate in a template must be a KB entity.
    pub fn validate(&self, kb: &KnowledgeBase) -> Result<(), GrammarError> {
        for (_, logical) in &self.rules {
            for [_, p, _] in &logical.patterns {
                if let TemplateTerm::Fixed(Term::Const(Value::Entity(id))) = p {
                    if !kb.contains(id) {
                        return Err(GrammarError::UnknownPredicate { rule: logical.rule.clone(), predicate: id.to_string() });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlotBinding {
    /// Index into the frame's mentions.
    Entity(usize),
    Pred { lemma: String, predicates: BTreeSet<EntityId> },
    Type(EntityId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleMatch {
    pub rule: usize,
    pub bindings: BTreeMap<String, SlotBinding>,
    /// Tokens consumed by non-wildcard atoms.
    pub explained_tokens: BTreeSet<usize>,
    pub wildcard_items: usize,
}

#[derive(Clone, Copy, Debug)]
enum Item {
    Token(usize),
    Mention(usize),
}

fn items(frame: &QuestionFrame) -> Vec<Item> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < frame.raw_tokens.len() {
        if let Some(m) = frame.mention_at(i).filter(|&m| frame.mentions[m].kind != MentionKind::TypeWord) {
            out.push(Item::Mention(m));
            i = frame.mentions[m].end.max(i + 1);
        } else {
            if frame.raw_tokens[i].pos != Pos::Punct {
                out.push(Item::Token(i));
            }
            i += 1;
        }
    }
    out
}

struct Matcher<'a> {
    frame: &'a QuestionFrame,
    lexicon: &'a Lexicon,
    atoms: &'a [Atom],
    items: &'a [Item],
}

impl Matcher<'_> {
    fn run(&self, ai: usize, ii: usize, m: &mut RuleMatch) -> bool {
        let Some(atom) = self.atoms.get(ai) else {
            return ii == self.items.len();
        };
        if *atom == Atom::Wildcard {
            for skip in 0..=self.items.len() - ii {
                m.wildcard_items += skip;
                if self.run(ai + 1, ii + skip, m) {
                    return true;
                }
                m.wildcard_items -= skip;
            }
            return false;
        }
        let Some(&item) = self.items.get(ii) else {
            return false;
        };
        let token = |i: usize| &self.frame.raw_tokens[i];
        let (binding, consumed): (Option<(String, SlotBinding)>, Vec<usize>) = match (atom, item) {
            (Atom::Lemma(l), Item::Token(t)) if token(t).lemma == *l || token(t).norm == *l => (None, vec![t]),
            (Atom::PosClass(p), Item::Token(t)) if token(t).pos == *p => (None, vec![t]),
            (Atom::Entity(slot), Item::Mention(mi)) => {
                let mention = &self.frame.mentions[mi];
                if !mention.is_name() || mention.candidates.is_empty() {
                    return false;
                }
                (Some((slot.clone(), SlotBinding::Entity(mi))), (mention.start..mention.end).collect())
            }
            (Atom::Pred(slot), Item::Token(t)) => match self.lexicon.synonyms(&token(t).lemma) {
                Some(ps) => (
                    Some((slot.clone(), SlotBinding::Pred { lemma: token(t).lemma.clone(), predicates: ps.clone() })),
                    vec![t],
                ),
                None => return false,
            },
            (Atom::Type(slot), Item::Token(t)) => match self.lexicon.type_word(&token(t).lemma) {
                Some(id) => (Some((slot.clone(), SlotBinding::Type(id.clone()))), vec![t]),
                None => return false,
            },
            _ => return false,
        };
        let slot = binding.as_ref().map(|(s, _)| s.clone());
        if let Some((s, b)) = binding {
            m.bindings.insert(s, b);
        }
        let fresh: Vec<usize> = consumed.into_iter().filter(|t| m.explained_tokens.insert(*t)).collect();
        if self.run(ai + 1, ii + 1, m) {
            return true;
        }
        for t in fresh {
            m.explained_tokens.remove(&t);
        }
        if let Some(s) = slot {
            m.bindings.remove(&s);
        }
        false
    }
}

/// All rules matching the frame, best first: by priority, then fewer
/// wildcard atoms, then fewer tokens swallowed by wildcards.
pub fn match_rules(frame: &QuestionFrame, grammar: &Grammar, lexicon: &Lexicon) -> Vec<RuleMatch> {
    let items = items(frame);
    let mut out: Vec<RuleMatch> = grammar
        .rules
        .iter()
        .enumerate()
        .filter_map(|(ri, (rule, _))| {
            let matcher = Matcher { frame, lexicon, atoms: &rule.atoms, items: &items };
            let mut m = RuleMatch { rule: ri, bindings: BTreeMap::new(), explained_tokens: BTreeSet::new(), wildcard_items: 0 };
            matcher.run(0, 0, &mut m).then_some(m)
        })
        .collect();
    out.sort_by_key(|m| {
        let rule = &grammar.rules[m.rule].0;
        (rule.priority, rule.wildcards(), m.wildcard_items, m.rule)
    });
    out
}

/// Concrete values chosen for each slot.
pub type SlotValues = BTreeMap<String, EntityId>;

/// Enumerate slot assignments: entity slots take the top-ranked candidate,
/// predicate slots range over their synonym targets.
pub fn slot_assignments(m: &RuleMatch, frame: &QuestionFrame) -> Result<Vec<SlotValues>, InstantiateError> {
    let mut assignments = vec![SlotValues::new()];
    for (slot, binding) in &m.bindings {
        let choices: Vec<EntityId> = match binding {
            SlotBinding::Entity(mi) => {
                let top = frame.mentions[*mi].top_candidate().ok_or_else(|| InstantiateError::NoCandidate(slot.clone()))?;
                vec![top.clone()]
            }
            SlotBinding::Pred { predicates, .. } => predicates.iter().cloned().collect(),
            SlotBinding::Type(id) => vec![id.clone()],
        };
        if choices.is_empty() {
            return Err(InstantiateError::NoCandidate(slot.clone()));
        }
        assignments = assignments
            .into_iter()
            .flat_map(|a| {
                choices.iter().map(move |c| {
                    let mut a = a.clone();
                    a.insert(slot.clone(), c.clone());
                    a
                })
            })
            .collect();
    }
    Ok(assignments)
}

/// Fill the template's placeholders and validate the resulting query.
pub fn instantiate(logical: &LogicalPattern, slots: &SlotValues, count: bool) -> Result<GraphQuery, InstantiateError> {
    let fill = |t: &TemplateTerm| match t {
        TemplateTerm::Fixed(term) => Ok(term.clone()),
        TemplateTerm::Slot(s) => slots.get(s).map(Term::entity).ok_or_else(|| InstantiateError::Unbound(s.clone())),
    };
    let patterns = logical
        .patterns
        .iter()
        .map(|[s, p, o]| Ok(TriplePattern::new(fill(s)?, fill(p)?, fill(o)?)))
        .collect::<Result<Vec<_>, InstantiateError>>()?;
    let aggregate = if count { Aggregate::Count } else { logical.aggregate };
    let q = GraphQuery::new(patterns, &logical.project, aggregate);
    q.validate()?;
    Ok(q)
}

/// Try matched rules in order; the first whose query has a non-empty
/// result answers.
pub fn answer_reasoning(frame: &QuestionFrame, grammar: &Grammar, kb: &KnowledgeBase, lexicon: &Lexicon) -> QAResult {
    let lemmas = question_lemmas(frame, lexicon);
    for m in match_rules(frame, grammar, lexicon) {
        let (rule, logical) = &grammar.rules[m.rule];
        let Ok(assignments) = slot_assignments(&m, frame) else {
            continue;
        };
        let count = frame.wh_type == WhType::HowMany || logical.aggregate == Aggregate::Count;
        for slots in assignments {
            let Ok(query) = instantiate(logical, &slots, count) else {
                continue;
            };
            let Ok(solutions) = query::solve(&query, kb) else {
                continue;
            };
            let projected = query::project(&query, &solutions);
            if projected.is_empty() {
                continue;
            }
            let subject = m.bindings.iter().find_map(|(s, b)| match b {
                SlotBinding::Entity(_) => slots.get(s).cloned(),
                _ => None,
            });
            let predicate_phrase = m.bindings.values().find_map(|b| match b {
                SlotBinding::Pred { lemma, .. } => Some(lemma.clone()),
                _ => None,
            });
            let (kind, values) = match (logical.answer_kind, count) {
                (AnswerKind::Definition, _) => match &subject {
                    Some(s) => (AnswerKind::Definition, BTreeSet::from([Value::Entity(s.clone())])),
                    None => continue,
                },
                (_, true) => (AnswerKind::Count, BTreeSet::from([Value::literal(projected.len().to_string(), Datatype::Number)])),
                (kind, false) => (kind, projected),
            };
            let explained = frame
                .raw_tokens
                .iter()
                .enumerate()
                .filter(|(i, t)| m.explained_tokens.contains(i) && is_content(t, lexicon))
                .map(|(_, t)| t.lemma.clone())
                .collect::<BTreeSet<_>>();
            let coverage = if lemmas.is_empty() {
                1.0
            } else {
                explained.intersection(&lemmas).count() as f64 / lemmas.len() as f64
            };
            let max_pr = kb.max_pagerank();
            let relevance = slots
                .values()
                .map(|id| kb.pagerank(id))
                .fold(0.0, f64::max)
                / if max_pr > 0.0 { max_pr } else { 1.0 };
            let mut result = QAResult {
                source: Source::Reasoning,
                kind,
                values,
                provenance: solutions.iter().flat_map(|s| s.triples.iter().cloned()).collect(),
                query_debug: query.to_debug(),
                features: FeatureVector::default(),
                failed: false,
                subject,
                predicate_phrase,
                error: None,
            };
            let evidence = Evidence { coverage, relevance, rule_priority: Some(rule.priority) };
            result.features = FeatureVector::extract(&result, frame, kb, evidence);
            return result;
        }
    }
    QAResult::failed(Source::Reasoning, frame, kb, "no grammar rule produced an answer")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_atoms_and_numbers_slots() {
        let atoms = parse_atoms("what be * PRED of * PRED of * ENTITY ?").unwrap();
        assert_eq!(atoms.len(), 10);
        assert_eq!(atoms[3], Atom::Pred("p1".into()));
        assert_eq!(atoms[6], Atom::Pred("p2".into()));
        assert_eq!(atoms[9], Atom::Entity("e1".into()));
        assert!(parse_atoms("Who").is_err());
        assert_eq!(parse_atoms("@NOUN").unwrap(), vec![Atom::PosClass(Pos::Noun)]);
    }

    #[test]
    fn grammar_errors_cite_blocks() {
        let ok = "RULE a 1\nPATTERN who be ENTITY\nQUERY SELECT ?t\nQUERY $e1 P31 ?t\nKIND DEFINITION\n";
        assert_eq!(Grammar::parse(ok, "g").unwrap().rules.len(), 1);
        let bad = format!("{ok}\nRULE b 2\nPATTERN who be ENTITY\nQUERY SELECT ?t\nQUERY $e2 P31 ?t\nKIND DEFINITION\n");
        match Grammar::parse(&bad, "g") {
            Err(GrammarError::Block { block, .. }) => assert_eq!(block, 2),
            other => panic!("unexpected {other:?}"),
        }
        let dup = format!("{ok}\n{ok}");
        assert!(matches!(Grammar::parse(&dup, "g"), Err(GrammarError::Block { block: 2, .. })));
        assert!(matches!(Grammar::parse("# nothing\n", "g"), Err(GrammarError::Empty)));
    }

    #[test]
    fn instantiate_reports_unbound_placeholder() {
        let g = Grammar::parse("RULE a 1\nPATTERN who be ENTITY\nQUERY SELECT ?t\nQUERY $e1 P31 ?t\nKIND DEFINITION\n", "g").unwrap();
        let logical = &g.rules[0].1;
        assert_eq!(instantiate(logical, &SlotValues::new(), false), Err(InstantiateError::Unbound("e1".into())));
        let slots = SlotValues::from([("e1".to_owned(), EntityId::new("Q1").unwrap())]);
        let q = instantiate(logical, &slots, true).unwrap();
        assert_eq!(q.to_debug(), "COUNT ?t\nQ1 P31 ?t");
    }
}
