//! Conjunctive triple-pattern queries with one projected variable, evaluated
//! by left-deep nested index joins over the knowledge base.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::kb::{EntityId, KnowledgeBase, Triple, Value};

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("query has no patterns")]
    Empty,
    #[error("projection variable {0} does not occur in any pattern")]
    MissingProjection(String),
    #[error("patterns do not form a connected graph")]
    Disconnected,
    #[error("invalid variable name {0:?}")]
    InvalidVariable(String),
    #[error("literal in {0} position")]
    LiteralPosition(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_owned())
    }

    pub fn entity(id: &EntityId) -> Term {
        Term::Const(Value::Entity(id.clone()))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    /// Parse one debug-form token: `?x`, an entity id, or a quoted literal.
    pub fn parse(token: &str) -> Result<Term, String> {
        if token.starts_with('?') {
            return if token.len() > 1 {
                Ok(Term::Var(token.to_owned()))
            } else {
                Err(format!("invalid variable {token:?}"))
            };
        }
        if let Some(v) = Value::parse_quoted_literal(token) {
            return Ok(Term::Const(v));
        }
        EntityId::new(token).map(|id| Term::Const(Value::Entity(id))).map_err(|e| e.to_string())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(v) => f.write_str(&v.to_debug()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriplePattern {
    pub s: Term,
    pub p: Term,
    pub o: Term,
}

impl TriplePattern {
    pub fn new(s: Term, p: Term, o: Term) -> Self {
        TriplePattern { s, p, o }
    }

    pub fn terms(&self) -> [&Term; 3] {
        [&self.s, &self.p, &self.o]
    }

    pub fn variables(&self) -> BTreeSet<&str> {
        self.terms().into_iter().filter_map(Term::as_var).collect()
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.s, self.p, self.o)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Aggregate {
    #[serde(rename = "LIST")]
    List,
    #[serde(rename = "COUNT")]
    Count,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GraphQuery {
    pub patterns: Vec<TriplePattern>,
    pub project: String,
    pub aggregate: Aggregate,
}

pub type Bindings = BTreeMap<String, Value>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryResult {
    List(Vec<Value>),
    Count(usize),
}

/// A full solution together with the triples that satisfied its patterns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub bindings: Bindings,
    pub triples: Vec<Triple>,
}

impl GraphQuery {
    pub fn new(patterns: Vec<TriplePattern>, project: &str, aggregate: Aggregate) -> Self {
        GraphQuery { patterns, project: project.to_owned(), aggregate }
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.patterns.is_empty() {
            return Err(QueryError::Empty);
        }
        for pattern in &self.patterns {
            for term in pattern.terms() {
                if let Term::Var(v) = term {
                    if v.len() < 2 || !v.starts_with('?') {
                        return Err(QueryError::InvalidVariable(v.clone()));
                    }
                }
            }
            if matches!(pattern.s, Term::Const(Value::Literal { .. })) {
                return Err(QueryError::LiteralPosition("subject"));
            }
            if matches!(pattern.p, Term::Const(Value::Literal { .. })) {
                return Err(QueryError::LiteralPosition("predicate"));
            }
        }
        if !self.patterns.iter().any(|p| p.variables().contains(self.project.as_str())) {
            return Err(QueryError::MissingProjection(self.project.clone()));
        }
        if !self.is_connected() {
            return Err(QueryError::Disconnected);
        }
        Ok(())
    }

    /// Patterns are linked when they share a variable or a subject/object constant.
    fn is_connected(&self) -> bool {
        let n = self.patterns.len();
        let keys: Vec<BTreeSet<&Term>> = self
            .patterns
            .iter()
            .map(|p| {
                let mut k: BTreeSet<&Term> = [&p.s, &p.o].into_iter().collect();
                if matches!(p.p, Term::Var(_)) {
                    k.insert(&p.p);
                }
                k
            })
            .collect();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && !keys[i].is_disjoint(&keys[j]) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Parse the textual debug form: a `SELECT ?v` / `COUNT ?v` header, then
    /// one `s p o` pattern per line.
    pub fn parse(text: &str) -> Result<GraphQuery, QueryError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(QueryError::Empty)?;
        let mut head = header.split_whitespace();
        let aggregate = match head.next() {
            Some("SELECT") => Aggregate::List,
            Some("COUNT") => Aggregate::Count,
            other => {
                return Err(QueryError::Parse {
                    line: hline + 1,
                    message: format!("expected SELECT or COUNT, found {other:?}"),
                })
            }
        };
        let project = match (head.next(), head.next()) {
            (Some(v), None) if v.starts_with('?') => v.to_owned(),
            _ => return Err(QueryError::Parse { line: hline + 1, message: "expected one projection variable".into() }),
        };
        let mut patterns = Vec::new();
        for (i, line) in lines {
            let parse_err = |message: String| QueryError::Parse { line: i + 1, message };
            let tokens = split_terms(line).map_err(parse_err)?;
            if tokens.len() != 3 {
                return Err(parse_err(format!("expected 3 terms, found {}", tokens.len())));
            }
            let terms = tokens.iter().map(|t| Term::parse(t)).collect::<Result<Vec<_>, _>>().map_err(parse_err)?;
            let [s, p, o]: [Term; 3] = terms.try_into().expect("three terms");
            patterns.push(TriplePattern::new(s, p, o));
        }
        let query = GraphQuery { patterns, project, aggregate };
        query.validate()?;
        Ok(query)
    }

    pub fn to_debug(&self) -> String {
        let head = match self.aggregate {
            Aggregate::List => "SELECT",
            Aggregate::Count => "COUNT",
        };
        let mut out = format!("{head} {}", self.project);
        for p in &self.patterns {
            out.push('\n');
            out.push_str(&p.to_string());
        }
        out
    }
}

/// Split a debug-form line into whitespace-separated tokens, keeping quoted
/// literals (with an optional `^type` suffix) intact.
pub fn split_terms(line: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let mut token = String::new();
        if c == '"' {
            token.push(chars.next().unwrap());
            let mut closed = false;
            while let Some(c) = chars.next() {
                token.push(c);
                if c == '\\' {
                    if let Some(escaped) = chars.next() {
                        token.push(escaped);
                    }
                } else if c == '"' {
                    closed = true;
                    break;
                }
            }
            if !closed {
                return Err(format!("unterminated literal in {line:?}"));
            }
        }
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() {
                break;
            }
            token.push(c);
            chars.next();
        }
        tokens.push(token);
    }
    Ok(tokens)
}

fn resolve<'a>(term: &'a Term, bindings: &'a Bindings) -> Option<&'a Value> {
    match term {
        Term::Var(v) => bindings.get(v),
        Term::Const(c) => Some(c),
    }
}

/// Rough result size of a pattern with its variables unbound.
fn estimate(pattern: &TriplePattern, kb: &KnowledgeBase) -> usize {
    let entity = |t: &Term| match t {
        Term::Const(Value::Entity(id)) => Some(Some(id.clone())),
        Term::Const(Value::Literal { .. }) => None,
        Term::Var(_) => Some(None),
    };
    let (Some(s), Some(p)) = (entity(&pattern.s), entity(&pattern.p)) else {
        return 0;
    };
    let o = match &pattern.o {
        Term::Const(v) => Some(v.clone()),
        Term::Var(_) => None,
    };
    kb.count(s.as_ref(), p.as_ref(), o.as_ref())
}

/// Order patterns so that the most selective ones run first, preferring
/// patterns joined to already-bound variables after the first pick.
pub fn plan(query: &GraphQuery, kb: &KnowledgeBase) -> Vec<TriplePattern> {
    let mut remaining: Vec<(usize, &TriplePattern, usize)> =
        query.patterns.iter().enumerate().map(|(i, p)| (i, p, estimate(p, kb))).collect();
    let mut bound: BTreeSet<&str> = BTreeSet::new();
    let mut ordered = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let pick = remaining
            .iter()
            .enumerate()
            .min_by_key(|(_, (i, p, est))| {
                let vars = p.variables();
                let joined = bound.is_empty() || vars.is_empty() || vars.iter().any(|v| bound.contains(v));
                let free = vars.iter().filter(|v| !bound.contains(*v)).count();
                (!joined, *est, free, *i)
            })
            .map(|(pos, _)| pos)
            .expect("non-empty");
        let (_, pattern, _) = remaining.remove(pick);
        bound.extend(pattern.variables());
        ordered.push(pattern.clone());
    }
    ordered
}

/// All solutions of the conjunctive query, in discovery order.
pub fn solve(query: &GraphQuery, kb: &KnowledgeBase) -> Result<Vec<Solution>, QueryError> {
    query.validate()?;
    let ordered = plan(query, kb);
    let mut out = Vec::new();
    let mut trail = Vec::with_capacity(ordered.len());
    join(&ordered, kb, &mut Bindings::new(), &mut trail, &mut out);
    Ok(out)
}

fn join(patterns: &[TriplePattern], kb: &KnowledgeBase, bindings: &mut Bindings, trail: &mut Vec<Triple>, out: &mut Vec<Solution>) {
    let Some((pattern, rest)) = patterns.split_first() else {
        out.push(Solution { bindings: bindings.clone(), triples: trail.clone() });
        return;
    };
    let s = resolve(&pattern.s, bindings).cloned();
    let p = resolve(&pattern.p, bindings).cloned();
    let o = resolve(&pattern.o, bindings).cloned();
    // A literal bound into subject or predicate position matches nothing.
    let s_id = match &s {
        Some(Value::Entity(id)) => Some(id),
        Some(Value::Literal { .. }) => return,
        None => None,
    };
    let p_id = match &p {
        Some(Value::Entity(id)) => Some(id),
        Some(Value::Literal { .. }) => return,
        None => None,
    };
    for triple in kb.match_pattern(s_id, p_id, o.as_ref()) {
        let mut added = Vec::new();
        let values = [Value::Entity(triple.subject.clone()), Value::Entity(triple.predicate.clone()), triple.object.clone()];
        let mut consistent = true;
        for (term, value) in pattern.terms().into_iter().zip(values) {
            if let Term::Var(v) = term {
                match bindings.get(v) {
                    Some(existing) if *existing != value => {
                        consistent = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        bindings.insert(v.clone(), value);
                        added.push(v.clone());
                    }
                }
            }
        }
        if consistent {
            trail.push(triple.clone());
            join(rest, kb, bindings, trail, out);
            trail.pop();
        }
        for v in added {
            bindings.remove(&v);
        }
    }
}

/// Distinct projected values (LIST) or their number (COUNT).
pub fn evaluate(query: &GraphQuery, kb: &KnowledgeBase) -> Result<QueryResult, QueryError> {
    let values = project(query, &solve(query, kb)?);
    Ok(match query.aggregate {
        Aggregate::List => QueryResult::List(values.into_iter().collect()),
        Aggregate::Count => QueryResult::Count(values.len()),
    })
}

pub fn project(query: &GraphQuery, solutions: &[Solution]) -> BTreeSet<Value> {
    solutions.iter().filter_map(|s| s.bindings.get(&query.project).cloned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Datatype, Entity};

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn kb() -> KnowledgeBase {
        let names = ["Q1", "Q2", "Q3", "Q4", "P1", "P2"];
        let entities = names.iter().map(|n| Entity::new(id(n), "en", n)).collect();
        let e = |s: &str| Value::Entity(id(s));
        let triples = vec![
            Triple::new(id("Q1"), id("P1"), e("Q9").clone()).clone(),
            Triple::new(id("Q2"), id("P1"), e("Q9")),
            Triple::new(id("Q1"), id("P2"), e("Q3")),
            Triple::new(id("Q2"), id("P2"), e("Q4")),
            Triple::new(id("Q3"), id("P2"), e("Q3")),
            Triple::new(id("Q4"), id("P1"), Value::literal("x", Datatype::Plain)),
        ];
        KnowledgeBase::from_parts(entities, triples, "en").unwrap()
    }

    #[test]
    fn parse_and_print_round_trip() {
        let text = "COUNT ?c\n?x P1 Q9\n?x P2 ?c";
        let q = GraphQuery::parse(text).unwrap();
        assert_eq!(q.aggregate, Aggregate::Count);
        assert_eq!(q.to_debug(), text);
        let lit = GraphQuery::parse("SELECT ?x\n?x P1 \"a b\"^date").unwrap();
        assert_eq!(lit.patterns[0].o, Term::Const(Value::literal("a b", Datatype::Date)));
    }

    #[test]
    fn validation_errors() {
        assert_eq!(GraphQuery::new(vec![], "?x", Aggregate::List).validate(), Err(QueryError::Empty));
        let p = TriplePattern::new(Term::var("?x"), Term::entity(&id("P1")), Term::var("?y"));
        assert_eq!(
            GraphQuery::new(vec![p.clone()], "?z", Aggregate::List).validate(),
            Err(QueryError::MissingProjection("?z".into()))
        );
        let q = TriplePattern::new(Term::var("?a"), Term::entity(&id("P1")), Term::var("?b"));
        assert_eq!(GraphQuery::new(vec![p, q], "?x", Aggregate::List).validate(), Err(QueryError::Disconnected));
        assert!(GraphQuery::parse("SELECT ?x\n?x P1").is_err());
        assert!(GraphQuery::parse("ASK ?x\n?x P1 ?y").is_err());
    }

    #[test]
    fn repeated_variable_must_agree() {
        let q = GraphQuery::parse("SELECT ?x\n?x P2 ?x").unwrap();
        assert_eq!(evaluate(&q, &kb()).unwrap(), QueryResult::List(vec![Value::Entity(id("Q3"))]));
    }

    #[test]
    fn join_and_count() {
        let q = GraphQuery::parse("SELECT ?c\n?x P1 Q9\n?x P2 ?c").unwrap();
        let kb = kb();
        assert_eq!(
            evaluate(&q, &kb).unwrap(),
            QueryResult::List(vec![Value::Entity(id("Q3")), Value::Entity(id("Q4"))])
        );
        let count = GraphQuery { aggregate: Aggregate::Count, ..q };
        assert_eq!(evaluate(&count, &kb).unwrap(), QueryResult::Count(2));
    }

    #[test]
    fn plan_puts_ground_pattern_first() {
        let q = GraphQuery::parse("SELECT ?c\n?c P2 Q3\nQ1 P2 Q3").unwrap();
        let planned = plan(&q, &kb());
        assert!(planned[0].variables().is_empty());
        let single = GraphQuery::parse("SELECT ?c\n?x P2 ?c").unwrap();
        assert_eq!(plan(&single, &kb()), single.patterns);
    }

    #[test]
    fn split_respects_quotes() {
        assert_eq!(split_terms("?x P1 \"a \\\"b\\\" c\"^number").unwrap(), vec!["?x", "P1", "\"a \\\"b\\\" c\"^number"]);
        assert!(split_terms("?x P1 \"open").is_err());
    }
}
