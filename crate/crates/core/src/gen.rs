//! Answer generation: flat short answers and template-driven long answers.
//!
//! Template file lines: `KIND lang | pattern`, e.g.
//! `DEFINITION en | {subject} is {article} {description}`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::kb::{KnowledgeBase, Value};
use crate::qa::AnswerKind;

pub const PLACEHOLDERS: [&str; 6] = ["subject", "values", "description", "count", "predicate", "article"];

#[derive(Debug, Error)]
pub enum GenError {
    #[error("nothing to render: answer has no values")]
    EmptyValues,
    #[error("{source_name}:{line}: {message}")]
    Malformed { source_name: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateKind {
    Definition,
    EntitySet,
    Count,
    Clarification,
}

impl From<AnswerKind> for TemplateKind {
    fn from(k: AnswerKind) -> Self {
        match k {
            AnswerKind::Definition => TemplateKind::Definition,
            AnswerKind::EntitySet => TemplateKind::EntitySet,
            AnswerKind::Count => TemplateKind::Count,
        }
    }
}

impl std::str::FromStr for TemplateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CLARIFICATION" => Ok(TemplateKind::Clarification),
            other => other.parse::<AnswerKind>().map(TemplateKind::from),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub kind: TemplateKind,
    pub language: String,
    pub pattern: String,
}

#[derive(Clone, Debug, Default)]
pub struct Templates {
    by_key: BTreeMap<(TemplateKind, String), Template>,
}

fn placeholders(pattern: &str) -> Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let close = rest[open..].find('}').ok_or("unclosed placeholder")? + open;
        out.push(&rest[open + 1..close]);
        rest = &rest[close + 1..];
    }
    if rest.contains('}') {
        return Err("stray closing brace".into());
    }
    Ok(out)
}

impl Templates {
    pub fn load(path: &Path) -> Result<Templates, GenError> {
        Templates::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Templates, GenError> {
        let mut t = Templates::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| GenError::Malformed { source_name: source_name.to_owned(), line: i + 1, message };
            let (head, pattern) = line.split_once('|').ok_or_else(|| err("expected `KIND lang | pattern`".into()))?;
            let mut head = head.split_whitespace();
            let (Some(kind), Some(lang), None) = (head.next(), head.next(), head.next()) else {
                return Err(err("expected `KIND lang` before `|`".into()));
            };
            let kind: TemplateKind = kind.parse().map_err(err)?;
            let pattern = pattern.trim().to_owned();
            for p in placeholders(&pattern).map_err(err)? {
                if !PLACEHOLDERS.contains(&p) {
                    return Err(err(format!("unknown placeholder {{{p}}}")));
                }
            }
            t.insert(Template { kind, language: lang.to_owned(), pattern });
        }
        Ok(t)
    }

    pub fn insert(&mut self, template: Template) {
        self.by_key.insert((template.kind, template.language.clone()), template);
    }

    pub fn get(&self, kind: TemplateKind, lang: &str) -> Option<&Template> {
        self.by_key.get(&(kind, lang.to_owned()))
    }
}

/// Values in presentation order: descending pagerank, then label.
pub fn ordered_values(values: &BTreeSet<Value>, kb: &KnowledgeBase, lang: &str) -> Vec<String> {
    let mut items: Vec<(f64, String)> = values
        .iter()
        .map(|v| (v.as_entity().map_or(0.0, |id| kb.pagerank(id)), kb.render(v, lang)))
        .collect();
    items.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    items.into_iter().map(|(_, s)| s).collect()
}

pub fn short_answer(values: &BTreeSet<Value>, kb: &KnowledgeBase, lang: &str) -> Result<String, GenError> {
    if values.is_empty() {
        return Err(GenError::EmptyValues);
    }
    Ok(ordered_values(values, kb, lang).join(", "))
}

fn article(lang: &str, next: &str) -> &'static str {
    match lang {
        "fr" => "",
        _ if next.starts_with(|c: char| "aeiouAEIOU".contains(c)) => "an",
        _ => "a",
    }
}

/// Everything a template may refer to.
#[derive(Clone, Debug, Default)]
pub struct Slots {
    pub subject: Option<String>,
    pub values: Option<String>,
    pub description: Option<String>,
    pub count: Option<String>,
    pub predicate: Option<String>,
}

/// Fill a template; `None` if it refers to a slot that has no value.
pub fn fill(template: &Template, slots: &Slots) -> Option<String> {
    let mut out = String::new();
    let mut rest = template.pattern.as_str();
    while let Some(open) = rest.find('{') {
        let close = rest[open..].find('}')? + open;
        out.push_str(&rest[..open]);
        let name = &rest[open + 1..close];
        let value = match name {
            "subject" => slots.subject.clone()?,
            "values" => slots.values.clone()?,
            "description" => slots.description.clone()?,
            "count" => slots.count.clone()?,
            "predicate" => slots.predicate.clone()?,
            "article" => article(&template.language, slots.description.as_deref()?).to_owned(),
            _ => return None,
        };
        out.push_str(&value);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Some(out.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Long answer from the matching template, or the short answer when no
/// template applies.
pub fn long_answer(
    kind: TemplateKind,
    slots: &Slots,
    values: &BTreeSet<Value>,
    kb: &KnowledgeBase,
    templates: &Templates,
    lang: &str,
) -> Result<String, GenError> {
    if let Some(text) = templates.get(kind, lang).and_then(|t| fill(t, slots)) {
        return Ok(text);
    }
    short_answer(values, kb, lang)
}
