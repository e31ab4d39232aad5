//! Knowledge base: entities, triples, six permutation indexes, label lookup,
//! PageRank and entity sheets.

mod index;
mod io;
pub mod pagerank;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{Gender, Number};
use crate::text::normalize;

pub use index::IndexOrder;
pub use io::{load_kb, parse_entities, parse_triples, write_entities, write_triples};
pub use pagerank::PageRankConfig;

use index::PermutationIndexes;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("invalid entity id {0:?}")]
    InvalidId(String),
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("triples reference undeclared entities: {}", .0.join(", "))]
    Undeclared(Vec<String>),
    #[error("duplicate entity id {0}")]
    DuplicateEntity(String),
    #[error("entity {0} has no label")]
    MissingLabel(String),
    #[error("entity not found: {0}")]
    NotFound(String),
    #[error("cannot compute pagerank over an empty entity set")]
    EmptyGraph,
    #[error("invalid pagerank parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opaque entity or predicate identifier (`Q...`, `P...` by convention).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self, KbError> {
        let id = id.into();
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(KbError::InvalidId(id));
        }
        Ok(EntityId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Whether a raw token has the shape of an entity reference in a triples file.
    pub fn looks_like_reference(token: &str) -> bool {
        let mut chars = token.chars();
        matches!(chars.next(), Some('Q' | 'P'))
            && token.len() > 1
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    }
}

impl TryFrom<String> for EntityId {
    type Error = KbError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        EntityId::new(value)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> Self {
        id.0
    }
}

impl FromStr for EntityId {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityId::new(s)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    Plain,
    Number,
    Date,
}

/// Object position of a triple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Entity(EntityId),
    Literal { text: String, datatype: Datatype },
}

impl Value {
    pub fn entity(id: &EntityId) -> Self {
        Value::Entity(id.clone())
    }

    pub fn literal(text: impl Into<String>, datatype: Datatype) -> Self {
        Value::Literal { text: text.into(), datatype }
    }

    pub fn as_entity(&self) -> Option<&EntityId> {
        match self {
            Value::Entity(id) => Some(id),
            Value::Literal { .. } => None,
        }
    }

    /// Compact textual form used in triples files and query debug output.
    pub fn to_debug(&self) -> String {
        match self {
            Value::Entity(id) => id.to_string(),
            Value::Literal { text, datatype: Datatype::Plain } => format!("{text:?}"),
            Value::Literal { text, datatype: Datatype::Number } => format!("{text:?}^number"),
            Value::Literal { text, datatype: Datatype::Date } => format!("{text:?}^date"),
        }
    }

    /// Parse a quoted literal (`"9"^number`, `"x"`), or `None` when the token is not quoted.
    pub fn parse_quoted_literal(token: &str) -> Option<Value> {
        let (body, datatype) = if let Some(rest) = token.strip_suffix("^number") {
            (rest, Datatype::Number)
        } else if let Some(rest) = token.strip_suffix("^date") {
            (rest, Datatype::Date)
        } else {
            (token, Datatype::Plain)
        };
        let inner = body.strip_prefix('"')?.strip_suffix('"')?;
        let text = serde_json::from_str::<String>(body).unwrap_or_else(|_| inner.to_owned());
        Some(Value::Literal { text, datatype })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Entity(id) => write!(f, "{id}"),
            Value::Literal { text, .. } => f.write_str(text),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: EntityId,
    pub object: Value,
}

impl Triple {
    pub fn new(subject: EntityId, predicate: EntityId, object: Value) -> Self {
        Triple { subject, predicate, object }
    }

    pub fn to_debug(&self) -> String {
        format!("{} {} {}", self.subject, self.predicate, self.object.to_debug())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub labels: BTreeMap<String, String>,
    pub aliases: BTreeMap<String, Vec<String>>,
    pub description: BTreeMap<String, String>,
    pub types: BTreeSet<EntityId>,
    pub image_ref: Option<String>,
    pub gender: Gender,
    pub number: Number,
    pub pagerank: f64,
}

impl Entity {
    pub fn new(id: EntityId, lang: &str, label: &str) -> Self {
        Entity {
            id,
            labels: BTreeMap::from([(lang.to_owned(), label.to_owned())]),
            aliases: BTreeMap::new(),
            description: BTreeMap::new(),
            types: BTreeSet::new(),
            image_ref: None,
            gender: Gender::Unknown,
            number: Number::Unknown,
            pagerank: 0.0,
        }
    }

    /// Label in `lang`, falling back to `default_lang`, then to any label.
    pub fn label(&self, lang: &str, default_lang: &str) -> &str {
        self.labels
            .get(lang)
            .or_else(|| self.labels.get(default_lang))
            .or_else(|| self.labels.values().next())
            .map(String::as_str)
            .unwrap_or_else(|| self.id.as_str())
    }

    pub fn description(&self, lang: &str, default_lang: &str) -> Option<&str> {
        self.description
            .get(lang)
            .or_else(|| self.description.get(default_lang))
            .map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntitySheet {
    pub id: EntityId,
    pub label: String,
    pub description: String,
    pub types: Vec<(EntityId, String)>,
    pub image_ref: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct KbStats {
    pub entities: usize,
    pub triples: usize,
}

/// Immutable-after-load triple store.
#[derive(Debug)]
pub struct KnowledgeBase {
    default_lang: String,
    entities: BTreeMap<EntityId, Entity>,
    triples: Vec<Triple>,
    dictionary: Dictionary,
    indexes: PermutationIndexes,
    label_index: HashMap<(String, String), BTreeSet<EntityId>>,
    predicates: BTreeSet<EntityId>,
    max_pagerank: f64,
}

#[derive(Debug, Default)]
struct Dictionary {
    values: Vec<Value>,
    ids: HashMap<Value, u32>,
}

impl Dictionary {
    fn intern(&mut self, value: &Value) -> u32 {
        if let Some(&id) = self.ids.get(value) {
            return id;
        }
        let id = self.values.len() as u32;
        self.values.push(value.clone());
        self.ids.insert(value.clone(), id);
        id
    }

    fn get(&self, value: &Value) -> Option<u32> {
        self.ids.get(value).copied()
    }
}

impl KnowledgeBase {
    /// Build a KB, validating that every subject and predicate is declared.
    /// Duplicate triples are collapsed.
    pub fn from_parts(entities: Vec<Entity>, triples: Vec<Triple>, default_lang: &str) -> Result<Self, KbError> {
        let mut by_id = BTreeMap::new();
        for entity in entities {
            if entity.labels.is_empty() {
                return Err(KbError::MissingLabel(entity.id.to_string()));
            }
            if by_id.contains_key(&entity.id) {
                return Err(KbError::DuplicateEntity(entity.id.to_string()));
            }
            by_id.insert(entity.id.clone(), entity);
        }

        let mut undeclared = BTreeSet::new();
        for t in &triples {
            for id in [&t.subject, &t.predicate] {
                if !by_id.contains_key(id) {
                    undeclared.insert(id.to_string());
                }
            }
        }
        if !undeclared.is_empty() {
            return Err(KbError::Undeclared(undeclared.into_iter().collect()));
        }

        let triples: Vec<Triple> = triples.into_iter().collect::<BTreeSet<_>>().into_iter().collect();

        let mut dictionary = Dictionary::default();
        let mut indexes = PermutationIndexes::default();
        for t in &triples {
            let key = [
                dictionary.intern(&Value::Entity(t.subject.clone())),
                dictionary.intern(&Value::Entity(t.predicate.clone())),
                dictionary.intern(&t.object),
            ];
            indexes.insert(key);
        }

        let mut label_index: HashMap<(String, String), BTreeSet<EntityId>> = HashMap::new();
        for entity in by_id.values() {
            let surfaces = entity
                .labels
                .iter()
                .chain(entity.aliases.iter().flat_map(|(lang, v)| v.iter().map(move |s| (lang, s))));
            for (lang, surface) in surfaces {
                let key = (lang.clone(), normalize(surface));
                label_index.entry(key).or_default().insert(entity.id.clone());
            }
        }

        let n = by_id.len().max(1) as f64;
        for entity in by_id.values_mut() {
            entity.pagerank = 1.0 / n;
        }
        let max_pagerank = if by_id.is_empty() { 0.0 } else { 1.0 / n };

        Ok(KnowledgeBase {
            default_lang: default_lang.to_owned(),
            entities: by_id,
            dictionary,
            indexes,
            label_index,
            predicates: triples.iter().map(|t| t.predicate.clone()).collect(),
            max_pagerank,
            triples,
        })
    }

    pub fn default_lang(&self) -> &str {
        &self.default_lang
    }

    pub fn stats(&self) -> KbStats {
        KbStats { entities: self.entities.len(), triples: self.triples.len() }
    }

    /// All triples in (subject, predicate, object) order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    /// Set of predicate ids used by at least one triple.
    /// Ids used in predicate position.
    pub fn predicates(&self) -> &BTreeSet<EntityId> {
        &self.predicates
    }

    pub fn pagerank(&self, id: &EntityId) -> f64 {
        self.entities.get(id).map_or(0.0, |e| e.pagerank)
    }

    pub fn max_pagerank(&self) -> f64 {
        self.max_pagerank
    }

    pub fn label(&self, id: &EntityId, lang: &str) -> String {
        self.entities
            .get(id)
            .map_or_else(|| id.to_string(), |e| e.label(lang, &self.default_lang).to_owned())
    }

    /// Human-readable rendering of a value: entity label or literal text.
    pub fn render(&self, value: &Value, lang: &str) -> String {
        match value {
            Value::Entity(id) => self.label(id, lang),
            Value::Literal { text, .. } => text.clone(),
        }
    }

    /// Triples agreeing with every bound component, in (s, p, o) order.
    pub fn match_pattern(&self, s: Option<&EntityId>, p: Option<&EntityId>, o: Option<&Value>) -> Vec<Triple> {
        let order = IndexOrder::for_mask(s.is_some(), p.is_some(), o.is_some());
        self.match_via(order, s, p, o)
    }

    /// Like [`match_pattern`](Self::match_pattern) but through an explicit index.
    pub fn match_via(&self, order: IndexOrder, s: Option<&EntityId>, p: Option<&EntityId>, o: Option<&Value>) -> Vec<Triple> {
        let Some(bound) = self.encode(s, p, o) else {
            return Vec::new();
        };
        let mut out: Vec<Triple> = self.indexes.scan(order, bound).map(|key| self.decode(key)).collect();
        out.sort();
        out
    }

    /// Number of triples matching the bound components.
    pub fn count(&self, s: Option<&EntityId>, p: Option<&EntityId>, o: Option<&Value>) -> usize {
        let Some(bound) = self.encode(s, p, o) else {
            return 0;
        };
        let order = IndexOrder::for_mask(s.is_some(), p.is_some(), o.is_some());
        self.indexes.scan(order, bound).count()
    }

    fn encode(&self, s: Option<&EntityId>, p: Option<&EntityId>, o: Option<&Value>) -> Option<[Option<u32>; 3]> {
        let lookup_entity = |id: Option<&EntityId>| match id {
            None => Some(None),
            Some(id) => self.dictionary.get(&Value::Entity(id.clone())).map(Some),
        };
        let object = match o {
            None => None,
            Some(v) => Some(self.dictionary.get(v)?),
        };
        Some([lookup_entity(s)?, lookup_entity(p)?, object])
    }

    fn decode(&self, key: [u32; 3]) -> Triple {
        let value = |i: u32| self.dictionary.values[i as usize].clone();
        let entity = |i: u32| match value(i) {
            Value::Entity(id) => id,
            Value::Literal { .. } => unreachable!("subject and predicate are always entities"),
        };
        Triple::new(entity(key[0]), entity(key[1]), value(key[2]))
    }

    /// Case-insensitive, diacritic-folded label and alias lookup.
    pub fn lookup_label(&self, surface: &str, lang: &str) -> BTreeSet<EntityId> {
        self.label_index
            .get(&(lang.to_owned(), normalize(surface)))
            .cloned()
            .unwrap_or_default()
    }

    /// Run PageRank over the entity graph and store the scores on each entity.
    pub fn compute_pagerank(&mut self, config: &PageRankConfig) -> Result<BTreeMap<EntityId, f64>, KbError> {
        if self.entities.is_empty() {
            return Err(KbError::EmptyGraph);
        }
        let position: HashMap<&EntityId, usize> = self.entities.keys().enumerate().map(|(i, id)| (id, i)).collect();
        let edges: Vec<(usize, usize)> = self
            .triples
            .iter()
            .filter_map(|t| {
                let target = t.object.as_entity()?;
                Some((*position.get(&t.subject)?, *position.get(target)?))
            })
            .collect();
        let result = pagerank::power_iteration(self.entities.len(), &edges, config)?;
        drop(position);

        let mut scores = BTreeMap::new();
        for (entity, score) in self.entities.values_mut().zip(&result.scores) {
            entity.pagerank = *score;
            scores.insert(entity.id.clone(), *score);
        }
        self.max_pagerank = result.scores.iter().copied().fold(0.0, f64::max);
        Ok(scores)
    }

    pub fn entity_sheet(&self, id: &EntityId, lang: &str) -> Result<EntitySheet, KbError> {
        let entity = self.entities.get(id).ok_or_else(|| KbError::NotFound(id.to_string()))?;
        Ok(EntitySheet {
            id: id.clone(),
            label: entity.label(lang, &self.default_lang).to_owned(),
            description: entity.description(lang, &self.default_lang).unwrap_or_default().to_owned(),
            types: entity.types.iter().map(|t| (t.clone(), self.label(t, lang))).collect(),
            image_ref: entity.image_ref.clone(),
        })
    }
}
