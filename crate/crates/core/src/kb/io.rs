//! Flat-file ingestion: a TAB-separated triples file and a JSON-lines
//! entities file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Entity, EntityId, KbError, KnowledgeBase, Triple, Value};
use crate::agreement::{Gender, Number};

#[derive(Debug, Serialize, Deserialize)]
struct EntityRecord {
    id: EntityId,
    labels: BTreeMap<String, String>,
    #[serde(default)]
    aliases: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    description: BTreeMap<String, String>,
    #[serde(default)]
    types: Vec<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    #[serde(default, skip_serializing_if = "is_unknown_gender")]
    gender: Gender,
    #[serde(default, skip_serializing_if = "is_unknown_number")]
    number: Number,
}

fn is_unknown_gender(g: &Gender) -> bool {
    *g == Gender::Unknown
}

fn is_unknown_number(n: &Number) -> bool {
    *n == Number::Unknown
}

pub fn parse_entities(reader: impl BufRead, source: &str) -> Result<Vec<Entity>, KbError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record: EntityRecord = serde_json::from_str(trimmed).map_err(|e| KbError::Malformed {
            path: source.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(Entity {
            id: record.id,
            labels: record.labels,
            aliases: record.aliases,
            description: record.description,
            types: record.types.into_iter().collect(),
            image_ref: record.image,
            gender: record.gender,
            number: record.number,
            pagerank: 0.0,
        });
    }
    Ok(out)
}

/// Parse triples; an object becomes an entity when it has the id shape and
/// is in `declared`, otherwise a literal.
pub fn parse_triples(reader: impl BufRead, source: &str, declared: &BTreeSet<EntityId>) -> Result<Vec<Triple>, KbError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: String| KbError::Malformed { path: source.to_owned(), line: i + 1, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(malformed(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let subject = EntityId::new(fields[0].trim()).map_err(|e| malformed(e.to_string()))?;
        let predicate = EntityId::new(fields[1].trim()).map_err(|e| malformed(e.to_string()))?;
        let raw = fields[2].trim();
        if raw.is_empty() {
            return Err(malformed("empty object".to_owned()));
        }
        let object = match EntityId::new(raw) {
            Ok(id) if EntityId::looks_like_reference(raw) && declared.contains(&id) => Value::Entity(id),
            _ => Value::parse_quoted_literal(raw).unwrap_or_else(|| Value::literal(raw, super::Datatype::Plain)),
        };
        out.push(Triple::new(subject, predicate, object));
    }
    Ok(out)
}

/// Load and index a KB from disk. PageRank is computed separately.
pub fn load_kb(triples_path: &Path, entities_path: &Path, lang: &str) -> Result<KnowledgeBase, KbError> {
    let entities = parse_entities(BufReader::new(File::open(entities_path)?), &entities_path.display().to_string())?;
    let declared: BTreeSet<EntityId> = entities.iter().map(|e| e.id.clone()).collect();
    let triples = parse_triples(
        BufReader::new(File::open(triples_path)?),
        &triples_path.display().to_string(),
        &declared,
    )?;
    let kb = KnowledgeBase::from_parts(entities, triples, lang)?;
    let stats = kb.stats();
    log::info!("loaded {} entities and {} triples", stats.entities, stats.triples);
    Ok(kb)
}

pub fn write_entities(kb: &KnowledgeBase, mut w: impl Write) -> Result<(), KbError> {
    for e in kb.entities() {
        let record = EntityRecord {
            id: e.id.clone(),
            labels: e.labels.clone(),
            aliases: e.aliases.clone(),
            description: e.description.clone(),
            types: e.types.iter().cloned().collect(),
            image: e.image_ref.clone(),
            gender: e.gender,
            number: e.number,
        };
        serde_json::to_writer(&mut w, &record).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_triples(kb: &KnowledgeBase, mut w: impl Write) -> Result<(), KbError> {
    for t in kb.triples() {
        writeln!(w, "{}\t{}\t{}", t.subject, t.predicate, t.object.to_debug())?;
    }
    Ok(())
}
