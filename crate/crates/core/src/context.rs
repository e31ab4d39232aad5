//! Dialogue state and the three resolution passes run before the backends:
//! speaker deixis, pronoun coreference and elliptical fragments.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{Gender, Number};
use crate::arbiter::Answer;
use crate::kb::{Datatype, EntityId, KnowledgeBase, Value};
use crate::nlu::{is_content, parse_question, Lexicon, MentionKind, Pos, QuestionFrame, Token};

/// Salience entries kept per session.
pub const MAX_SALIENCE: usize = 32;

#[derive(Debug, Error)]
pub enum SpeakerError {
    #[error("{source_name}:{line}: {message}")]
    Malformed { source_name: String, line: usize, message: String },
    #[error("duplicate speaker id {0:?}")]
    Duplicate(String),
    #[error("speaker {speaker}: attribute {attribute} references unknown entity {entity}")]
    UnknownEntity { speaker: String, attribute: String, entity: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub name: String,
    pub attributes: BTreeMap<String, Value>,
    pub language: String,
}

#[derive(Deserialize)]
struct SpeakerRecord {
    speaker_id: String,
    name: String,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
    #[serde(default = "default_language")]
    language: String,
}

fn default_language() -> String {
    "en".to_owned()
}

#[derive(Clone, Debug, Default)]
pub struct SpeakerStore {
    profiles: BTreeMap<String, SpeakerProfile>,
}

impl SpeakerStore {
    pub fn load(path: &Path, kb: &KnowledgeBase) -> Result<SpeakerStore, SpeakerError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        SpeakerStore::parse(file, &path.display().to_string(), kb)
    }

    /// Attribute values use the triple-object convention: an id-shaped token
    /// must name a KB entity, anything else is a plain literal.
    pub fn parse(reader: impl BufRead, source_name: &str, kb: &KnowledgeBase) -> Result<SpeakerStore, SpeakerError> {
        let mut store = SpeakerStore::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SpeakerRecord = serde_json::from_str(&line).map_err(|e| SpeakerError::Malformed {
                source_name: source_name.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let mut attributes = BTreeMap::new();
            for (name, raw) in rec.attributes {
                let value = if EntityId::looks_like_reference(&raw) {
                    let id = EntityId::new(raw.as_str()).ok().filter(|id| kb.contains(id)).ok_or_else(|| {
                        SpeakerError::UnknownEntity { speaker: rec.speaker_id.clone(), attribute: name.clone(), entity: raw.clone() }
                    })?;
                    Value::Entity(id)
                } else {
                    Value::literal(raw, Datatype::Plain)
                };
                attributes.insert(name, value);
            }
            let profile = SpeakerProfile { speaker_id: rec.speaker_id.clone(), name: rec.name, attributes, language: rec.language };
            if store.profiles.insert(rec.speaker_id.clone(), profile).is_some() {
                return Err(SpeakerError::Duplicate(rec.speaker_id));
            }
        }
        Ok(store)
    }

    pub fn get(&self, id: &str) -> Option<&SpeakerProfile> {
        self.profiles.get(id)
    }

    pub fn insert(&mut self, profile: SpeakerProfile) {
        self.profiles.insert(profile.speaker_id.clone(), profile);
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SalienceRole {
    Topic,
    Answer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SalienceEntry {
    pub entity: EntityId,
    pub gender: Gender,
    pub number: Number,
    pub last_turn: usize,
    pub role: SalienceRole,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Reward {
    Correct,
    Incorrect,
}

impl std::str::FromStr for Reward {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" | "CORRECT" | "correct" => Ok(Reward::Correct),
            "-" | "INCORRECT" | "incorrect" => Ok(Reward::Incorrect),
            other => Err(format!("reward must be CORRECT or INCORRECT, found {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub user_text: String,
    pub resolved_frame: QuestionFrame,
    pub answer: Answer,
    pub reward: Option<Reward>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub salience: Vec<SalienceEntry>,
    pub last_frame: Option<QuestionFrame>,
    pub speaker: Option<SpeakerProfile>,
}

/// Why a question could not be grounded; each becomes a clarification.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum ResolutionError {
    #[error("unresolved reference {0:?}")]
    UnresolvedReference(String),
    #[error("elliptical question with no previous question")]
    UnresolvedEllipsis,
    #[error("cannot resolve {0:?} without a matching speaker attribute")]
    UnresolvedSpeaker(String),
}

impl ResolutionError {
    /// The phrase the clarification should quote.
    pub fn surface(&self) -> Option<&str> {
        match self {
            ResolutionError::UnresolvedReference(s) | ResolutionError::UnresolvedSpeaker(s) => Some(s),
            ResolutionError::UnresolvedEllipsis => None,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("turn {0} does not exist")]
    NotFound(usize),
    #[error("turn {0} already has a reward")]
    AlreadySet(usize),
}

impl DialogueState {
    pub fn new(session_id: impl Into<String>, speaker: Option<SpeakerProfile>) -> Self {
        DialogueState { session_id: session_id.into(), speaker, ..Default::default() }
    }

    pub fn record_reward(&mut self, turn: usize, reward: Reward) -> Result<&Turn, RewardError> {
        let t = self.turns.get_mut(turn).ok_or(RewardError::NotFound(turn))?;
        if t.reward.is_some() {
            return Err(RewardError::AlreadySet(turn));
        }
        t.reward = Some(reward);
        Ok(t)
    }

    /// Move `entity` to the front of its recency band. Within one turn a
    /// TOPIC entry is never demoted to ANSWER.
    pub fn touch(&mut self, entity: &EntityId, role: SalienceRole, turn: usize, kb: &KnowledgeBase) {
        let role = match self.salience.iter().find(|e| e.entity == *entity) {
            Some(old) if old.last_turn == turn && old.role == SalienceRole::Topic => SalienceRole::Topic,
            _ => role,
        };
        self.salience.retain(|e| e.entity != *entity);
        let (gender, number) = kb.entity(entity).map_or((Gender::Unknown, Number::Unknown), |e| (e.gender, e.number));
        let number = if number == Number::Unknown { Number::Singular } else { number };
        self.salience.push(SalienceEntry { entity: entity.clone(), gender, number, last_turn: turn, role });
        // Stable: insertion order decides among equal (turn, role).
        let mut ordered: Vec<(usize, SalienceEntry)> = std::mem::take(&mut self.salience).into_iter().enumerate().collect();
        ordered.sort_by(|(ia, a), (ib, b)| b.last_turn.cmp(&a.last_turn).then(a.role.cmp(&b.role)).then(ia.cmp(ib)));
        self.salience = ordered.into_iter().map(|(_, e)| e).take(MAX_SALIENCE).collect();
    }
}

fn nearest_trigger(frame: &QuestionFrame, lexicon: &Lexicon, near: usize) -> Option<(usize, String)> {
    frame
        .raw_tokens
        .iter()
        .enumerate()
        .filter(|(i, _)| !frame.in_entity_mention(*i) && !frame.absorbed.contains(i))
        .filter_map(|(i, t)| lexicon.deixis_attribute(&t.lemma).map(|a| (i, a.to_owned())))
        .min_by_key(|(i, _)| i.abs_diff(near))
}

/// Replace first-person mentions with the speaker attribute picked by a
/// deictic trigger word ("born" -> birth_country), or failing that, the
/// entity-valued attribute whose type matches a type word in the question.
pub fn resolve_deixis(
    mut frame: QuestionFrame,
    state: &DialogueState,
    kb: &KnowledgeBase,
    lexicon: &Lexicon,
) -> Result<QuestionFrame, ResolutionError> {
    let selves: Vec<usize> = frame
        .mentions
        .iter()
        .enumerate()
        .filter(|(_, m)| m.kind == MentionKind::SelfRef && m.person() == Some(1))
        .map(|(i, _)| i)
        .collect();
    let types: Vec<EntityId> = frame.mentions.iter().filter_map(|m| m.type_id.clone()).collect();
    for mi in selves {
        let surface = frame.mentions[mi].surface.clone();
        let trigger = nearest_trigger(&frame, lexicon, frame.mentions[mi].start);
        let possessive = frame.mentions[mi].agreement.is_some_and(|a| a.possessive);
        if trigger.is_none() && !(possessive && !types.is_empty()) {
            // "tell me ...": nothing about the speaker is being asked.
            continue;
        }
        let speaker = state.speaker.as_ref().ok_or_else(|| ResolutionError::UnresolvedSpeaker(surface.clone()))?;
        let picked = match &trigger {
            Some((_, attribute)) => speaker.attributes.get(attribute).and_then(Value::as_entity).cloned(),
            None => {
                speaker
                    .attributes
                    .values()
                    .filter_map(Value::as_entity)
                    .find(|id| kb.entity(id).is_some_and(|e| types.iter().any(|t| e.types.contains(t))))
                    .cloned()
            }
        };
        let entity = picked.ok_or_else(|| ResolutionError::UnresolvedSpeaker(surface.clone()))?;
        frame.mentions[mi].bind(&entity, kb);
        if let Some((ti, _)) = trigger {
            frame.absorbed.push(ti);
        }
    }
    frame.refresh_flags();
    Ok(frame)
}

/// Bind third-person pronouns and possessives to the most salient entity
/// whose gender and number agree.
pub fn resolve_coreference(mut frame: QuestionFrame, state: &DialogueState, kb: &KnowledgeBase) -> Result<QuestionFrame, ResolutionError> {
    for mi in 0..frame.mentions.len() {
        let m = &frame.mentions[mi];
        if !matches!(m.kind, MentionKind::Pronoun | MentionKind::Possessive) {
            continue;
        }
        let agreement = m.agreement.expect("pronoun mentions carry agreement");
        let found = state.salience.iter().find(|e| {
            agreement.agrees_with_head || (agreement.gender.compatible(e.gender) && agreement.number.compatible(e.number))
        });
        match found {
            Some(e) => {
                let entity = e.entity.clone();
                frame.mentions[mi].bind(&entity, kb);
            }
            None => {
                frame.mentions[mi].unresolved = true;
                return Err(ResolutionError::UnresolvedReference(frame.mentions[mi].surface.clone()));
            }
        }
    }
    Ok(frame)
}

/// Replace `frame.raw_tokens[range]` with `tokens`, dropping mentions that
/// overlapped the range and shifting later ones.
fn splice(frame: &mut QuestionFrame, range: std::ops::Range<usize>, tokens: Vec<Token>) {
    let delta = tokens.len() as isize - range.len() as isize;
    let shift = |i: usize| if i >= range.end { (i as isize + delta) as usize } else { i };
    frame.raw_tokens.splice(range.clone(), tokens);
    frame.mentions.retain(|m| m.end <= range.start || m.start >= range.end);
    for m in &mut frame.mentions {
        m.start = shift(m.start);
        m.end = shift(m.end);
    }
    frame.absorbed = frame.absorbed.iter().filter(|&&i| !range.contains(&i)).map(|&i| shift(i)).collect();
}

/// Merge an elliptical fragment ("and his mother's?") into the previous
/// question: fragment head nouns replace the previous predicate word, and
/// fragment names replace the previous names in order.
pub fn resolve_ellipsis(frame: QuestionFrame, state: &DialogueState, lexicon: &Lexicon) -> Result<QuestionFrame, ResolutionError> {
    if !frame.is_elliptical {
        return Ok(frame);
    }
    let last = state.last_frame.as_ref().ok_or(ResolutionError::UnresolvedEllipsis)?;
    let mut merged = last.clone();

    let heads: Vec<usize> = frame
        .content_lemmas(lexicon)
        .filter(|(_, t)| t.pos == Pos::Noun || lexicon.synonyms(&t.lemma).is_some())
        .map(|(i, _)| i)
        .collect();

    // Name replacements first, right to left so earlier indices stay valid.
    let new_names: Vec<_> = frame.name_mentions().cloned().collect();
    let old_names: Vec<usize> = merged.mentions.iter().enumerate().filter(|(_, m)| m.is_name()).map(|(i, _)| i).collect();
    let mut pairs: Vec<(usize, crate::nlu::Mention)> = old_names.into_iter().zip(new_names).collect();
    pairs.sort_by_key(|(oi, _)| std::cmp::Reverse(merged.mentions[*oi].start));
    for (oi, new) in pairs {
        let old = merged.mentions[oi].clone();
        let tokens = frame.raw_tokens[new.start..new.end].to_vec();
        let len = tokens.len();
        splice(&mut merged, old.start..old.end, tokens);
        let mut m = new;
        m.start = old.start;
        m.end = old.start + len;
        let pos = merged.mentions.partition_point(|x| x.start < m.start);
        merged.mentions.insert(pos, m);
    }

    if let (Some(&first), Some(&last_head)) = (heads.first(), heads.last()) {
        let predicate_token = merged.predicate_lemma.as_ref().and_then(|p| {
            merged
                .raw_tokens
                .iter()
                .enumerate()
                .position(|(i, t)| !merged.in_entity_mention(i) && t.lemma == *p)
        });
        let replacement: Vec<Token> = (first..=last_head)
            .filter(|i| !frame.in_entity_mention(*i))
            .map(|i| frame.raw_tokens[i].clone())
            .collect();
        match predicate_token {
            Some(pi) => splice(&mut merged, pi..pi + 1, replacement),
            None => {
                let end = merged.raw_tokens.len() - usize::from(merged.raw_tokens.last().is_some_and(|t| t.pos == Pos::Punct));
                splice(&mut merged, end..end, replacement);
            }
        }
    }

    let absorbed = merged.absorbed.clone();
    let mut rebuilt = parse_question(merged.raw_tokens, merged.mentions, lexicon);
    rebuilt.wh_type = last.wh_type;
    rebuilt.is_elliptical = false;
    rebuilt.absorbed = absorbed;
    rebuilt.refresh_flags();
    Ok(rebuilt)
}

/// Entities named by a resolved frame, in order of appearance.
pub fn topic_entities(frame: &QuestionFrame) -> Vec<EntityId> {
    let mut out: Vec<EntityId> = Vec::new();
    for m in frame.name_mentions() {
        if let Some(id) = m.top_candidate() {
            if !out.contains(id) {
                out.push(id.clone());
            }
        }
    }
    out
}

/// Whether the frame has anything a backend could work with.
pub fn has_content(frame: &QuestionFrame, lexicon: &Lexicon) -> bool {
    frame.name_mentions().next().is_some() || frame.raw_tokens.iter().any(|t| is_content(t, lexicon))
}
