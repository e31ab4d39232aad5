//! Lightweight understanding: tokenization, table-driven tagging, entity
//! mention detection and question-frame extraction.

mod lexicon;
mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agreement::{Gender, Number};
use crate::kb::{EntityId, KnowledgeBase};
use crate::text::{is_title_case, normalize};

pub use lexicon::{Lexicon, LexiconError, PronounEntry};
pub use tokenize::tokenize;

/// Longest label n-gram tried during mention detection.
pub const MAX_MENTION_TOKENS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Wh,
    Verb,
    Noun,
    Propn,
    Pron,
    Poss,
    Det,
    Adp,
    Conj,
    Punct,
    Num,
    Other,
}

impl FromStr for Pos {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "WH" => Pos::Wh,
            "VERB" => Pos::Verb,
            "NOUN" => Pos::Noun,
            "PROPN" => Pos::Propn,
            "PRON" => Pos::Pron,
            "POSS" => Pos::Poss,
            "DET" => Pos::Det,
            "ADP" => Pos::Adp,
            "CONJ" => Pos::Conj,
            "PUNCT" => Pos::Punct,
            "NUM" => Pos::Num,
            "OTHER" => Pos::Other,
            other => return Err(format!("unknown part of speech {other:?}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum WhType {
    Who,
    What,
    Which,
    Where,
    When,
    HowMany,
    None,
}

impl FromStr for WhType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "WHO" => WhType::Who,
            "WHAT" => WhType::What,
            "WHICH" => WhType::Which,
            "WHERE" => WhType::Where,
            "WHEN" => WhType::When,
            "HOWMANY" => WhType::HowMany,
            "NONE" => WhType::None,
            other => return Err(format!("unknown wh type {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub norm: String,
    pub lemma: String,
    pub pos: Pos,
    /// Byte offsets into the source utterance.
    pub span: (usize, usize),
}

impl Token {
    fn raw(surface: &str, span: (usize, usize), pos: Pos) -> Token {
        let norm = normalize(surface);
        Token { surface: surface.to_owned(), lemma: norm.clone(), norm, pos, span }
    }
}

/// Fill lemma and part of speech from the lexicon. Unknown title-case words
/// become proper nouns, other unknown words `OTHER` with lemma = norm.
pub fn tag(mut tokens: Vec<Token>, lexicon: &Lexicon) -> Vec<Token> {
    let norms: Vec<String> = tokens.iter().map(|t| t.norm.clone()).collect();
    let mut wh_until = 0;
    for (i, token) in tokens.iter_mut().enumerate() {
        let words: Vec<&str> = norms[i..].iter().map(String::as_str).collect();
        if i < wh_until {
            token.pos = Pos::Wh;
            continue;
        }
        if let Some((_, len)) = lexicon.wh_at(&words) {
            token.pos = Pos::Wh;
            wh_until = i + len;
        } else if let Some(p) = lexicon.pronoun(&token.norm) {
            token.pos = if p.possessive { Pos::Poss } else { Pos::Pron };
        } else if let Some((lemma, pos)) = lexicon.lemma(&token.norm) {
            token.lemma = lemma.clone();
            token.pos = *pos;
        } else if token.surface.chars().all(|c| !c.is_alphanumeric()) {
            token.pos = Pos::Punct;
        } else if token.surface.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
            token.pos = Pos::Num;
        } else if is_title_case(&token.surface) {
            token.pos = Pos::Propn;
        } else {
            token.pos = Pos::Other;
        }
    }
    tokens
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MentionKind {
    Name,
    Pronoun,
    Possessive,
    TypeWord,
    #[serde(rename = "SELF")]
    SelfRef,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    pub person: u8,
    pub gender: Gender,
    pub number: Number,
    pub possessive: bool,
    pub agrees_with_head: bool,
}

impl From<&PronounEntry> for Agreement {
    fn from(p: &PronounEntry) -> Self {
        Agreement {
            person: p.person,
            gender: p.gender,
            number: p.number,
            possessive: p.possessive,
            agrees_with_head: p.agrees_with_head,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    /// Token range `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub surface: String,
    /// Ranked by descending pagerank, ties by id.
    pub candidates: Vec<(EntityId, f64)>,
    pub kind: MentionKind,
    pub agreement: Option<Agreement>,
    pub type_id: Option<EntityId>,
    /// Original surface when this NAME was produced by resolving a pronoun
    /// or a deictic reference.
    pub resolved_from: Option<String>,
    pub unresolved: bool,
}

impl Mention {
    pub fn top_candidate(&self) -> Option<&EntityId> {
        self.candidates.first().map(|(id, _)| id)
    }

    pub fn is_name(&self) -> bool {
        self.kind == MentionKind::Name
    }

    pub fn person(&self) -> Option<u8> {
        self.agreement.map(|a| a.person)
    }

    /// Turn this mention into a NAME bound to `entity`.
    pub fn bind(&mut self, entity: &EntityId, kb: &KnowledgeBase) {
        self.resolved_from.get_or_insert_with(|| self.surface.clone());
        self.candidates = vec![(entity.clone(), kb.pagerank(entity))];
        self.kind = MentionKind::Name;
        self.unresolved = false;
    }
}

pub fn rank_candidates(ids: impl IntoIterator<Item = EntityId>, kb: &KnowledgeBase) -> Vec<(EntityId, f64)> {
    let mut ranked: Vec<(EntityId, f64)> = ids.into_iter().map(|id| (kb.pagerank(&id), id)).map(|(p, id)| (id, p)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

fn name_token(t: &Token, lexicon: &Lexicon) -> bool {
    match t.pos {
        Pos::Propn | Pos::Noun => true,
        Pos::Other | Pos::Num => !lexicon.is_stopword(&t.norm),
        _ => false,
    }
}

fn open_token(t: &Token) -> bool {
    matches!(t.pos, Pos::Propn | Pos::Other | Pos::Num)
}

/// Reconstruct the surface of tokens `[start, end)` with original spacing.
fn span_surface(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 && t.span.0 > tokens[i - 1].span.1 {
            out.push(' ');
        }
        out.push_str(&t.surface);
    }
    out
}

/// Find entity mentions: pronouns and deictic forms from the lexicon,
/// greedy longest-match names against KB labels, and type words.
pub fn detect_mentions(tokens: &[Token], kb: &KnowledgeBase, lexicon: &Lexicon) -> Vec<Mention> {
    let lang = lexicon.language.as_str();
    let predicates = kb.predicates();
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if matches!(t.pos, Pos::Pron | Pos::Poss) {
            if let Some(p) = lexicon.pronoun(&t.norm) {
                let kind = if p.person < 3 {
                    MentionKind::SelfRef
                } else if p.possessive {
                    MentionKind::Possessive
                } else {
                    MentionKind::Pronoun
                };
                mentions.push(Mention {
                    start: i,
                    end: i + 1,
                    surface: t.surface.clone(),
                    candidates: Vec::new(),
                    kind,
                    agreement: Some(p.into()),
                    type_id: None,
                    resolved_from: None,
                    unresolved: false,
                });
                i += 1;
                continue;
            }
        }
        if name_token(t, lexicon) {
            let run = tokens[i..].iter().take(MAX_MENTION_TOKENS).take_while(|t| name_token(t, lexicon)).count();
            let found = (1..=run).rev().find_map(|n| {
                let window = &tokens[i..i + n];
                if !window.iter().any(open_token) {
                    return None;
                }
                let surface = span_surface(window);
                let mut ids = kb.lookup_label(&surface, lang);
                if ids.is_empty() && lang != kb.default_lang() {
                    ids = kb.lookup_label(&surface, kb.default_lang());
                }
                // Properties are asked about, never asked after.
                ids.retain(|id| !predicates.contains(id));
                (!ids.is_empty()).then_some((n, surface, ids))
            });
            if let Some((n, surface, ids)) = found {
                mentions.push(Mention {
                    start: i,
                    end: i + n,
                    surface,
                    candidates: rank_candidates(ids, kb),
                    kind: MentionKind::Name,
                    agreement: None,
                    type_id: None,
                    resolved_from: None,
                    unresolved: false,
                });
                i += n;
                continue;
            }
        }
        if let Some(type_id) = lexicon.type_word(&t.lemma) {
            mentions.push(Mention {
                start: i,
                end: i + 1,
                surface: t.surface.clone(),
                candidates: Vec::new(),
                kind: MentionKind::TypeWord,
                agreement: None,
                type_id: Some(type_id.clone()),
                resolved_from: None,
                unresolved: false,
            });
        }
        i += 1;
    }
    mentions
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PossessiveLink {
    /// Index into `QuestionFrame::mentions`.
    pub mention: usize,
    pub head: String,
    pub head_token: usize,
}

/// Structured reading of one utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionFrame {
    pub wh_type: WhType,
    pub predicate_lemma: Option<String>,
    pub mentions: Vec<Mention>,
    pub possessive_links: Vec<PossessiveLink>,
    pub is_elliptical: bool,
    pub has_deixis: bool,
    pub raw_tokens: Vec<Token>,
    /// Tokens consumed by resolution (e.g. the verb that selected a speaker
    /// attribute); they no longer count as question content.
    #[serde(default)]
    pub absorbed: Vec<usize>,
}

impl QuestionFrame {
    /// Mention covering token `i`, if any.
    pub fn mention_at(&self, i: usize) -> Option<usize> {
        self.mentions.iter().position(|m| m.start <= i && i < m.end)
    }

    /// Whether token `i` is part of a NAME, pronoun or deictic mention.
    pub fn in_entity_mention(&self, i: usize) -> bool {
        self.mention_at(i).is_some_and(|m| self.mentions[m].kind != MentionKind::TypeWord)
    }

    /// Lemmas of content tokens outside entity mentions.
    pub fn content_lemmas<'a>(&'a self, lexicon: &'a Lexicon) -> impl Iterator<Item = (usize, &'a Token)> + 'a {
        self.raw_tokens
            .iter()
            .enumerate()
            .filter(move |(i, t)| !self.in_entity_mention(*i) && !self.absorbed.contains(i) && is_content(t, lexicon))
    }

    pub fn name_mentions(&self) -> impl Iterator<Item = &Mention> {
        self.mentions.iter().filter(|m| m.is_name())
    }

    /// Readable rendering of the (possibly rewritten) token sequence, with
    /// resolved mentions shown by their bound entity.
    pub fn render(&self, kb: &KnowledgeBase, lang: &str) -> String {
        let mut parts = Vec::new();
        let mut i = 0;
        while i < self.raw_tokens.len() {
            match self.mention_at(i).map(|m| &self.mentions[m]) {
                Some(m) if m.resolved_from.is_some() && m.start == i => {
                    let label = m.top_candidate().map_or_else(|| m.surface.clone(), |id| kb.label(id, lang));
                    parts.push(format!("[{label}]"));
                    i = m.end;
                }
                _ => {
                    parts.push(self.raw_tokens[i].surface.clone());
                    i += 1;
                }
            }
        }
        parts.join(" ")
    }

    /// Recompute derived flags after a rewrite.
    pub fn refresh_flags(&mut self) {
        self.has_deixis = self.mentions.iter().any(|m| m.kind == MentionKind::SelfRef);
    }
}

pub fn is_content(t: &Token, lexicon: &Lexicon) -> bool {
    !matches!(t.pos, Pos::Punct | Pos::Wh | Pos::Pron | Pos::Poss | Pos::Det | Pos::Adp | Pos::Conj)
        && !lexicon.is_stopword(&t.lemma)
        && !lexicon.is_stopword(&t.norm)
}

/// Build the question frame from tagged tokens and their mentions.
pub fn parse_question(tokens: Vec<Token>, mentions: Vec<Mention>, lexicon: &Lexicon) -> QuestionFrame {
    let norms: Vec<&str> = tokens.iter().map(|t| t.norm.as_str()).collect();
    let wh_type = tokens
        .iter()
        .position(|t| t.pos == Pos::Wh)
        .and_then(|i| lexicon.wh_at(&norms[i..]))
        .map_or(WhType::None, |(wh, _)| wh);

    let mut frame = QuestionFrame {
        wh_type,
        predicate_lemma: None,
        mentions,
        possessive_links: Vec::new(),
        is_elliptical: false,
        has_deixis: false,
        raw_tokens: tokens,
        absorbed: Vec::new(),
    };

    let candidates: Vec<&Token> = frame
        .content_lemmas(lexicon)
        .map(|(_, t)| t)
        .filter(|t| matches!(t.pos, Pos::Noun | Pos::Verb))
        .collect();
    frame.predicate_lemma = candidates
        .iter()
        .find(|t| lexicon.synonyms(&t.lemma).is_some())
        .or_else(|| candidates.first())
        .map(|t| t.lemma.clone());

    for (mi, m) in frame.mentions.iter().enumerate() {
        if !m.agreement.is_some_and(|a| a.possessive) {
            continue;
        }
        for j in m.end..frame.raw_tokens.len() {
            let t = &frame.raw_tokens[j];
            if matches!(t.pos, Pos::Punct | Pos::Conj | Pos::Wh) || frame.in_entity_mention(j) {
                break;
            }
            if t.pos == Pos::Noun {
                frame.possessive_links.push(PossessiveLink { mention: mi, head: t.lemma.clone(), head_token: j });
                break;
            }
        }
    }

    let starts_with_cue = frame.raw_tokens.iter().find(|t| t.pos != Pos::Punct).is_some_and(|t| t.pos == Pos::Conj);
    frame.is_elliptical = starts_with_cue && (frame.wh_type == WhType::None || frame.predicate_lemma.is_none());
    frame.refresh_flags();
    frame
}

/// Tokenize, tag, detect mentions and parse in one step.
pub fn understand(text: &str, kb: &KnowledgeBase, lexicon: &Lexicon) -> QuestionFrame {
    let tokens = tag(tokenize(text), lexicon);
    let mentions = detect_mentions(&tokens, kb, lexicon);
    parse_question(tokens, mentions, lexicon)
}

impl fmt::Display for WhType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}
