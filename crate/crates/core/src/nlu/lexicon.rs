//! Language pack: lemma/POS table, wh-words, pronoun agreement features,
//! predicate synonyms, type words, stopwords and deictic triggers.
//!
//! One TAB-separated entry per line, introduced by its section keyword:
//!
//! ```text
//! LEMMA   capitals  capital  NOUN
//! WH      how many  HOWMANY
//! PRON    his  3  m  sg  POSS
//! PRON    sa   3  f  sg  POSS  head
//! SYN     father  P22
//! TYPE    country  Q6256
//! STOP    the  a  an
//! DEIXIS  born  birth_country
//! ```
//!
//! A trailing `head` on a possessive marks forms that agree with the
//! possessed noun rather than the possessor; their features are not used to
//! filter antecedents.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use thiserror::Error;

use super::{Pos, WhType};
use crate::agreement::{Gender, Number};
use crate::kb::{EntityId, KnowledgeBase};
use crate::text::normalize;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{source_name}:{line}: {message}")]
    Malformed { source_name: String, line: usize, message: String },
    #[error("lexicon has no {0} entries")]
    EmptySection(&'static str),
    #[error("synonym targets missing from the knowledge base: {}", .0.join(", "))]
    UnknownPredicates(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PronounEntry {
    pub person: u8,
    pub gender: Gender,
    pub number: Number,
    pub possessive: bool,
    /// Features describe the possessed noun, not the antecedent.
    pub agrees_with_head: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    pub language: String,
    lemmas: HashMap<String, (String, Pos)>,
    wh: Vec<(Vec<String>, WhType)>,
    pronouns: HashMap<String, PronounEntry>,
    synonyms: BTreeMap<String, BTreeSet<EntityId>>,
    type_words: BTreeMap<String, EntityId>,
    stopwords: HashSet<String>,
    deixis: BTreeMap<String, String>,
}

impl Lexicon {
    pub fn load(path: &Path) -> Result<Lexicon, LexiconError> {
        let text = std::fs::read_to_string(path)?;
        Lexicon::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Lexicon, LexiconError> {
        let mut lex = Lexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| LexiconError::Malformed {
                source_name: source_name.to_owned(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').map(str::trim).filter(|f| !f.is_empty()).collect();
            let (keyword, args) = fields.split_first().ok_or_else(|| err("empty line".into()))?;
            let need = |n: usize| {
                if args.len() < n {
                    Err(err(format!("{keyword} needs at least {n} fields")))
                } else {
                    Ok(())
                }
            };
            match *keyword {
                "LANG" => {
                    need(1)?;
                    lex.language = args[0].to_owned();
                }
                "LEMMA" => {
                    need(3)?;
                    let pos: Pos = args[2].parse().map_err(err)?;
                    lex.lemmas.insert(normalize(args[0]), (normalize(args[1]), pos));
                }
                "WH" => {
                    need(2)?;
                    let words: Vec<String> = args[0].split(' ').map(normalize).collect();
                    let wh: WhType = args[1].parse().map_err(err)?;
                    lex.wh.push((words, wh));
                }
                "PRON" => {
                    need(5)?;
                    let person: u8 = match args[1] {
                        "1" => 1,
                        "2" => 2,
                        "3" => 3,
                        other => return Err(err(format!("person must be 1, 2 or 3, found {other:?}"))),
                    };
                    let possessive = match args[4] {
                        "POSS" => true,
                        "PERS" => false,
                        other => return Err(err(format!("expected POSS or PERS, found {other:?}"))),
                    };
                    let agrees_with_head = match args.get(5) {
                        None | Some(&"owner") => false,
                        Some(&"head") => true,
                        Some(other) => return Err(err(format!("expected head or owner, found {other:?}"))),
                    };
                    lex.pronouns.insert(
                        normalize(args[0]),
                        PronounEntry {
                            person,
                            gender: args[2].parse().map_err(err)?,
                            number: args[3].parse().map_err(err)?,
                            possessive,
                            agrees_with_head,
                        },
                    );
                }
                "SYN" => {
                    need(2)?;
                    let set = lex.synonyms.entry(normalize(args[0])).or_default();
                    for target in &args[1..] {
                        set.insert(EntityId::new(*target).map_err(|e| err(e.to_string()))?);
                    }
                }
                "TYPE" => {
                    need(2)?;
                    let id = EntityId::new(args[1]).map_err(|e| err(e.to_string()))?;
                    lex.type_words.insert(normalize(args[0]), id);
                }
                "STOP" => {
                    need(1)?;
                    lex.stopwords.extend(args.iter().map(|w| normalize(w)));
                }
                "DEIXIS" => {
                    need(2)?;
                    lex.deixis.insert(normalize(args[0]), args[1].to_owned());
                }
                other => return Err(err(format!("unknown section keyword {other:?}"))),
            }
        }
        lex.wh.sort_by_key(|a| std::cmp::Reverse(a.0.len()));
        for (name, empty) in [
            ("LEMMA", lex.lemmas.is_empty()),
            ("WH", lex.wh.is_empty()),
            ("PRON", lex.pronouns.is_empty()),
            ("SYN", lex.synonyms.is_empty()),
            ("TYPE", lex.type_words.is_empty()),
            ("STOP", lex.stopwords.is_empty()),
        ] {
            if empty {
                return Err(LexiconError::EmptySection(name));
            }
        }
        Ok(lex)
    }

    /// Check that every synonym target is a predicate present in the KB.
    pub fn validate(&self, kb: &KnowledgeBase) -> Result<(), LexiconError> {
        let missing: BTreeSet<String> = self
            .synonyms
            .values()
            .flatten()
            .filter(|p| !kb.contains(p))
            .map(|p| p.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(LexiconError::UnknownPredicates(missing.into_iter().collect()))
        }
    }

    pub fn lemma(&self, norm: &str) -> Option<&(String, Pos)> {
        self.lemmas.get(norm)
    }

    /// Longest wh-expression starting at `words[0]`, with its length in tokens.
    pub fn wh_at(&self, words: &[&str]) -> Option<(WhType, usize)> {
        self.wh
            .iter()
            .find(|(seq, _)| seq.len() <= words.len() && seq.iter().zip(words).all(|(a, b)| a == b))
            .map(|(seq, wh)| (*wh, seq.len()))
    }

    pub fn pronoun(&self, norm: &str) -> Option<&PronounEntry> {
        self.pronouns.get(norm)
    }

    pub fn synonyms(&self, lemma: &str) -> Option<&BTreeSet<EntityId>> {
        self.synonyms.get(lemma)
    }

    pub fn type_word(&self, lemma: &str) -> Option<&EntityId> {
        self.type_words.get(lemma)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn deixis_attribute(&self, lemma: &str) -> Option<&str> {
        self.deixis.get(lemma).map(String::as_str)
    }

    /// Lemmas whose synonym set contains `predicate`.
    pub fn words_for_predicate<'a>(&'a self, predicate: &'a EntityId) -> impl Iterator<Item = &'a str> + 'a {
        self.synonyms.iter().filter(move |(_, ps)| ps.contains(predicate)).map(|(w, _)| w.as_str())
    }

    /// Type-word lemmas mapped to `type_id`.
    pub fn words_for_type<'a>(&'a self, type_id: &'a EntityId) -> impl Iterator<Item = &'a str> + 'a {
        self.type_words.iter().filter(move |(_, t)| *t == type_id).map(|(w, _)| w.as_str())
    }
}
