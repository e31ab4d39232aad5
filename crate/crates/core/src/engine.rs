//! The per-turn pipeline over loaded assets: understanding, resolution,
//! both backends, arbitration, generation, state update and corpus logging.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbiter::{arbitrate, AdaBoostModel, Answer, Arbitration, ArbiterError, FeatureVector};
use crate::context::{
    resolve_coreference, resolve_deixis, resolve_ellipsis, topic_entities, DialogueState, ResolutionError, Reward, RewardError,
    SalienceRole, SpeakerError, SpeakerStore, Turn,
};
use crate::docs::{terms, DocIndex, DocsError, Excerpt};
use crate::gen::{fill, long_answer, short_answer, GenError, Slots, TemplateKind, Templates};
use crate::kb::{self, EntityId, KbError, KnowledgeBase, PageRankConfig, Value};
use crate::nlu::{understand, Lexicon, LexiconError, QuestionFrame};
use crate::qa::{AnswerKind, QAResult, Source};
use crate::reasoning::{answer_reasoning, Grammar, GrammarError};
use crate::search::{answer_search, SearchConfig};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("knowledge base: {0}")]
    Kb(#[from] KbError),
    #[error("lexicon: {0}")]
    Lexicon(#[from] LexiconError),
    #[error("grammar: {0}")]
    Grammar(#[from] GrammarError),
    #[error("templates: {0}")]
    Templates(#[from] GenError),
    #[error("paragraphs: {0}")]
    Docs(#[from] DocsError),
    #[error("speakers: {0}")]
    Speakers(#[from] SpeakerError),
    #[error("confidence model: {0}")]
    Model(#[from] ArbiterError),
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("corpus log: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Asset locations. `data_dir` supplies defaults for any path left unset.
#[derive(Clone, Debug, Default)]
pub struct AssetPaths {
    pub data_dir: PathBuf,
    pub lang: String,
    pub kb: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub grammar: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub paragraphs: Option<PathBuf>,
    pub speakers: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

impl AssetPaths {
    pub fn new(data_dir: impl Into<PathBuf>, lang: &str) -> Self {
        AssetPaths { data_dir: data_dir.into(), lang: lang.to_owned(), ..Default::default() }
    }

    fn or(&self, explicit: &Option<PathBuf>, default: String) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.data_dir.join(default))
    }

    pub fn kb_path(&self) -> PathBuf {
        self.or(&self.kb, "kb/triples.tsv".into())
    }
    pub fn entities_path(&self) -> PathBuf {
        self.or(&self.entities, "kb/entities.jsonl".into())
    }
    pub fn lexicon_path(&self) -> PathBuf {
        self.or(&self.lexicon, format!("lexicon/{}.lex", self.lang))
    }
    pub fn grammar_path(&self) -> PathBuf {
        self.or(&self.grammar, format!("grammar/{}.grammar", self.lang))
    }
    pub fn templates_path(&self) -> PathBuf {
        self.or(&self.templates, format!("templates/{}.tpl", self.lang))
    }
    pub fn paragraphs_path(&self) -> PathBuf {
        self.or(&self.paragraphs, "paragraphs.jsonl".into())
    }
    pub fn speakers_path(&self) -> PathBuf {
        self.or(&self.speakers, "speakers.jsonl".into())
    }
    pub fn model_path(&self) -> PathBuf {
        self.or(&self.model, "model/confidence.model".into())
    }
}

/// One line of the dialogue-corpus log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub event: LogEvent,
    pub session_id: String,
    #[serde(default)]
    pub speaker_id: Option<String>,
    pub turn: usize,
    pub user_text: String,
    pub resolved_query_debug_form: String,
    pub answer_values: Vec<String>,
    pub short_text: String,
    pub confidence: f64,
    pub source: Source,
    pub reward: Option<Reward>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogEvent {
    Turn,
    Reward,
}

/// Append-only JSON-lines writer shared by all sessions.
#[derive(Debug)]
pub struct CorpusLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl CorpusLog {
    pub fn open(path: &Path) -> Result<CorpusLog, EngineError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(CorpusLog { path: path.to_owned(), file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &LogRecord) -> Result<(), EngineError> {
        let mut line = serde_json::to_string(record).map_err(|e| EngineError::Log(e.to_string()))?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Vec<LogRecord>, EngineError> {
        let mut out = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| EngineError::Log(format!("line {}: {e}", i + 1)))?);
        }
        Ok(out)
    }
}

/// Everything loaded once and shared read-only by all sessions.
#[derive(Debug)]
pub struct Engine {
    pub kb: KnowledgeBase,
    pub lexicon: Lexicon,
    pub grammar: Grammar,
    pub templates: Templates,
    pub docs: DocIndex,
    pub speakers: SpeakerStore,
    pub model: AdaBoostModel,
    pub search: SearchConfig,
    pub lang: String,
    pub log: Option<CorpusLog>,
}

/// Both backend results for one resolved frame, before arbitration.
#[derive(Clone, Debug)]
pub struct BackendResults {
    pub frame: QuestionFrame,
    pub reasoning: QAResult,
    pub search: QAResult,
}

fn guarded(source: Source, frame: &QuestionFrame, kb: &KnowledgeBase, f: impl FnOnce() -> QAResult) -> QAResult {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| QAResult::failed(source, frame, kb, "backend panicked"))
}

impl Engine {
    /// Load every asset; missing paragraph or speaker files are treated as
    /// empty, everything else is required.
    pub fn load(paths: &AssetPaths) -> Result<Engine, EngineError> {
        let model = AdaBoostModel::load(&paths.model_path())?;
        Engine::load_with_model(paths, model)
    }

    pub fn load_with_model(paths: &AssetPaths, model: AdaBoostModel) -> Result<Engine, EngineError> {
        let mut kb = kb::load_kb(&paths.kb_path(), &paths.entities_path(), &paths.lang)?;
        kb.compute_pagerank(&PageRankConfig::default())?;
        let lexicon = Lexicon::load(&paths.lexicon_path())?;
        lexicon.validate(&kb)?;
        let grammar = Grammar::load(&paths.grammar_path())?;
        grammar.validate(&kb)?;
        let templates = Templates::load(&paths.templates_path())?;
        let docs = match paths.paragraphs_path() {
            p if p.exists() => DocIndex::load(&p, &kb, &lexicon)?,
            _ => DocIndex::build(Vec::new(), &lexicon),
        };
        let speakers = match paths.speakers_path() {
            p if p.exists() => SpeakerStore::load(&p, &kb)?,
            _ => SpeakerStore::default(),
        };
        Ok(Engine {
            kb,
            lexicon,
            grammar,
            templates,
            docs,
            speakers,
            model,
            search: SearchConfig::default(),
            lang: paths.lang.clone(),
            log: None,
        })
    }

    pub fn with_log(mut self, log: CorpusLog) -> Self {
        self.log = Some(log);
        self
    }

    /// Resolve a question against the dialogue state without answering it.
    pub fn resolve(&self, state: &DialogueState, utterance: &str) -> Result<QuestionFrame, ResolutionError> {
        let frame = understand(utterance, &self.kb, &self.lexicon);
        let frame = resolve_deixis(frame, state, &self.kb, &self.lexicon)?;
        let frame = resolve_coreference(frame, state, &self.kb)?;
        resolve_ellipsis(frame, state, &self.lexicon)
    }

    pub fn run_backends(&self, frame: QuestionFrame) -> BackendResults {
        let reasoning = guarded(Source::Reasoning, &frame, &self.kb, || {
            answer_reasoning(&frame, &self.grammar, &self.kb, &self.lexicon)
        });
        let search = guarded(Source::Search, &frame, &self.kb, || answer_search(&frame, &self.kb, &self.lexicon, &self.search));
        BackendResults { frame, reasoning, search }
    }

    pub fn clarification(&self, subject: &str) -> Answer {
        let slots = Slots { subject: Some(subject.to_owned()), ..Default::default() };
        let text = self
            .templates
            .get(TemplateKind::Clarification, &self.lang)
            .and_then(|t| fill(t, &slots))
            .unwrap_or_else(|| format!("Could you rephrase \"{subject}\"?"));
        Answer::clarification(text)
    }

    /// Turn a winning backend result into the final answer.
    pub fn generate(&self, result: &QAResult, confidence: f64) -> Answer {
        let lang = self.lang.as_str();
        let subject = result.subject.as_ref().map(|s| self.kb.label(s, lang));
        let description = result
            .subject
            .as_ref()
            .and_then(|s| self.kb.entity(s))
            .and_then(|e| e.description(lang, self.kb.default_lang()))
            .map(str::to_owned);
        let short = short_answer(&result.values, &self.kb, lang).unwrap_or_default();
        let slots = Slots {
            subject: subject.clone(),
            values: Some(short.clone()),
            count: (result.kind == AnswerKind::Count).then(|| short.clone()),
            description,
            predicate: result.predicate_phrase.clone(),
        };
        let long = long_answer(result.kind.into(), &slots, &result.values, &self.kb, &self.templates, lang).ok();
        let short_text = match result.kind {
            AnswerKind::Definition => long.clone().unwrap_or(short),
            _ => short,
        };
        Answer {
            values: result.values.clone(),
            kind: result.kind,
            short_text,
            long_text: long,
            confidence,
            source: result.source,
            provenance: result.provenance.clone(),
            query_debug: result.query_debug.clone(),
            clarification: None,
        }
    }

    /// Arbitrate between backend results and generate the answer.
    pub fn decide(&self, results: &BackendResults) -> Answer {
        match arbitrate(&results.reasoning, &results.search, &self.model) {
            Ok(Arbitration::Winner { result, confidence, .. }) => self.generate(&result, confidence),
            Ok(Arbitration::BothFailed) | Err(_) => self.clarification(&results.frame.render(&self.kb, &self.lang)),
        }
    }

    /// Answer one utterance and update the session.
    pub fn ask(&self, state: &mut DialogueState, utterance: &str) -> Result<Answer, EngineError> {
        self.ask_inner(state, utterance, true)
    }

    fn ask_inner(&self, state: &mut DialogueState, utterance: &str, log: bool) -> Result<Answer, EngineError> {
        let text = utterance.trim();
        if text.is_empty() {
            return Err(EngineError::EmptyUtterance);
        }
        let index = state.turns.len();
        let (frame, answer) = match self.resolve(state, text) {
            Err(e) => {
                let surface = e.surface().map_or_else(|| text.to_owned(), str::to_owned);
                (understand(text, &self.kb, &self.lexicon), self.clarification(&surface))
            }
            Ok(frame) => {
                let results = self.run_backends(frame.clone());
                let answer = self.decide(&results);
                for id in topic_entities(&frame) {
                    state.touch(&id, SalienceRole::Topic, index, &self.kb);
                }
                for v in &answer.values {
                    if let Some(id) = v.as_entity() {
                        state.touch(id, SalienceRole::Answer, index, &self.kb);
                    }
                }
                state.last_frame = Some(frame.clone());
                (frame, answer)
            }
        };
        state.turns.push(Turn { index, user_text: text.to_owned(), resolved_frame: frame, answer: answer.clone(), reward: None });
        if log {
            self.log_turn(state, index, LogEvent::Turn)?;
        }
        Ok(answer)
    }

    pub fn record_reward(&self, state: &mut DialogueState, turn: usize, reward: Reward) -> Result<(), EngineError> {
        state.record_reward(turn, reward)?;
        self.log_turn(state, turn, LogEvent::Reward)
    }

    pub fn log_record(&self, state: &DialogueState, turn: usize, event: LogEvent) -> Option<LogRecord> {
        let t = state.turns.get(turn)?;
        Some(LogRecord {
            event,
            session_id: state.session_id.clone(),
            speaker_id: state.speaker.as_ref().map(|s| s.speaker_id.clone()),
            turn,
            user_text: t.user_text.clone(),
            resolved_query_debug_form: t.answer.query_debug.clone(),
            answer_values: t.answer.values.iter().map(|v| self.kb.render(v, &self.lang)).collect(),
            short_text: t.answer.short_text.clone(),
            confidence: t.answer.confidence,
            source: t.answer.source,
            reward: t.reward,
        })
    }

    fn log_turn(&self, state: &DialogueState, turn: usize, event: LogEvent) -> Result<(), EngineError> {
        match (&self.log, self.log_record(state, turn, event)) {
            (Some(log), Some(rec)) => log.append(&rec),
            _ => Ok(()),
        }
    }

    pub fn new_session(&self, session_id: impl Into<String>, speaker_id: Option<&str>) -> Option<DialogueState> {
        let speaker = match speaker_id {
            Some(id) => Some(self.speakers.get(id)?.clone()),
            None => None,
        };
        Some(DialogueState::new(session_id, speaker))
    }

    /// Re-run every logged turn in a fresh session per logged session and
    /// return the regenerated turn records, in log order.
    pub fn replay(&self, records: &[LogRecord]) -> Result<Vec<LogRecord>, EngineError> {
        let mut sessions: std::collections::BTreeMap<&str, DialogueState> = Default::default();
        let mut out = Vec::new();
        for rec in records.iter().filter(|r| r.event == LogEvent::Turn) {
            let state = match sessions.entry(rec.session_id.as_str()) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    let state = self
                        .new_session(rec.session_id.clone(), rec.speaker_id.as_deref())
                        .ok_or_else(|| EngineError::Log(format!("unknown speaker {:?}", rec.speaker_id)))?;
                    e.insert(state)
                }
            };
            if state.turns.len() != rec.turn {
                return Err(EngineError::Log(format!("session {} turn {} is out of order", rec.session_id, rec.turn)));
            }
            self.ask_inner(state, &rec.user_text, false)?;
            out.push(self.log_record(state, rec.turn, LogEvent::Turn).expect("turn just added"));
        }
        Ok(out)
    }

    /// Documentary excerpts for the last turn of a session.
    pub fn excerpts(&self, state: &DialogueState, k: usize) -> Vec<Excerpt> {
        let Some(turn) = state.turns.last() else {
            return Vec::new();
        };
        let question: BTreeSet<EntityId> = topic_entities(&turn.resolved_frame).into_iter().collect();
        let answer: BTreeSet<EntityId> = turn.answer.values.iter().filter_map(Value::as_entity).cloned().collect();
        let q_terms = terms(&turn.user_text, &self.lexicon);
        self.docs.retrieve(&question, &answer, &q_terms, k.max(1)).unwrap_or_default()
    }

    /// Label each backend result of a question +1 when its rendered values
    /// equal the gold set and -1 otherwise.
    pub fn labelled_samples(&self, context: &[String], question: &str, gold: &[String]) -> Vec<(FeatureVector, i8)> {
        let mut state = DialogueState::new("train", None);
        for c in context {
            let _ = self.ask_inner(&mut state, c, false);
        }
        let Ok(frame) = self.resolve(&state, question) else {
            return Vec::new();
        };
        let results = self.run_backends(frame);
        let gold: BTreeSet<String> = gold.iter().map(|g| crate::text::normalize(g)).collect();
        [results.reasoning, results.search]
            .into_iter()
            .map(|r| {
                let got: BTreeSet<String> = r.values.iter().map(|v| crate::text::normalize(&self.kb.render(v, &self.lang))).collect();
                let label = if !r.failed && got == gold { 1 } else { -1 };
                (r.features, label)
            })
            .collect()
    }
}
