//! Python bindings: load an engine, hold dialogue sessions, query the
//! knowledge base directly and score answers.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use convkg_core::eval::{coref_link_prf, load_benchmark, prf as set_prf, run_benchmark};
use convkg_core::kb::load_kb;
use convkg_core::query::{evaluate, QueryResult};
use convkg_core::{
    Answer, AssetPaths, DialogueState, Engine as CoreEngine, EntityId, GraphQuery, KnowledgeBase as CoreKb, Reward, Value,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn entity_id(id: &str) -> PyResult<EntityId> {
    EntityId::new(id).map_err(value_err)
}

fn sheet_dict<'py>(py: Python<'py>, kb: &CoreKb, id: &str, lang: &str) -> PyResult<Bound<'py, PyDict>> {
    let sheet = kb.entity_sheet(&entity_id(id)?, lang).map_err(|e| PyKeyError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("id", sheet.id.as_str())?;
    d.set_item("label", sheet.label)?;
    d.set_item("description", sheet.description)?;
    d.set_item("types", sheet.types.into_iter().map(|(_, l)| l).collect::<Vec<_>>())?;
    d.set_item("image_ref", sheet.image_ref)?;
    Ok(d)
}

fn run_query(kb: &CoreKb, text: &str, lang: &str) -> PyResult<Vec<String>> {
    let query = GraphQuery::parse(text).map_err(value_err)?;
    Ok(match evaluate(&query, kb).map_err(value_err)? {
        QueryResult::List(values) => values.iter().map(|v| kb.render(v, lang)).collect(),
        QueryResult::Count(n) => vec![n.to_string()],
    })
}

/// A loaded triple store, without the dialogue machinery.
#[pyclass(module = "convkg", frozen)]
struct KnowledgeBase {
    kb: Arc<CoreKb>,
    lang: String,
}

#[pymethods]
impl KnowledgeBase {
    #[new]
    #[pyo3(signature = (triples, entities, lang = "en"))]
    fn new(triples: PathBuf, entities: PathBuf, lang: &str) -> PyResult<Self> {
        let mut kb = load_kb(&triples, &entities, lang).map_err(value_err)?;
        kb.compute_pagerank(&Default::default()).map_err(value_err)?;
        Ok(KnowledgeBase { kb: Arc::new(kb), lang: lang.to_owned() })
    }

    fn __len__(&self) -> usize {
        self.kb.triples().len()
    }

    fn stats(&self) -> (usize, usize) {
        let s = self.kb.stats();
        (s.entities, s.triples)
    }

    fn label(&self, id: &str) -> PyResult<String> {
        Ok(self.kb.label(&entity_id(id)?, &self.lang))
    }

    fn pagerank(&self, id: &str) -> PyResult<f64> {
        Ok(self.kb.pagerank(&entity_id(id)?))
    }

    /// Triples matching the bound positions, as `(s, p, o)` debug strings.
    #[pyo3(signature = (s = None, p = None, o = None))]
    fn match_pattern(&self, s: Option<&str>, p: Option<&str>, o: Option<&str>) -> PyResult<Vec<(String, String, String)>> {
        let s = s.map(entity_id).transpose()?;
        let p = p.map(entity_id).transpose()?;
        let o = match o {
            None => None,
            Some(t) => Some(match Value::parse_quoted_literal(t) {
                Some(v) => v,
                None => Value::entity(&entity_id(t)?),
            }),
        };
        Ok(self
            .kb
            .match_pattern(s.as_ref(), p.as_ref(), o.as_ref())
            .into_iter()
            .map(|t| (t.subject.to_string(), t.predicate.to_string(), t.object.to_debug()))
            .collect())
    }

    /// Evaluate a query in its text form (`SELECT ?x` then one pattern per line).
    fn query(&self, text: &str) -> PyResult<Vec<String>> {
        run_query(&self.kb, text, &self.lang)
    }

    fn entity_sheet<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyDict>> {
        sheet_dict(py, &self.kb, id, &self.lang)
    }
}

/// All assets loaded from a data directory.
#[pyclass(module = "convkg", frozen)]
struct Engine {
    engine: Arc<CoreEngine>,
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (data_dir, lang = "en"))]
    fn new(data_dir: PathBuf, lang: &str) -> PyResult<Self> {
        let engine = CoreEngine::load(&AssetPaths::new(data_dir, lang)).map_err(value_err)?;
        Ok(Engine { engine: Arc::new(engine) })
    }

    #[pyo3(signature = (speaker_id = None))]
    fn session(&self, speaker_id: Option<&str>) -> PyResult<Session> {
        let state = self
            .engine
            .new_session("python", speaker_id)
            .ok_or_else(|| PyKeyError::new_err(format!("unknown speaker {:?}", speaker_id.unwrap_or_default())))?;
        Ok(Session { engine: self.engine.clone(), state: Mutex::new(state) })
    }

    fn query(&self, text: &str) -> PyResult<Vec<String>> {
        run_query(&self.engine.kb, text, &self.engine.lang)
    }

    fn entity_sheet<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyDict>> {
        sheet_dict(py, &self.engine.kb, id, &self.engine.lang)
    }

    /// Run a benchmark file; returns `(precision, recall, f1)` macro scores.
    fn bench(&self, path: PathBuf) -> PyResult<(f64, f64, f64)> {
        let items = load_benchmark(&path).map_err(value_err)?;
        let s = run_benchmark(&items, &self.engine).macro_scores;
        Ok((s.precision, s.recall, s.f1))
    }
}

/// One dialogue. Turns are answered in the context of earlier ones.
#[pyclass(module = "convkg", frozen)]
struct Session {
    engine: Arc<CoreEngine>,
    state: Mutex<DialogueState>,
}

fn answer_dict<'py>(py: Python<'py>, engine: &CoreEngine, turn: usize, a: &Answer) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("turn", turn)?;
    d.set_item("values", a.values.iter().map(|v| engine.kb.render(v, &engine.lang)).collect::<Vec<_>>())?;
    d.set_item("short_text", &a.short_text)?;
    d.set_item("long_text", &a.long_text)?;
    d.set_item("confidence", a.confidence)?;
    d.set_item("source", a.source.to_string())?;
    d.set_item("provenance", a.provenance.iter().map(|t| t.to_debug()).collect::<Vec<_>>())?;
    d.set_item("query_debug", &a.query_debug)?;
    d.set_item("clarification", &a.clarification)?;
    Ok(d)
}

#[pymethods]
impl Session {
    fn ask<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
        let mut state = self.state.lock().map_err(|_| PyRuntimeError::new_err("session state poisoned"))?;
        let answer = self.engine.ask(&mut state, text).map_err(value_err)?;
        answer_dict(py, &self.engine, state.turns.len() - 1, &answer)
    }

    /// `reward` is "+"/"-" or "CORRECT"/"INCORRECT".
    fn reward(&self, turn: usize, reward: &str) -> PyResult<()> {
        let reward: Reward = reward.parse().map_err(PyValueError::new_err)?;
        let mut state = self.state.lock().map_err(|_| PyRuntimeError::new_err("session state poisoned"))?;
        self.engine.record_reward(&mut state, turn, reward).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.state.lock().map(|s| s.turns.len()).unwrap_or(0)
    }
}

/// Set precision, recall and F1 of a system answer against gold.
#[pyfunction]
fn prf(system: Vec<String>, gold: Vec<String>) -> (f64, f64, f64) {
    let s = set_prf(&system, &gold);
    (s.precision, s.recall, s.f1)
}

/// Link-based (MUC) coreference scores over mention chains.
#[pyfunction]
fn coref_prf(system: Vec<Vec<String>>, gold: Vec<Vec<String>>) -> PyResult<(f64, f64, f64)> {
    let s = coref_link_prf(&system, &gold).map_err(value_err)?;
    Ok((s.precision, s.recall, s.f1))
}

#[pymodule]
fn convkg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<KnowledgeBase>()?;
    m.add_class::<Engine>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(prf, m)?)?;
    m.add_function(wrap_pyfunction!(coref_prf, m)?)?;
    Ok(())
}
