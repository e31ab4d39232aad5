//! Evaluation: QALD-style set precision/recall/F1, MUC link-based
//! coreference scores, and the benchmark harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::DialogueState;
use crate::engine::Engine;
use crate::text::normalize;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{source_name}:{line}: {message}")]
    Malformed { source_name: String, line: usize, message: String },
    #[error("benchmark file has no items")]
    Empty,
    #[error("mention {0} appears in more than one chain")]
    OverlappingChains(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_pr(precision: f64, recall: f64) -> Prf {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Prf { precision, recall, f1 }
    }
}

/// Set P/R/F1 over normalized strings. Both empty scores 1; exactly one
/// empty scores 0.
pub fn prf<S: AsRef<str>>(sys: &[S], gold: &[S]) -> Prf {
    let sys: BTreeSet<String> = sys.iter().map(|s| normalize(s.as_ref())).collect();
    let gold: BTreeSet<String> = gold.iter().map(|s| normalize(s.as_ref())).collect();
    match (sys.is_empty(), gold.is_empty()) {
        (true, true) => return Prf { precision: 1.0, recall: 1.0, f1: 1.0 },
        (true, false) | (false, true) => return Prf { precision: 0.0, recall: 0.0, f1: 0.0 },
        _ => {}
    }
    let hits = sys.intersection(&gold).count() as f64;
    Prf::from_pr(hits / sys.len() as f64, hits / gold.len() as f64)
}

fn chain_owner<M: Ord + Clone + std::fmt::Debug>(chains: &[Vec<M>]) -> Result<BTreeMap<M, usize>, EvalError> {
    let mut owner = BTreeMap::new();
    for (ci, chain) in chains.iter().enumerate() {
        for m in chain {
            if owner.insert(m.clone(), ci).is_some_and(|prev| prev != ci) || chain.iter().filter(|x| *x == m).count() > 1 {
                return Err(EvalError::OverlappingChains(format!("{m:?}")));
            }
        }
    }
    Ok(owner)
}

/// MUC: Σ(|k| − |partitions of k by the other side|) / Σ(|k| − 1).
fn muc_side<M: Ord>(key: &[Vec<M>], other: &BTreeMap<M, usize>) -> f64 {
    let mut num = 0usize;
    let mut den = 0usize;
    for chain in key {
        if chain.is_empty() {
            continue;
        }
        let mut parts = BTreeSet::new();
        let mut singletons = 0;
        for m in chain {
            match other.get(m) {
                Some(c) => {
                    parts.insert(*c);
                }
                None => singletons += 1,
            }
        }
        num += chain.len() - (parts.len() + singletons);
        den += chain.len() - 1;
    }
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn coref_link_prf<M: Ord + Clone + std::fmt::Debug>(sys: &[Vec<M>], gold: &[Vec<M>]) -> Result<Prf, EvalError> {
    let sys_owner = chain_owner(sys)?;
    let gold_owner = chain_owner(gold)?;
    Ok(Prf::from_pr(muc_side(sys, &gold_owner), muc_side(gold, &sys_owner)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub gold: Vec<String>,
    #[serde(default)]
    pub context: Vec<String>,
    #[serde(default)]
    pub unanswerable: bool,
}

pub fn parse_benchmark(reader: impl BufRead, source_name: &str) -> Result<Vec<BenchmarkItem>, EvalError> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Malformed { source_name: source_name.to_owned(), line: i + 1, message };
        let item: BenchmarkItem = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if item.gold.is_empty() && !item.unanswerable {
            return Err(err(format!("item {} has no gold answers and is not marked unanswerable", item.id)));
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(items)
}

pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkItem>, EvalError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    parse_benchmark(file, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemResult {
    pub id: String,
    pub system: Vec<String>,
    pub gold: Vec<String>,
    pub scores: Prf,
    pub clarification: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub items: Vec<ItemResult>,
    pub macro_scores: Prf,
    pub failed: usize,
    pub clarifications: usize,
    pub runtime_ms: u128,
}

/// Run each item in a fresh session, replaying its context turns first.
pub fn run_benchmark(items: &[BenchmarkItem], engine: &Engine) -> EvalReport {
    let started = Instant::now();
    let mut results = Vec::new();
    for item in items {
        let mut state = DialogueState::new(format!("bench-{}", item.id), None);
        let mut error = None;
        for c in &item.context {
            if let Err(e) = engine.ask(&mut state, c) {
                error = Some(e.to_string());
            }
        }
        let answer = engine.ask(&mut state, &item.question);
        let (system, clarification) = match answer {
            Ok(a) if a.is_clarification() => (Vec::new(), true),
            Ok(a) => (a.values.iter().map(|v| engine.kb.render(v, &engine.lang)).collect(), false),
            Err(e) => {
                error = Some(e.to_string());
                (Vec::new(), false)
            }
        };
        let scores = prf(&system, &item.gold);
        results.push(ItemResult { id: item.id.clone(), system, gold: item.gold.clone(), scores, clarification, error });
    }
    let n = results.len().max(1) as f64;
    let mean = |f: fn(&Prf) -> f64| results.iter().map(|r| f(&r.scores)).sum::<f64>() / n;
    let macro_scores = Prf { precision: mean(|s| s.precision), recall: mean(|s| s.recall), f1: mean(|s| s.f1) };
    EvalReport {
        failed: results.iter().filter(|r| r.error.is_some()).count(),
        clarifications: results.iter().filter(|r| r.clarification).count(),
        items: results,
        macro_scores,
        runtime_ms: started.elapsed().as_millis(),
    }
}

impl EvalReport {
    /// Text report; everything except the final `runtime_ms` line is
    /// deterministic for fixed inputs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# per-question set precision/recall/F1; an empty answer to an unanswerable question scores 1\n");
        out.push_str("id\tP\tR\tF1\tsystem\tgold\n");
        for r in &self.items {
            let _ = writeln!(
                out,
                "{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}{}",
                r.id,
                r.scores.precision,
                r.scores.recall,
                r.scores.f1,
                r.system.join(" | "),
                r.gold.join(" | "),
                r.error.as_ref().map_or(String::new(), |e| format!("\terror: {e}")),
            );
        }
        let _ = writeln!(out, "macro_precision\t{:.6}", self.macro_scores.precision);
        let _ = writeln!(out, "macro_recall\t{:.6}", self.macro_scores.recall);
        let _ = writeln!(out, "macro_f1\t{:.6}", self.macro_scores.f1);
        let _ = writeln!(out, "items\t{}", self.items.len());
        let _ = writeln!(out, "failed\t{}", self.failed);
        let _ = writeln!(out, "clarifications\t{}", self.clarifications);
        let _ = writeln!(out, "runtime_ms\t{}", self.runtime_ms);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prf_conventions() {
        let e: [&str; 0] = [];
        assert_eq!(prf(&e, &e).f1, 1.0);
        assert_eq!(prf(&e, &["x"]).f1, 0.0);
        assert_eq!(prf(&["x"], &e).f1, 0.0);
        let s = prf(&["a", "b"], &["b", "c"]);
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert_eq!(prf(&["Édith"], &["edith"]).f1, 1.0);
    }

    #[test]
    fn muc_examples() {
        let gold = vec![vec!["a", "b", "c"]];
        let s = coref_link_prf(&[vec!["a", "b"], vec!["c"]], &gold).unwrap();
        assert_eq!(s.recall, 0.5);
        assert_eq!(s.precision, 1.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        let singles = coref_link_prf(&[vec!["a"], vec!["b"], vec!["c"]], &gold).unwrap();
        assert_eq!((singles.precision, singles.recall, singles.f1), (0.0, 0.0, 0.0));
        assert!(coref_link_prf(&[vec!["a", "b"], vec!["b"]], &gold).is_err());
    }
}
