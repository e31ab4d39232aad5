//! Answer arbitration: features, a discrete AdaBoost model over decision
//! stumps, confidence scoring and the choice between backends.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KnowledgeBase, Triple, Value};
use crate::nlu::{Pos, QuestionFrame};
use crate::qa::{AnswerKind, Evidence, QAResult, Source};

pub const FEATURE_DIM: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "n_values",
    "n_provenance",
    "coverage",
    "relevance",
    "rule_priority",
    "n_question_tokens",
    "n_mentions",
    "answer_pagerank_max",
    "source_flag",
    "failed_flag",
];

const FAILED_FLAG: usize = 9;
const EPS_CLAMP: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ArbiterError {
    #[error("need at least two samples")]
    TooFewSamples,
    #[error("training samples contain a single class")]
    SingleClass,
    #[error("no stump separates the samples")]
    NoSplit,
    #[error("model has no stumps")]
    EmptyModel,
    #[error("label must be +1 or -1, found {0}")]
    BadLabel(i8),
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed-order feature vector describing one backend result.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn extract(result: &QAResult, frame: &QuestionFrame, kb: &KnowledgeBase, evidence: Evidence) -> FeatureVector {
        let max_pr = kb.max_pagerank();
        let answer_pr = result
            .values
            .iter()
            .filter_map(Value::as_entity)
            .map(|id| kb.pagerank(id))
            .fold(0.0, f64::max);
        let n_tokens = frame.raw_tokens.iter().filter(|t| t.pos != Pos::Punct).count();
        let v = [
            result.values.len() as f64,
            result.provenance.len() as f64,
            evidence.coverage,
            evidence.relevance,
            match result.source {
                Source::Search | Source::None => -1.0,
                Source::Reasoning => evidence.rule_priority.unwrap_or(-1) as f64,
            },
            n_tokens as f64,
            frame.mentions.len() as f64,
            if max_pr > 0.0 { answer_pr / max_pr } else { 0.0 },
            if result.source == Source::Search { 1.0 } else { 0.0 },
            if result.failed { 1.0 } else { 0.0 },
        ];
        FeatureVector(v.map(|x| if x.is_finite() { x } else { 0.0 }))
    }

    pub fn failed(&self) -> bool {
        self.0[FAILED_FLAG] >= 0.5
    }
}

/// Weak learner: `polarity` if `x[feature] > threshold`, else `-polarity`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
    pub alpha: f64,
}

impl Stump {
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let side = if x.0[self.feature] > self.threshold { 1.0 } else { -1.0 };
        side * f64::from(self.polarity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub stumps: Vec<Stump>,
    pub rounds: usize,
}

/// `alpha = ½ ln((1 - ε) / ε)` with ε clamped away from 0 and 1.
pub fn stump_weight(weighted_error: f64) -> f64 {
    let e = weighted_error.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
    0.5 * ((1.0 - e) / e).ln()
}

/// Discrete AdaBoost with exhaustive stump search over sorted-value
/// midpoints. Stops early when the best stump is no better than chance or
/// separates the data perfectly.
pub fn train_adaboost(samples: &[(FeatureVector, i8)], rounds: usize) -> Result<AdaBoostModel, ArbiterError> {
    if samples.len() < 2 {
        return Err(ArbiterError::TooFewSamples);
    }
    if let Some(&(_, bad)) = samples.iter().find(|(_, y)| *y != 1 && *y != -1) {
        return Err(ArbiterError::BadLabel(bad));
    }
    let labels: BTreeSet<i8> = samples.iter().map(|(_, y)| *y).collect();
    if labels.len() < 2 {
        return Err(ArbiterError::SingleClass);
    }

    let n = samples.len();
    let thresholds: Vec<Vec<f64>> = (0..FEATURE_DIM)
        .map(|f| {
            let mut vals: Vec<f64> = samples.iter().map(|(x, _)| x.0[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            vals.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
        })
        .collect();

    let mut weights = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    for _ in 0..rounds {
        let mut best: Option<(f64, Stump)> = None;
        for (feature, ts) in thresholds.iter().enumerate() {
            for &threshold in ts {
                // Weighted error for polarity +1; polarity -1 has 1 - err.
                let err: f64 = samples
                    .iter()
                    .zip(&weights)
                    .filter(|((x, y), _)| (x.0[feature] > threshold) != (*y == 1))
                    .map(|(_, w)| w)
                    .sum();
                for (polarity, e) in [(1i8, err), (-1i8, 1.0 - err)] {
                    if best.as_ref().is_none_or(|(b, _)| e < *b - 1e-15) {
                        best = Some((e, Stump { feature, threshold, polarity, alpha: 0.0 }));
                    }
                }
            }
        }
        let Some((error, mut stump)) = best else {
            if stumps.is_empty() {
                return Err(ArbiterError::NoSplit);
            }
            break;
        };
        if error >= 0.5 {
            break;
        }
        stump.alpha = stump_weight(error);
        for ((x, y), w) in samples.iter().zip(weights.iter_mut()) {
            *w *= (-stump.alpha * f64::from(*y) * stump.predict(x)).exp();
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        stumps.push(stump);
        if error <= 0.0 {
            break;
        }
    }
    if stumps.is_empty() {
        return Err(ArbiterError::NoSplit);
    }
    Ok(AdaBoostModel { stumps, rounds })
}

impl AdaBoostModel {
    /// Normalized margin `Σ α h(x) / Σ α`, in [-1, 1].
    pub fn margin(&self, x: &FeatureVector) -> Result<f64, ArbiterError> {
        let total: f64 = self.stumps.iter().map(|s| s.alpha).sum();
        if self.stumps.is_empty() {
            return Err(ArbiterError::EmptyModel);
        }
        if total <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.stumps.iter().map(|s| s.alpha * s.predict(x)).sum::<f64>() / total)
    }

    /// Confidence in [0, 1]; failed results score 0.
    pub fn score(&self, x: &FeatureVector) -> Result<f64, ArbiterError> {
        let m = self.margin(x)?;
        if x.failed() {
            return Ok(0.0);
        }
        Ok(((m + 1.0) / 2.0).clamp(0.0, 1.0))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("ADABOOST v1 rounds={} dim={FEATURE_DIM}\n", self.rounds);
        for s in &self.stumps {
            let _ = writeln!(out, "{} {:?} {} {:?}", s.feature, s.threshold, s.polarity, s.alpha);
        }
        out
    }

    pub fn parse(text: &str) -> Result<AdaBoostModel, ArbiterError> {
        let fmt_err = |line: usize, message: String| ArbiterError::Format { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or_else(|| fmt_err(1, "missing header".into()))?;
        let mut head = header.split_whitespace();
        if head.next() != Some("ADABOOST") || head.next() != Some("v1") {
            return Err(fmt_err(hl + 1, "expected `ADABOOST v1` header".into()));
        }
        let mut rounds = None;
        let mut dim = FEATURE_DIM;
        for kv in head {
            match kv.split_once('=') {
                Some(("rounds", v)) => rounds = v.parse().ok(),
                Some(("dim", v)) => dim = v.parse().map_err(|_| fmt_err(hl + 1, format!("bad dim {v:?}")))?,
                _ => return Err(fmt_err(hl + 1, format!("unexpected header field {kv:?}"))),
            }
        }
        let rounds = rounds.ok_or_else(|| fmt_err(hl + 1, "missing rounds=N".into()))?;
        if dim != FEATURE_DIM {
            return Err(fmt_err(hl + 1, format!("feature dimension {dim} does not match {FEATURE_DIM}")));
        }
        let mut stumps = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(fmt_err(i + 1, "expected `feature threshold polarity alpha`".into()));
            }
            let bad = |what: &str| fmt_err(i + 1, format!("bad {what}"));
            let feature: usize = f[0].parse().map_err(|_| bad("feature index"))?;
            if feature >= FEATURE_DIM {
                return Err(fmt_err(i + 1, format!("feature index {feature} out of range")));
            }
            let polarity: i8 = f[2].parse().map_err(|_| bad("polarity"))?;
            if polarity != 1 && polarity != -1 {
                return Err(bad("polarity"));
            }
            let alpha: f64 = f[3].parse().map_err(|_| bad("alpha"))?;
            if alpha < 0.0 || !alpha.is_finite() {
                return Err(bad("alpha"));
            }
            stumps.push(Stump { feature, threshold: f[1].parse().map_err(|_| bad("threshold"))?, polarity, alpha });
        }
        if stumps.len() > rounds {
            return Err(fmt_err(1, format!("{} stumps exceed rounds={rounds}", stumps.len())));
        }
        Ok(AdaBoostModel { stumps, rounds })
    }

    pub fn load(path: &Path) -> Result<AdaBoostModel, ArbiterError> {
        AdaBoostModel::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArbiterError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Training samples file: one `label f0 f1 ... f9` line per sample.
pub fn parse_samples(text: &str) -> Result<Vec<(FeatureVector, i8)>, ArbiterError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != FEATURE_DIM + 1 {
            return Err(ArbiterError::Format { line: i + 1, message: format!("expected {} fields", FEATURE_DIM + 1) });
        }
        let bad = || ArbiterError::Format { line: i + 1, message: "unparsable number".into() };
        let label: i8 = f[0].parse().map_err(|_| bad())?;
        if label != 1 && label != -1 {
            return Err(ArbiterError::BadLabel(label));
        }
        let mut x = [0.0; FEATURE_DIM];
        for (slot, raw) in x.iter_mut().zip(&f[1..]) {
            *slot = raw.parse().map_err(|_| bad())?;
        }
        out.push((FeatureVector(x), label));
    }
    Ok(out)
}

pub fn format_samples(samples: &[(FeatureVector, i8)]) -> String {
    let mut out = format!("# label {}\n", FEATURE_NAMES.join(" "));
    for (x, y) in samples {
        let _ = write!(out, "{y}");
        for v in x.0 {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    out
}

/// Final answer after arbitration and generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub values: BTreeSet<Value>,
    pub kind: AnswerKind,
    pub short_text: String,
    pub long_text: Option<String>,
    pub confidence: f64,
    pub source: Source,
    pub provenance: BTreeSet<Triple>,
    pub query_debug: String,
    pub clarification: Option<String>,
}

impl Answer {
    pub fn clarification(text: String) -> Answer {
        Answer {
            values: BTreeSet::new(),
            kind: AnswerKind::EntitySet,
            short_text: text.clone(),
            long_text: None,
            confidence: 0.0,
            source: Source::None,
            provenance: BTreeSet::new(),
            query_debug: String::new(),
            clarification: Some(text),
        }
    }

    pub fn is_clarification(&self) -> bool {
        self.source == Source::None
    }
}

/// Outcome of comparing two backend results.
#[derive(Clone, Debug, PartialEq)]
pub enum Arbitration {
    Winner { result: Box<QAResult>, confidence: f64, other_confidence: f64 },
    BothFailed,
}

/// Pick the higher-confidence result; ties go to the reasoning backend.
pub fn arbitrate(r1: &QAResult, r2: &QAResult, model: &AdaBoostModel) -> Result<Arbitration, ArbiterError> {
    let c1 = if r1.failed { 0.0 } else { model.score(&r1.features)? };
    let c2 = if r2.failed { 0.0 } else { model.score(&r2.features)? };
    if r1.failed && r2.failed {
        return Ok(Arbitration::BothFailed);
    }
    let first_wins = match (r1.failed, r2.failed) {
        (false, true) => true,
        (true, false) => false,
        _ if c1 > c2 => true,
        _ if c2 > c1 => false,
        _ => !(r2.source == Source::Reasoning && r1.source != Source::Reasoning),
    };
    Ok(if first_wins {
        Arbitration::Winner { result: Box::new(r1.clone()), confidence: c1, other_confidence: c2 }
    } else {
        Arbitration::Winner { result: Box::new(r2.clone()), confidence: c2, other_confidence: c1 }
    })
}
