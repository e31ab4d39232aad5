//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::oracles::{brute_force, exp_loss, h, pagerank_linear_solve, random_dataset, random_kb, random_query};
use common::{answers, engine, squash};
use convkg_core::arbiter::{arbitrate, stump_weight, train_adaboost, Arbitration, FEATURE_DIM};
use convkg_core::engine::{BackendResults, CorpusLog, LogEvent};
use convkg_core::eval::{coref_link_prf, load_benchmark, prf, run_benchmark, Prf};
use convkg_core::kb::pagerank::power_iteration;
use convkg_core::kb::{Datatype, PageRankConfig};
use convkg_core::query::{evaluate, Aggregate, QueryResult};
use convkg_core::{repl, AnswerKind, AssetPaths, DialogueState, Engine, EntityId, FeatureVector, GraphQuery, QAResult, Source, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn labels(engine: &Engine, values: &BTreeSet<Value>) -> BTreeSet<String> {
    values.iter().map(|v| engine.kb.render(v, &engine.lang)).collect()
}

fn kb_query(q: &str) -> BTreeSet<String> {
    let kb = &engine().kb;
    match evaluate(&GraphQuery::parse(q).unwrap(), kb).unwrap() {
        QueryResult::List(v) => v.iter().map(|v| kb.render(v, "en")).collect(),
        QueryResult::Count(n) => [n.to_string()].into(),
    }
}

const JACKSON_DIALOGUE: &str = "Who is Michael Jackson?\nWhat is his father's name?\nand his mother's?\nand his brothers' and sisters'?\n";

fn jackson_dialogue() -> Outcome {
    let started = Instant::now();
    let mut state = DialogueState::new("acceptance", None);
    let mut out = Vec::new();
    repl::run(engine(), &mut state, JACKSON_DIALOGUE.as_bytes(), &mut out, false).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let got = answers(&String::from_utf8(out).unwrap());
    let want: Vec<String> = [
        "Michael Jackson is an American author, composer, singer and dancer",
        "Joseph Jackson",
        "Katherine Jackson",
        "Tito Jackson, Rebbie Jackson, Randy Jackson, Jackie Jackson, Marlon Jackson, La Toya Jackson, Jermaine Jackson, Janet Jackson",
    ]
    .iter()
    .map(|s| squash(s))
    .collect();
    ensure(got == want, || format!("answers {got:?}"))?;
    ensure(elapsed.as_secs_f64() < 1.0, || format!("took {elapsed:?}"))?;
    Ok(format!("4 answers in {} ms", elapsed.as_millis()))
}

fn iberian() -> Outcome {
    let e = engine();
    let mut state = DialogueState::new("acceptance", None);
    let a = e.ask(&mut state, "What are the capitals of the countries of the Iberian Peninsula?").map_err(|e| e.to_string())?;
    let got = labels(e, &a.values);
    let want: BTreeSet<String> = ["Andorra la Vella", "Gibraltar", "Lisbon", "Madrid"].map(String::from).into();
    ensure(got == want, || format!("values {got:?}"))?;
    Ok(got.into_iter().collect::<Vec<_>>().join(", "))
}

fn deixis() -> Outcome {
    let e = engine();
    let q = "Who is the president of the country where I was born?";
    let mut alice = e.new_session("a", Some("alice")).ok_or("no alice profile")?;
    let a = e.ask(&mut alice, q).map_err(|e| e.to_string())?;
    let want = kb_query("SELECT ?p\nQ142 P35 ?p");
    ensure(labels(e, &a.values) == want, || format!("with profile: {:?}", a.short_text))?;
    let mut anon = DialogueState::new("b", None);
    let b = e.ask(&mut anon, q).map_err(|e| e.to_string())?;
    ensure(b.clarification.is_some() && b.source == Source::None && b.values.is_empty(), || format!("without profile: {:?}", b.short_text))?;
    Ok(format!("alice -> {}; no profile -> clarification", a.short_text))
}

fn query_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240);
    for case in 0..1000 {
        let kb = random_kb(&mut rng);
        let q = random_query(&mut rng, &kb);
        ensure(kb.triples().len() <= 100 && q.patterns.len() <= 3, || "generator out of bounds".into())?;
        let want = brute_force(&q, &kb);
        let expected = match q.aggregate {
            Aggregate::List => QueryResult::List(want.iter().cloned().collect()),
            Aggregate::Count => QueryResult::Count(want.len()),
        };
        let got = evaluate(&q, &kb).map_err(|e| e.to_string())?;
        ensure(got == expected, || format!("case {case}: {}", q.to_debug()))?;
    }
    Ok("1000/1000 cases equal brute force".into())
}

fn pagerank_oracle() -> Outcome {
    let cfg = PageRankConfig { tolerance: 1e-12, max_iter: 10_000, ..PageRankConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=10);
        let m = rng.gen_range(0..=3 * n);
        let edges: Vec<(usize, usize)> = (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        let got = power_iteration(n, &edges, &cfg).map_err(|e| e.to_string())?.scores;
        let want = pagerank_linear_solve(n, &edges, cfg.damping);
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        ensure(err < 1e-6, || format!("L-inf {err:e} on {edges:?}"))?;
        let sum: f64 = got.iter().sum();
        ensure((sum - 1.0).abs() < 1e-9, || format!("sum {sum}"))?;
    }
    Ok(format!("500 graphs, worst L-inf {worst:.1e}"))
}

fn adaboost() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut trained = 0;
    while trained < 50 {
        let samples = random_dataset(&mut rng);
        let Ok(model) = train_adaboost(&samples, 25) else { continue };
        trained += 1;
        let losses: Vec<f64> = (0..=model.stumps.len()).map(|r| exp_loss(&model.stumps[..r], &samples)).collect();
        ensure(losses.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), || format!("loss increased: {losses:?}"))?;
    }
    let samples: Vec<(FeatureVector, i8)> = (0..20)
        .map(|i| {
            let mut x = [0.0; FEATURE_DIM];
            x[0] = f64::from(i);
            (FeatureVector(x), if i >= 7 { 1 } else { -1 })
        })
        .collect();
    let model = train_adaboost(&samples, 10).map_err(|e| e.to_string())?;
    let errors = samples.iter().filter(|(x, y)| h(&model.stumps[0], x) != f64::from(*y)).count();
    ensure(model.stumps.len() == 1 && errors == 0, || format!("{} rounds, {errors} errors", model.stumps.len()))?;
    let alpha = stump_weight(0.25);
    ensure((alpha - 0.5 * 3f64.ln()).abs() < 1e-12, || format!("alpha {alpha}"))?;
    Ok("50 monotone datasets, separable in 1 round, alpha(0.25) = ln(3)/2".into())
}

fn metrics() -> Outcome {
    let close = |p: Prf, w: (f64, f64, f64)| (p.precision - w.0).abs() < 1e-12 && (p.recall - w.1).abs() < 1e-12 && (p.f1 - w.2).abs() < 1e-12;
    let none: [&str; 0] = [];
    ensure(close(prf(&["b"], &["b"]), (1.0, 1.0, 1.0)), || "prf {b}/{b}".into())?;
    ensure(close(prf(&["a", "b"], &["b", "c"]), (0.5, 0.5, 0.5)), || "prf {a,b}/{b,c}".into())?;
    ensure(close(prf(&none, &["x"]), (0.0, 0.0, 0.0)), || "prf {}/{x}".into())?;
    let c = |xs: &[&'static str]| xs.to_vec();
    ensure(close(coref_link_prf(&[c(&["a", "b", "c"])], &[c(&["a", "b", "c"])]).map_err(|e| e.to_string())?, (1.0, 1.0, 1.0)), || "coref identical".into())?;
    ensure(
        close(coref_link_prf(&[c(&["a", "b"]), c(&["c"])], &[c(&["a", "b", "c"])]).map_err(|e| e.to_string())?, (1.0, 0.5, 2.0 / 3.0)),
        || "coref split chain".into(),
    )?;
    ensure(
        close(coref_link_prf(&[c(&["a"]), c(&["b"]), c(&["c"])], &[c(&["a", "b", "c"])]).map_err(|e| e.to_string())?, (0.0, 0.0, 0.0)),
        || "coref singletons".into(),
    )?;
    Ok("6 worked examples".into())
}

fn bench_path() -> std::path::PathBuf {
    common::data_dir().join("bench/bench20.jsonl")
}

fn benchmark() -> Outcome {
    let items = load_benchmark(&bench_path()).map_err(|e| e.to_string())?;
    let report = run_benchmark(&items, engine());
    let m = report.macro_scores;
    ensure(m.f1 >= 0.95, || report.to_text())?;
    Ok(format!("{} items, macro P {:.3} R {:.3} F1 {:.3}", items.len(), m.precision, m.recall, m.f1))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("corpus.jsonl");
    let logged = Engine::load(&AssetPaths::new(common::data_dir(), "en"))
        .map_err(|e| e.to_string())?
        .with_log(CorpusLog::open(&path).map_err(|e| e.to_string())?);
    let mut s1 = DialogueState::new("s1", None);
    let mut s2 = logged.new_session("s2", Some("alice")).ok_or("no alice")?;
    for line in JACKSON_DIALOGUE.lines() {
        logged.ask(&mut s1, line).map_err(|e| e.to_string())?;
        logged.ask(&mut s2, line).map_err(|e| e.to_string())?;
    }
    logged.ask(&mut s2, "Who is the president of the country where I was born?").map_err(|e| e.to_string())?;
    let records = CorpusLog::read(&path).map_err(|e| e.to_string())?;
    let turns: Vec<String> = std::fs::read_to_string(&path)
        .map_err(|e| e.to_string())?
        .lines()
        .zip(&records)
        .filter(|(_, r)| r.event == LogEvent::Turn)
        .map(|(l, _)| l.to_owned())
        .collect();
    let replayed: Vec<String> = engine().replay(&records).map_err(|e| e.to_string())?.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    ensure(replayed == turns, || "replayed records differ from the log".into())?;

    let items = load_benchmark(&bench_path()).map_err(|e| e.to_string())?;
    let strip = |t: String| t.lines().filter(|l| !l.starts_with("runtime_ms")).collect::<Vec<_>>().join("\n");
    let a = strip(run_benchmark(&items, engine()).to_text());
    let b = strip(run_benchmark(&items, engine()).to_text());
    ensure(a == b, || "benchmark reports differ".into())?;
    Ok(format!("{} logged turns replayed byte-identically; reports identical", turns.len()))
}

fn arbitration() -> Outcome {
    let e = engine();
    let make = |source: Source, x: FeatureVector, failed: bool| QAResult {
        source,
        kind: AnswerKind::EntitySet,
        values: if failed { BTreeSet::new() } else { [Value::literal(format!("{source:?}"), Datatype::Plain)].into() },
        provenance: BTreeSet::new(),
        query_debug: String::new(),
        features: x,
        failed,
        subject: Some(EntityId::new("Q1").unwrap()),
        predicate_phrase: None,
        error: failed.then(|| "no answer".to_owned()),
    };
    let mut failed_x = [0.0; FEATURE_DIM];
    failed_x[FEATURE_DIM - 1] = 1.0;
    let failed_x = FeatureVector(failed_x);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..200 {
        let x = FeatureVector(std::array::from_fn(|f| if f == FEATURE_DIM - 1 { 0.0 } else { rng.gen_range(0.0..5.0) }));
        let (ok, bad) = if i % 2 == 0 { (Source::Reasoning, Source::Search) } else { (Source::Search, Source::Reasoning) };
        let good = make(ok, x, false);
        let broken = make(bad, failed_x, true);
        for (a, b) in [(&good, &broken), (&broken, &good)] {
            match arbitrate(a, b, &e.model).map_err(|e| e.to_string())? {
                Arbitration::Winner { result, .. } if result.source == ok => {}
                other => return Err(format!("case {i}: {other:?}")),
            }
        }
    }
    let state = DialogueState::new("t", None);
    let frame = e.resolve(&state, "Who is the father of Michael Jackson?").map_err(|e| e.to_string())?;
    let both = BackendResults { frame, reasoning: make(Source::Reasoning, failed_x, true), search: make(Source::Search, failed_x, true) };
    let answer = e.decide(&both);
    ensure(answer.clarification.is_some() && answer.confidence == 0.0 && answer.source == Source::None, || format!("{answer:?}"))?;
    Ok("400 single-success cases; both-fail -> clarification at 0".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("jackson dialogue", jackson_dialogue),
        ("iberian capitals", iberian),
        ("speaker deixis", deixis),
        ("query-engine oracle", query_oracle),
        ("pagerank oracle", pagerank_oracle),
        ("adaboost properties", adaboost),
        ("metric oracles", metrics),
        ("benchmark harness", benchmark),
        ("determinism", determinism),
        ("arbitration", arbitration),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
