mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::{answers, engine, engine_fr, squash};
use convkg_core::context::{ResolutionError, SalienceRole};
use convkg_core::engine::{CorpusLog, LogEvent};
use convkg_core::nlu::{understand, MentionKind, WhType};
use convkg_core::query::{evaluate, QueryResult};
use convkg_core::{repl, AssetPaths, DialogueState, Engine, EntityId, GraphQuery, Reward, Source};

fn id(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

/// Rendered labels of a hand-written query over the bundled KB.
fn oracle(q: &str) -> BTreeSet<String> {
    let kb = &engine().kb;
    match evaluate(&GraphQuery::parse(q).unwrap(), kb).unwrap() {
        QueryResult::List(v) => v.iter().map(|v| kb.render(v, "en")).collect(),
        QueryResult::Count(n) => [n.to_string()].into(),
    }
}

fn values(engine: &Engine, a: &convkg_core::Answer) -> BTreeSet<String> {
    a.values.iter().map(|v| engine.kb.render(v, &engine.lang)).collect()
}

fn run_repl(engine: &Engine, script: &str) -> String {
    let mut state = DialogueState::new("scripted", None);
    let mut out = Vec::new();
    repl::run(engine, &mut state, script.as_bytes(), &mut out, false).unwrap();
    String::from_utf8(out).unwrap()
}

const JACKSON_DIALOGUE: &str = "Who is Michael Jackson?\nWhat is his father's name?\nand his mother's?\nand his brothers' and sisters'?\n";

#[test]
fn jackson_dialogue_through_the_repl() {
    let started = Instant::now();
    let transcript = run_repl(engine(), JACKSON_DIALOGUE);
    let elapsed = started.elapsed();
    let got = answers(&transcript);
    assert_eq!(got.len(), 4, "{transcript}");
    assert_eq!(got[0], "Michael Jackson is an American author, composer, singer and dancer");
    assert_eq!(got[1], "Joseph Jackson");
    assert_eq!(got[2], "Katherine Jackson");
    assert_eq!(
        got[3],
        squash("Tito Jackson, Rebbie Jackson, Randy Jackson, Jackie Jackson, Marlon Jackson, La Toya Jackson, Jermaine Jackson, Janet Jackson")
    );
    // The list is exactly the KB's sibling set.
    let listed: BTreeSet<String> = got[3].split(", ").map(str::to_owned).collect();
    assert_eq!(listed, oracle("SELECT ?s\nQ2831 P3373 ?s"));
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
}

#[test]
fn iberian_question_out_of_context() {
    let e = engine();
    let mut state = DialogueState::new("s", None);
    let a = e.ask(&mut state, "What are the capitals of the countries of the Iberian Peninsula?").unwrap();
    let want: BTreeSet<String> = ["Andorra la Vella", "Gibraltar", "Lisbon", "Madrid"].map(String::from).into();
    assert_eq!(values(e, &a), want);
    assert_eq!(want, oracle("SELECT ?c\n?x P361 Q12837\n?x P36 ?c"));
    assert!(!a.provenance.is_empty() && a.provenance.iter().all(|t| e.kb.contains_triple(t)));
}

#[test]
fn speaker_deixis_needs_a_profile() {
    let e = engine();
    let q = "Who is the president of the country where I was born?";
    let mut alice = e.new_session("a", Some("alice")).unwrap();
    let a = e.ask(&mut alice, q).unwrap();
    // alice was born in France (Q142); the fixture's head of state of France.
    assert_eq!(values(e, &a), oracle("SELECT ?p\nQ142 P35 ?p"));
    assert_eq!(values(e, &a), ["Emmanuel Macron".to_owned()].into());

    let mut bob = e.new_session("b", Some("bob")).unwrap();
    assert_eq!(values(e, &e.ask(&mut bob, q).unwrap()), oracle("SELECT ?p\nQ36 P35 ?p"));

    for mut state in [DialogueState::new("anon", None), e.new_session("c", Some("carol")).unwrap()] {
        let a = e.ask(&mut state, q).unwrap();
        assert_eq!(a.source, Source::None);
        assert_eq!(a.confidence, 0.0);
        assert!(a.values.is_empty());
        assert!(a.clarification.is_some());
    }
    assert!(e.new_session("x", Some("mallory")).is_none());
}

#[test]
fn deixis_without_a_trigger_leaves_the_speaker_alone() {
    let e = engine();
    let mut state = DialogueState::new("anon", None);
    let frame = e.resolve(&state, "Can you tell me who is Michael Jackson?").unwrap();
    assert!(frame.mentions.iter().any(|m| m.top_candidate() == Some(&id("Q2831"))));
    let a = e.ask(&mut state, "Can you tell me who is Michael Jackson?").unwrap();
    assert_ne!(a.source, Source::None);
}

#[test]
fn frames_of_the_jackson_dialogue() {
    let e = engine();
    let f = understand("What is his father's name?", &e.kb, &e.lexicon);
    assert_eq!(f.wh_type, WhType::What);
    assert_eq!(f.predicate_lemma.as_deref(), Some("father"));
    assert_eq!(f.possessive_links.len(), 1);
    assert_eq!(f.possessive_links[0].head, "father");
    assert_eq!(f.mentions[f.possessive_links[0].mention].surface, "his");
    assert!(!f.is_elliptical && !f.has_deixis);

    let f = understand("and his mother's?", &e.kb, &e.lexicon);
    assert!(f.is_elliptical);
    assert_eq!(f.wh_type, WhType::None);
    assert_eq!(f.possessive_links[0].head, "mother");

    let f = understand("Who is Michael Jackson?", &e.kb, &e.lexicon);
    assert_eq!(f.wh_type, WhType::Who);
    assert_eq!(f.predicate_lemma, None);
    let names: Vec<_> = f.name_mentions().collect();
    assert_eq!(names.len(), 1);
    assert_eq!(names[0].top_candidate(), Some(&id("Q2831")));

    let f = understand("Who is the president of the country where I was born?", &e.kb, &e.lexicon);
    assert!(f.has_deixis);
    assert!(f.mentions.iter().any(|m| m.kind == MentionKind::SelfRef && m.person() == Some(1)));

    let f = understand("How many siblings does Michael Jackson have?", &e.kb, &e.lexicon);
    assert_eq!(f.wh_type, WhType::HowMany);
}

#[test]
fn coreference_follows_salience_and_agreement() {
    let e = engine();
    let mut state = DialogueState::new("s", None);
    e.ask(&mut state, "Who is Michael Jackson?").unwrap();
    assert_eq!(state.salience[0].entity, id("Q2831"));
    assert_eq!(state.salience[0].role, SalienceRole::Topic);
    let a = e.ask(&mut state, "What is his father's name?").unwrap();
    assert_eq!(values(e, &a), oracle("SELECT ?f\nQ2831 P22 ?f"));
    // Both the topic and the answer are now salient; the topic leads.
    let front: Vec<_> = state.salience.iter().take(2).map(|s| (s.entity.clone(), s.role)).collect();
    assert_eq!(front, [(id("Q2831"), SalienceRole::Topic), (id("Q1349483"), SalienceRole::Answer)]);

    // A feminine pronoun skips the two masculine entities.
    let mut state = DialogueState::new("s", None);
    e.ask(&mut state, "Who is Marie Curie?").unwrap();
    let a = e.ask(&mut state, "Who is her husband?").unwrap();
    assert_eq!(values(e, &a), oracle("SELECT ?x\nQ7186 P26 ?x"));
    let a = e.ask(&mut state, "Who is his wife?").unwrap();
    assert_eq!(values(e, &a), oracle("SELECT ?x\nQ37463 P26 ?x"));
}

#[test]
fn unresolvable_references_become_clarifications() {
    let e = engine();
    let mut state = DialogueState::new("s", None);
    assert_eq!(e.resolve(&state, "What is his father's name?").unwrap_err(), ResolutionError::UnresolvedReference("his".into()));
    assert_eq!(e.resolve(&state, "and his mother's?").unwrap_err(), ResolutionError::UnresolvedReference("his".into()));
    assert_eq!(e.resolve(&state, "and Poland?").unwrap_err(), ResolutionError::UnresolvedEllipsis);

    let a = e.ask(&mut state, "What is his father's name?").unwrap();
    assert_eq!(a.source, Source::None);
    assert_eq!(a.short_text, "Sorry, I could not work out \"his\". Could you rephrase?");
    // A failed turn is still a turn, but it leaves no salience behind.
    assert_eq!(state.turns.len(), 1);
    assert!(state.salience.is_empty());
    assert!(e.ask(&mut state, "   ").is_err());
    assert_eq!(state.turns.len(), 1);
}

#[test]
fn ellipsis_substitutes_names_and_predicates() {
    let e = engine();
    let mut state = DialogueState::new("s", None);
    let a = e.ask(&mut state, "What is the capital of France?").unwrap();
    assert_eq!(values(e, &a), oracle("SELECT ?c\nQ142 P36 ?c"));
    let a = e.ask(&mut state, "and Poland?").unwrap();
    assert_eq!(values(e, &a), oracle("SELECT ?c\nQ36 P36 ?c"));
    let a = e.ask(&mut state, "and Germany?").unwrap();
    assert_eq!(values(e, &a), oracle("SELECT ?c\nQ183 P36 ?c"));

    let mut state = DialogueState::new("s", None);
    e.ask(&mut state, "Who is the father of Michael Jackson?").unwrap();
    let a = e.ask(&mut state, "and the mother?").unwrap();
    assert_eq!(values(e, &a), oracle("SELECT ?m\nQ2831 P25 ?m"));
}

#[test]
fn count_and_siblings_answers_match_the_kb() {
    let e = engine();
    let mut state = DialogueState::new("s", None);
    let a = e.ask(&mut state, "How many siblings does Michael Jackson have?").unwrap();
    assert_eq!(a.short_text, oracle("COUNT ?s\nQ2831 P3373 ?s").into_iter().next().unwrap());
}

#[test]
fn french_dialogue() {
    let e = engine_fr();
    let mut state = DialogueState::new("fr", None);
    let a = e.ask(&mut state, "Qui est Marie Curie ?").unwrap();
    assert_eq!(a.short_text, "Marie Curie : physicienne et chimiste franco-polonaise");
    let a = e.ask(&mut state, "Qui est son mari ?").unwrap();
    assert_eq!(a.short_text, "Pierre Curie");
    let a = e.ask(&mut state, "Quelle est la capitale de la France ?").unwrap();
    assert_eq!(a.short_text, "Paris");
}

#[test]
fn rewards_are_recorded_once() {
    let e = engine();
    let mut state = DialogueState::new("s", None);
    e.ask(&mut state, "Who is Michael Jackson?").unwrap();
    e.record_reward(&mut state, 0, Reward::Correct).unwrap();
    assert_eq!(state.turns[0].reward, Some(Reward::Correct));
    assert!(e.record_reward(&mut state, 0, Reward::Incorrect).is_err());
    assert!(e.record_reward(&mut state, 5, Reward::Correct).is_err());
    assert_eq!("-".parse::<Reward>(), Ok(Reward::Incorrect));
    assert!("maybe".parse::<Reward>().is_err());
}

#[test]
fn replaying_the_corpus_log_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let logged = Engine::load(&AssetPaths::new(common::data_dir(), "en")).unwrap().with_log(CorpusLog::open(&path).unwrap());

    let mut s1 = DialogueState::new("s1", None);
    let mut s2 = logged.new_session("s2", Some("alice")).unwrap();
    for line in JACKSON_DIALOGUE.lines() {
        logged.ask(&mut s1, line).unwrap();
    }
    logged.ask(&mut s2, "Who is the president of the country where I was born?").unwrap();
    logged.record_reward(&mut s1, 1, Reward::Correct).unwrap();
    logged.ask(&mut s1, "What is the capital of France?").unwrap();
    logged.ask(&mut s2, "and his mother's?").unwrap();

    let records = CorpusLog::read(&path).unwrap();
    assert_eq!(records.len(), 8);
    assert_eq!(records.iter().filter(|r| r.event == LogEvent::Reward).count(), 1);
    let turns: Vec<_> = records.iter().filter(|r| r.event == LogEvent::Turn).cloned().collect();

    let replayed = engine().replay(&records).unwrap();
    let encode = |rs: &[convkg_core::engine::LogRecord]| rs.iter().map(|r| serde_json::to_string(r).unwrap()).collect::<Vec<_>>();
    assert_eq!(encode(&replayed), encode(&turns));
    // And the log lines on disk are exactly those encodings.
    let on_disk: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(str::to_owned).collect();
    let turn_lines: Vec<String> = on_disk.into_iter().filter(|l| l.contains("\"event\":\"turn\"")).collect();
    assert_eq!(turn_lines, encode(&turns));
}

#[test]
fn scripted_runs_are_deterministic() {
    let script = format!("{JACKSON_DIALOGUE}What are the capitals of the countries of the Iberian Peninsula?\n:why\n:docs\n");
    assert_eq!(run_repl(engine(), &script), run_repl(engine(), &script));
}
