#![allow(dead_code)]

pub mod oracles;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use convkg_core::kb::{load_kb, PageRankConfig};
use convkg_core::{AssetPaths, Engine, KnowledgeBase};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn mini_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini")
}

/// The bundled English engine, loaded once per test binary.
pub fn engine() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(|| Engine::load(&AssetPaths::new(data_dir(), "en")).expect("bundled assets load"))
}

pub fn engine_fr() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(|| Engine::load(&AssetPaths::new(data_dir(), "fr")).expect("bundled French assets load"))
}

pub fn mini_kb() -> KnowledgeBase {
    let dir = mini_dir();
    let mut kb = load_kb(&dir.join("triples.tsv"), &dir.join("entities.jsonl"), "en").unwrap();
    kb.compute_pagerank(&PageRankConfig::default()).unwrap();
    kb
}

/// Collapse runs of whitespace, for string-exact comparisons.
pub fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lines of the REPL transcript that carry answers.
pub fn answers(transcript: &str) -> Vec<String> {
    transcript.lines().filter_map(|l| l.strip_prefix("A: ")).map(squash).collect()
}
