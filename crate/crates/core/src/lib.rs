//! Conversational question answering over a small Wikidata-style knowledge
//! graph: two QA backends (grammar rules and entity search), confidence
//! arbitration, and dialogue context resolution.

pub mod agreement;
pub mod arbiter;
pub mod context;
pub mod docs;
pub mod engine;
pub mod eval;
pub mod gen;
pub mod kb;
pub mod nlu;
pub mod qa;
pub mod query;
pub mod reasoning;
pub mod repl;
pub mod search;
pub mod text;

pub use arbiter::{AdaBoostModel, Answer, FeatureVector};
pub use context::{DialogueState, Reward, SpeakerProfile};
pub use engine::{AssetPaths, Engine, EngineError};
pub use kb::{EntityId, KnowledgeBase, Triple, Value};
pub use qa::{AnswerKind, QAResult, Source};
pub use query::GraphQuery;
