//! Mixed-initiative conversational passage retrieval.
//!
//! A turn resolves the user query against the conversation history, asks
//! a clarifying question drawn from a filtered pool, decides from the
//! user's answer whether the question, the answer, both or neither should
//! expand the query, and then retrieves with BM25 + RM3 followed by a
//! pointwise and a pairwise rerank.
//!
//! Every model-backed step sits behind a trait with a deterministic
//! built-in implementation, so the whole pipeline runs offline. Remote
//! implementations speaking the JSON wire protocol live in [`backend`].
//!
//! Runnable examples (see `examples/`):
//!
//! - `retrieval_bm25_rm3`: index a corpus, search, expand with RM3
//! - `clarifying_question`: filter a pool and pick a question
//! - `usefulness_classifier`: train and cross-validate the label model
//! - `rerank_cascade`: pointwise then pairwise reranking
//! - `interactive_session`: one MI_CLF session, turn by turn
//! - `batch_experiment`: scripted topics to run files and metrics
//! - `evaluate_run`: TREC run and qrels evaluation, kappa
//! - `http_service`: the session API end to end
//! - `remote_backend`: an engine whose rewriter lives in a sidecar

pub mod backend;
pub mod clarification;
pub mod config;
pub mod conversation;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod reranker;
pub mod retrieval;
pub mod rewriter;
pub mod service;
pub mod synthetic;
pub mod text;
pub mod usefulness;

pub use error::{Error, Result};
pub use pipeline::{Engine, Mode, QueryOutcome, Session, SessionState, TurnResult};
pub use retrieval::{Bm25Params, InvertedIndex, Passage, RankedList, Rm3Params, WeightedQuery};
pub use usefulness::{UsefulnessLabel, UsefulnessModel};
