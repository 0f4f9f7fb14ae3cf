//! Query rewriting: history resolution and clarification-context expansion.

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::conversation::ConversationHistory;
use crate::error::{Error, Result};
use crate::text::{is_stopword, tokenize};

/// Maximum number of history tokens the fallback resolver carries over.
pub const RESOLVE_MAX_TOKENS: usize = 5;

/// A query rewriting backend.
pub trait RewriteBackend: Send + Sync {
	/// Name used in run metadata.
	fn identity(&self) -> String;
	fn supports_resolve(&self) -> bool;
	fn supports_expand(&self) -> bool;
	/// Rewrites `query` into a self-contained form given `history`.
	fn resolve(&self, query: &str, history: &ConversationHistory) -> Result<String>;
	/// Rewrites `resolved` to incorporate a clarifying question and/or answer.
	fn expand(&self, resolved: &str, question: Option<&str>, answer: Option<&str>) -> Result<String>;
}

/// Resolves `query` against `history`. Empty history is always the identity.
pub fn resolve(backend: &dyn RewriteBackend, query: &str, history: &ConversationHistory) -> Result<String> {
	if query.trim().is_empty() {
		return Err(Error::InvalidArguments("query is empty".into()));
	}
	if history.is_empty() {
		return Ok(query.to_string());
	}
	if !backend.supports_resolve() {
		return Err(Error::BackendUnavailable(format!("{} does not resolve", backend.identity())));
	}
	backend.resolve(query, history)
}

pub fn expand(
	backend: &dyn RewriteBackend,
	resolved: &str,
	question: Option<&str>,
	answer: Option<&str>,
) -> Result<String> {
	if question.is_none() && answer.is_none() {
		return Err(Error::InvalidArguments("expansion needs a question or an answer".into()));
	}
	if resolved.trim().is_empty() {
		return Err(Error::InvalidArguments("resolved query is empty".into()));
	}
	if !backend.supports_expand() {
		return Err(Error::BackendUnavailable(format!("{} does not expand", backend.identity())));
	}
	backend.expand(resolved, question, answer)
}

/// Deterministic lexical rewriter.
///
/// Resolution appends up to five non-stopword tokens of the latest prior
/// user query that the current query lacks (the most recent ones when there
/// are more). Expansion appends the non-stopword tokens of the question and
/// then the answer that `resolved` lacks, each once.
#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackRewriter;

pub const FALLBACK_REWRITER_ID: &str = "fallback-lexical";

fn append_novel<'a>(base: &str, context: impl IntoIterator<Item = &'a str>, limit: Option<usize>) -> String {
	let mut present: HashSet<String> = tokenize(base).into_iter().collect();
	let mut novel = Vec::new();
	for text in context {
		for t in tokenize(text) {
			if !is_stopword(&t) && present.insert(t.clone()) {
				novel.push(t);
			}
		}
	}
	if let Some(limit) = limit {
		let skip = novel.len().saturating_sub(limit);
		novel.drain(..skip);
	}
	if novel.is_empty() {
		return base.to_string();
	}
	format!("{base} {}", novel.join(" "))
}

impl RewriteBackend for FallbackRewriter {
	fn identity(&self) -> String {
		FALLBACK_REWRITER_ID.to_string()
	}

	fn supports_resolve(&self) -> bool {
		true
	}

	fn supports_expand(&self) -> bool {
		true
	}

	fn resolve(&self, query: &str, history: &ConversationHistory) -> Result<String> {
		Ok(match history.last_query() {
			Some(prior) => append_novel(query, [prior], Some(RESOLVE_MAX_TOKENS)),
			None => query.to_string(),
		})
	}

	fn expand(&self, resolved: &str, question: Option<&str>, answer: Option<&str>) -> Result<String> {
		Ok(append_novel(resolved, question.into_iter().chain(answer), None))
	}
}

/// Wraps a primary backend and falls back to [`FallbackRewriter`] when it
/// reports itself unavailable. Once degraded, the identity says so.
pub struct DegradingRewriter {
	primary: Box<dyn RewriteBackend>,
	fallback: FallbackRewriter,
	degraded: AtomicBool,
}

impl DegradingRewriter {
	pub fn new(primary: Box<dyn RewriteBackend>) -> Self {
		Self { primary, fallback: FallbackRewriter, degraded: AtomicBool::new(false) }
	}

	pub fn degraded(&self) -> bool {
		self.degraded.load(Ordering::Relaxed)
	}

	fn run<T>(
		&self,
		capable: bool,
		primary: impl FnOnce() -> Result<T>,
		fallback: impl FnOnce() -> Result<T>,
	) -> Result<T> {
		if capable {
			match primary() {
				Err(Error::BackendUnavailable(_)) => {}
				other => return other,
			}
		}
		self.degraded.store(true, Ordering::Relaxed);
		fallback()
	}
}

impl RewriteBackend for DegradingRewriter {
	fn identity(&self) -> String {
		if self.degraded() {
			format!("{}>{}", self.primary.identity(), FALLBACK_REWRITER_ID)
		} else {
			self.primary.identity()
		}
	}

	fn supports_resolve(&self) -> bool {
		true
	}

	fn supports_expand(&self) -> bool {
		true
	}

	fn resolve(&self, query: &str, history: &ConversationHistory) -> Result<String> {
		self.run(
			self.primary.supports_resolve(),
			|| self.primary.resolve(query, history),
			|| self.fallback.resolve(query, history),
		)
	}

	fn expand(&self, resolved: &str, question: Option<&str>, answer: Option<&str>) -> Result<String> {
		self.run(
			self.primary.supports_expand(),
			|| self.primary.expand(resolved, question, answer),
			|| self.fallback.expand(resolved, question, answer),
		)
	}
}

#[cfg(test)]
mod tests {
	use super::*;
	use crate::conversation::Utterance;
	use crate::retrieval::RankedList;

	fn history_with(query: &str) -> ConversationHistory {
		ConversationHistory::new("t")
			.append_turn(Utterance::query(query).unwrap(), Utterance::passage_list(RankedList::default()))
			.unwrap()
	}

	#[test]
	fn resolve_identity_on_empty_history() {
		let h = ConversationHistory::new("t");
		assert_eq!(resolve(&FallbackRewriter, "tell me about spiders", &h).unwrap(), "tell me about spiders");
		assert!(matches!(resolve(&FallbackRewriter, "", &h), Err(Error::InvalidArguments(_))));
	}

	#[test]
	fn resolve_appends_salient_history_terms() {
		let h = history_with("tell me about tarantulas");
		assert_eq!(resolve(&FallbackRewriter, "how big do they get", &h).unwrap(), "how big do they get tarantulas");
	}

	#[test]
	fn resolve_keeps_most_recent_five() {
		let h = history_with("alpha beta gamma delta epsilon zeta eta");
		assert_eq!(resolve(&FallbackRewriter, "more", &h).unwrap(), "more gamma delta epsilon zeta eta");
	}

	#[test]
	fn expand_with_question() {
		let out =
			expand(&FallbackRewriter, "map of usa", Some("do you want to see a map of us territories"), None).unwrap();
		assert_eq!(out, "map of usa us territories");
	}

	#[test]
	fn expand_with_answer() {
		let out = expand(
			&FallbackRewriter,
			"computer programming",
			None,
			Some("no i want to know what career options programmers have"),
		)
		.unwrap();
		assert_eq!(out, "computer programming no career options programmers have");
	}

	#[test]
	fn expand_question_then_answer() {
		let out =
			expand(&FallbackRewriter, "men equal", Some("declaration of independence?"), Some("yes who wrote it"))
				.unwrap();
		assert_eq!(out, "men equal declaration independence yes who wrote");
	}

	#[test]
	fn expand_needs_context() {
		assert!(matches!(expand(&FallbackRewriter, "x", None, None), Err(Error::InvalidArguments(_))));
	}

	struct Down;

	impl RewriteBackend for Down {
		fn identity(&self) -> String {
			"remote".into()
		}
		fn supports_resolve(&self) -> bool {
			true
		}
		fn supports_expand(&self) -> bool {
			true
		}
		fn resolve(&self, _: &str, _: &ConversationHistory) -> Result<String> {
			Err(Error::BackendUnavailable("down".into()))
		}
		fn expand(&self, _: &str, _: Option<&str>, _: Option<&str>) -> Result<String> {
			Err(Error::BackendUnavailable("down".into()))
		}
	}

	#[test]
	fn degrading_rewriter_falls_back() {
		let r = DegradingRewriter::new(Box::new(Down));
		assert_eq!(r.identity(), "remote");
		let h = history_with("tell me about tarantulas");
		assert_eq!(resolve(&r, "how big", &h).unwrap(), "how big tarantulas");
		assert!(r.degraded());
		assert_eq!(r.identity(), "remote>fallback-lexical");
	}
}
