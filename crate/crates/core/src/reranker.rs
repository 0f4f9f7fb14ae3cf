//! Two-stage rerank cascade: pointwise rescoring of the head of a
//! first-stage ranking, then pairwise reordering of a shorter head.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clarification::cosine;
use crate::error::{Error, Result};
use crate::retrieval::{rank_order, InvertedIndex, PassageLookup, RankedList};
use crate::text::tokenize;

/// Scores each passage independently against the query.
pub trait PointwiseScorer: Send + Sync {
	fn identity(&self) -> String;
	/// One score per `(id, text)` passage, in order.
	fn score(&self, query: &str, passages: &[(&str, &str)]) -> Result<Vec<f64>>;
}

/// Probability that the first passage of each pair is more relevant.
pub trait PairwiseScorer: Send + Sync {
	fn identity(&self) -> String;
	fn prefer(&self, query: &str, pairs: &[((&str, &str), (&str, &str))]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankConfig {
	pub pointwise_depth: usize,
	pub pairwise_depth: usize,
}

impl Default for RerankConfig {
	fn default() -> Self {
		Self { pointwise_depth: 1000, pairwise_depth: 50 }
	}
}

impl RerankConfig {
	pub fn validate(&self) -> Result<()> {
		if self.pairwise_depth > self.pointwise_depth {
			return Err(Error::InvalidArguments(format!(
				"pairwise depth {} exceeds pointwise depth {}",
				self.pairwise_depth, self.pointwise_depth
			)));
		}
		Ok(())
	}
}

/// tf-idf cosine between query and passage, idf from the index.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
	index: Arc<InvertedIndex>,
}

pub const LEXICAL_SCORER_ID: &str = "lexical-tfidf";
pub const LOGISTIC_PAIRWISE_ID: &str = "logistic-lexical";

impl LexicalScorer {
	pub fn new(index: Arc<InvertedIndex>) -> Self {
		Self { index }
	}

	fn vector(&self, text: &str) -> BTreeMap<String, f64> {
		let mut v: BTreeMap<String, f64> = BTreeMap::new();
		for t in tokenize(text) {
			*v.entry(t).or_insert(0.0) += 1.0;
		}
		for (t, w) in v.iter_mut() {
			*w *= self.index.idf(t);
		}
		v
	}

	pub fn score_text(&self, query: &str, passage: &str) -> f64 {
		cosine(&self.vector(query), &self.vector(passage))
	}
}

impl PointwiseScorer for LexicalScorer {
	fn identity(&self) -> String {
		LEXICAL_SCORER_ID.to_string()
	}

	fn score(&self, query: &str, passages: &[(&str, &str)]) -> Result<Vec<f64>> {
		let q = self.vector(query);
		Ok(passages.iter().map(|(_, text)| cosine(&q, &self.vector(text))).collect())
	}
}

/// Logistic function evaluated so that `sigmoid(x) + sigmoid(-x) == 1`
/// holds exactly in floating point.
pub fn sigmoid(x: f64) -> f64 {
	if x >= 0.0 {
		1.0 / (1.0 + (-x).exp())
	} else {
		1.0 - 1.0 / (1.0 + x.exp())
	}
}

/// p(a, b) = sigmoid(score(a) - score(b)) over the lexical pointwise score.
#[derive(Debug, Clone)]
pub struct LogisticPairwise {
	pointwise: LexicalScorer,
}

impl LogisticPairwise {
	pub fn new(index: Arc<InvertedIndex>) -> Self {
		Self { pointwise: LexicalScorer::new(index) }
	}
}

impl PairwiseScorer for LogisticPairwise {
	fn identity(&self) -> String {
		LOGISTIC_PAIRWISE_ID.to_string()
	}

	fn prefer(&self, query: &str, pairs: &[((&str, &str), (&str, &str))]) -> Result<Vec<f64>> {
		let q = self.pointwise.vector(query);
		let mut cache: HashMap<&str, f64> = HashMap::new();
		for ((_, a), (_, b)) in pairs {
			for t in [*a, *b] {
				cache.entry(t).or_insert_with(|| cosine(&q, &self.pointwise.vector(t)));
			}
		}
		Ok(pairs.iter().map(|((_, a), (_, b))| sigmoid(cache[a] - cache[b])).collect())
	}
}

fn head_texts<'a>(head: &'a [(String, f64)], lookup: &'a dyn PassageLookup) -> Result<Vec<(&'a str, &'a str)>> {
	head.iter()
		.map(|(id, _)| {
			lookup.passage_text(id).map(|t| (id.as_str(), t)).ok_or_else(|| Error::NotFound(format!("passage {id}")))
		})
		.collect()
}

fn check_scores(scores: &[f64], expected: usize, who: &str) -> Result<()> {
	if scores.len() != expected {
		return Err(Error::Protocol(format!("{who} returned {} scores for {expected} inputs", scores.len())));
	}
	if scores.iter().any(|s| !s.is_finite()) {
		return Err(Error::Protocol(format!("{who} returned a non-finite score")));
	}
	Ok(())
}

fn splice(mut head: Vec<(String, f64)>, tail: &[(String, f64)]) -> RankedList {
	head.sort_by(rank_order);
	head.extend(tail.iter().cloned());
	RankedList::from_stages(head).expect("head and tail come from one list")
}

/// Rescores the first `depth` entries with `scorer` and re-sorts them; the
/// rest keep their order and scores.
pub fn rerank_pointwise(
	query: &str,
	candidates: &RankedList,
	lookup: &dyn PassageLookup,
	scorer: &dyn PointwiseScorer,
	depth: usize,
) -> Result<RankedList> {
	let n = depth.min(candidates.len());
	if n == 0 {
		return Ok(candidates.clone());
	}
	let (head, tail) = candidates.entries().split_at(n);
	let texts = head_texts(head, lookup)?;
	let scores = scorer.score(query, &texts)?;
	check_scores(&scores, n, &scorer.identity())?;
	let rescored = head.iter().zip(scores).map(|((id, _), s)| (id.clone(), s)).collect();
	Ok(splice(rescored, tail))
}

/// Reorders the first `depth` entries by the sum of each passage's win
/// probabilities against every other head passage.
pub fn rerank_pairwise(
	query: &str,
	candidates: &RankedList,
	lookup: &dyn PassageLookup,
	scorer: &dyn PairwiseScorer,
	depth: usize,
) -> Result<RankedList> {
	let n = depth.min(candidates.len());
	let (head, tail) = candidates.entries().split_at(n);
	let texts = head_texts(head, lookup)?;
	if n < 2 {
		return Ok(candidates.clone());
	}
	let mut pairs = Vec::with_capacity(n * (n - 1));
	for i in 0..n {
		for j in 0..n {
			if i != j {
				pairs.push((texts[i], texts[j]));
			}
		}
	}
	let probs = scorer.prefer(query, &pairs)?;
	check_scores(&probs, pairs.len(), &scorer.identity())?;
	if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
		return Err(Error::Protocol(format!("{} returned a probability outside [0, 1]", scorer.identity())));
	}
	let aggregated = aggregate_preferences(n, &probs);
	let rescored = head.iter().zip(aggregated).map(|((id, _), s)| (id.clone(), s)).collect();
	Ok(splice(rescored, tail))
}

/// Row sums of the preference matrix given in row-major order without the
/// diagonal.
pub fn aggregate_preferences(n: usize, probs: &[f64]) -> Vec<f64> {
	probs.chunks(n.saturating_sub(1).max(1)).take(n).map(|row| row.iter().sum()).collect()
}

/// Full cascade: pointwise over `pointwise_depth`, then pairwise over
/// `pairwise_depth`.
pub fn rerank_cascade(
	query: &str,
	candidates: &RankedList,
	lookup: &dyn PassageLookup,
	pointwise: &dyn PointwiseScorer,
	pairwise: &dyn PairwiseScorer,
	config: &RerankConfig,
) -> Result<RankedList> {
	config.validate()?;
	let stage2 = rerank_pointwise(query, candidates, lookup, pointwise, config.pointwise_depth)?;
	rerank_pairwise(query, &stage2, lookup, pairwise, config.pairwise_depth)
}
