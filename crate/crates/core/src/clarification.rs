//! Clarifying-question pool loading, filtering and selection.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarifyingQuestion {
	pub id: String,
	pub text: String,
}

/// Candidate clarifying questions. `filtered` marks a pool that passed
/// [`filter_pool`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuestionPool {
	questions: Vec<ClarifyingQuestion>,
	filtered: bool,
}

impl QuestionPool {
	pub fn new(questions: Vec<ClarifyingQuestion>) -> Result<Self> {
		let mut ids = HashSet::new();
		for q in &questions {
			if !ids.insert(q.id.as_str()) {
				return Err(Error::DuplicateId(q.id.clone()));
			}
			if q.text.trim().is_empty() {
				return Err(Error::InvalidArguments(format!("question {} has empty text", q.id)));
			}
		}
		Ok(Self { questions, filtered: false })
	}

	pub fn questions(&self) -> &[ClarifyingQuestion] {
		&self.questions
	}

	pub fn is_filtered(&self) -> bool {
		self.filtered
	}

	pub fn len(&self) -> usize {
		self.questions.len()
	}

	pub fn is_empty(&self) -> bool {
		self.questions.is_empty()
	}
}

/// Reads a `question_id \t question_text` pool file.
pub fn load_pool<R: BufRead>(reader: R) -> Result<QuestionPool> {
	let mut questions = Vec::new();
	let mut ids = HashSet::new();
	for (n, line) in reader.lines().enumerate() {
		let line = line?;
		if line.trim().is_empty() {
			continue;
		}
		let (id, text) =
			line.split_once('\t').ok_or_else(|| parse_err(n + 1, "expected `question_id<TAB>question_text`"))?;
		if id.is_empty() || text.trim().is_empty() {
			return Err(parse_err(n + 1, "empty question id or text"));
		}
		if !ids.insert(id.to_string()) {
			return Err(Error::DuplicateId(id.to_string()));
		}
		questions.push(ClarifyingQuestion { id: id.to_string(), text: text.to_string() });
	}
	QuestionPool::new(questions)
}

/// Rules that drop misleading, unreliable or faulty pool questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRules {
	pub min_tokens: usize,
	pub require_question_mark: bool,
	/// Generic templates, compared by token sequence.
	pub blocklist: Vec<String>,
}

pub const DEFAULT_BLOCKLIST: [&str; 7] = [
	"can you clarify",
	"what do you mean",
	"could you be more specific",
	"can you tell me more",
	"is this what you are looking for",
	"do you have any other questions",
	"what else would you like to know",
];

impl Default for FilterRules {
	fn default() -> Self {
		Self {
			min_tokens: 3,
			require_question_mark: true,
			blocklist: DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()).collect(),
		}
	}
}

impl FilterRules {
	pub fn passes(&self, q: &ClarifyingQuestion) -> bool {
		let tokens = tokenize(&q.text);
		if tokens.len() < self.min_tokens {
			return false;
		}
		if self.require_question_mark && !q.text.trim_end().ends_with('?') {
			return false;
		}
		!self.blocklist.iter().any(|b| tokenize(b) == tokens)
	}
}

/// Keeps questions passing every rule, dropping exact duplicate texts
/// (first occurrence wins). Idempotent.
pub fn filter_pool(pool: &QuestionPool, rules: &FilterRules) -> QuestionPool {
	let mut seen = HashSet::new();
	let questions =
		pool.questions.iter().filter(|q| rules.passes(q) && seen.insert(q.text.trim().to_string())).cloned().collect();
	QuestionPool { questions, filtered: true }
}

/// Text similarity used to rank clarifying questions against a query.
pub trait SimilarityScorer: Send + Sync {
	fn identity(&self) -> String;
	fn score(&self, a: &str, b: &str) -> Result<f64>;

	fn score_many(&self, query: &str, candidates: &[&str]) -> Result<Vec<f64>> {
		candidates.iter().map(|c| self.score(query, c)).collect()
	}
}

/// Cosine of raw-tf × smoothed-idf vectors, idf taken from the pool.
#[derive(Debug, Clone, Default)]
pub struct TfIdfScorer {
	doc_count: usize,
	df: HashMap<String, usize>,
}

pub const TFIDF_SCORER_ID: &str = "tfidf-cosine";

impl TfIdfScorer {
	pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
		let mut df: HashMap<String, usize> = HashMap::new();
		let mut doc_count = 0;
		for text in texts {
			doc_count += 1;
			for t in tokenize(text).into_iter().collect::<HashSet<_>>() {
				*df.entry(t).or_insert(0) += 1;
			}
		}
		Self { doc_count, df }
	}

	pub fn from_pool(pool: &QuestionPool) -> Self {
		Self::from_texts(pool.questions.iter().map(|q| q.text.as_str()))
	}

	/// ln((1 + N) / (1 + df)) + 1, strictly positive.
	pub fn idf(&self, term: &str) -> f64 {
		let df = self.df.get(term).copied().unwrap_or(0);
		((1.0 + self.doc_count as f64) / (1.0 + df as f64)).ln() + 1.0
	}

	fn vector(&self, text: &str) -> BTreeMap<String, f64> {
		let mut v: BTreeMap<String, f64> = BTreeMap::new();
		for t in tokenize(text) {
			*v.entry(t).or_insert(0.0) += 1.0;
		}
		for (t, w) in v.iter_mut() {
			*w *= self.idf(t);
		}
		v
	}
}

// Ordered maps keep the float sums reproducible across runs.
pub(crate) fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
	let norm = |v: &BTreeMap<String, f64>| v.values().map(|w| w * w).sum::<f64>().sqrt();
	let (na, nb) = (norm(a), norm(b));
	if na == 0.0 || nb == 0.0 {
		return 0.0;
	}
	let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
	let dot: f64 = small.iter().filter_map(|(t, w)| large.get(t).map(|v| w * v)).sum();
	(dot / (na * nb)).clamp(-1.0, 1.0)
}

impl SimilarityScorer for TfIdfScorer {
	fn identity(&self) -> String {
		TFIDF_SCORER_ID.to_string()
	}

	fn score(&self, a: &str, b: &str) -> Result<f64> {
		if a == b && !tokenize(a).is_empty() {
			return Ok(1.0);
		}
		Ok(cosine(&self.vector(a), &self.vector(b)))
	}
}

/// Picks the pool question most similar to `resolved`; ties go to the
/// lowest id.
pub fn select_question<'p>(
	resolved: &str,
	pool: &'p QuestionPool,
	scorer: &dyn SimilarityScorer,
) -> Result<&'p ClarifyingQuestion> {
	if !pool.filtered {
		return Err(Error::Contract("question selection requires a filtered pool".into()));
	}
	if pool.is_empty() {
		return Err(Error::EmptyPool);
	}
	let texts: Vec<&str> = pool.questions.iter().map(|q| q.text.as_str()).collect();
	let scores = scorer.score_many(resolved, &texts)?;
	if scores.len() != texts.len() {
		return Err(Error::Protocol(format!("scorer returned {} scores for {} questions", scores.len(), texts.len())));
	}
	let mut best: Option<(usize, f64)> = None;
	for (i, &s) in scores.iter().enumerate() {
		if !s.is_finite() {
			return Err(Error::Protocol(format!("non-finite similarity for question {}", pool.questions[i].id)));
		}
		best = match best {
			Some((b, bs)) if bs > s || (bs == s && pool.questions[b].id < pool.questions[i].id) => Some((b, bs)),
			_ => Some((i, s)),
		};
	}
	Ok(&pool.questions[best.expect("pool is non-empty").0])
}
