//! Inverted index, BM25 scoring and RM3 pseudo-relevance feedback.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::text::{is_stopword, tokenize};

const INDEX_MAGIC: &str = "clarify-rank-index v1";

/// A retrievable unit of text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
	id: String,
	text: String,
}

impl Passage {
	pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
		let id = id.into();
		if id.is_empty() || id.chars().any(char::is_whitespace) {
			return Err(Error::InvalidArguments(format!("passage id {id:?} must be non-empty without whitespace")));
		}
		Ok(Self { id, text: text.into() })
	}

	pub fn id(&self) -> &str {
		&self.id
	}

	pub fn text(&self) -> &str {
		&self.text
	}
}

/// Reads a `passage_id \t text` corpus file. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Passage>> {
	let mut out = Vec::new();
	for (n, line) in reader.lines().enumerate() {
		let line = line?;
		let line = line.strip_suffix('\r').unwrap_or(&line);
		if line.trim().is_empty() {
			continue;
		}
		let (id, text) = line.split_once('\t').ok_or_else(|| parse_err(n + 1, "expected `passage_id<TAB>text`"))?;
		out.push(Passage::new(id, text).map_err(|e| parse_err(n + 1, e.to_string()))?);
	}
	Ok(out)
}

/// BM25 parameters. Defaults are k1 = 0.95, b = 0.45.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
	pub k1: f64,
	pub b: f64,
}

impl Default for Bm25Params {
	fn default() -> Self {
		Self { k1: 0.95, b: 0.45 }
	}
}

/// RM3 parameters: feedback passages, expansion terms, interpolation weight
/// of the original query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rm3Params {
	pub fb_docs: usize,
	pub fb_terms: usize,
	pub lambda: f64,
}

impl Default for Rm3Params {
	fn default() -> Self {
		Self { fb_docs: 10, fb_terms: 10, lambda: 0.5 }
	}
}

/// Smoothed, non-negative BM25 idf.
pub fn idf(doc_count: usize, df: usize) -> f64 {
	let n = doc_count as f64;
	let df = df as f64;
	(1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Term weights of a (possibly expanded) query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedQuery {
	weights: BTreeMap<String, f64>,
}

impl WeightedQuery {
	pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
		if let Some((t, w)) = weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
			return Err(Error::InvalidArguments(format!("weight {w} for term {t:?} must be finite and non-negative")));
		}
		Ok(Self { weights })
	}

	/// Bag-of-words query: each token weighted by its count.
	pub fn from_text(text: &str) -> Self {
		let mut weights = BTreeMap::new();
		for t in tokenize(text) {
			*weights.entry(t).or_insert(0.0) += 1.0;
		}
		Self { weights }
	}

	pub fn weights(&self) -> &BTreeMap<String, f64> {
		&self.weights
	}

	pub fn weight(&self, term: &str) -> f64 {
		self.weights.get(term).copied().unwrap_or(0.0)
	}

	pub fn len(&self) -> usize {
		self.weights.len()
	}

	pub fn is_empty(&self) -> bool {
		self.weights.is_empty()
	}

	pub fn total(&self) -> f64 {
		self.weights.values().sum()
	}

	/// Scales weights to sum to 1, dropping zero entries. An all-zero
	/// query normalizes to the empty query.
	pub fn normalized(&self) -> Self {
		let total = self.total();
		if total <= 0.0 {
			return Self::default();
		}
		let weights = self.weights.iter().filter(|(_, w)| **w > 0.0).map(|(t, w)| (t.clone(), w / total)).collect();
		Self { weights }
	}
}

/// A ranked list of passage ids. Scores are non-increasing, ids unique,
/// ties ordered by ascending id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
	entries: Vec<(String, f64)>,
}

pub(crate) fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
	b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

impl RankedList {
	/// Validates an already ordered list.
	pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
		let mut seen = std::collections::HashSet::new();
		for (i, (id, score)) in entries.iter().enumerate() {
			if !score.is_finite() {
				return Err(Error::Validation(format!("non-finite score for {id}")));
			}
			if !seen.insert(id.as_str()) {
				return Err(Error::Validation(format!("duplicate passage {id} in ranked list")));
			}
			if i > 0 && rank_order(&entries[i - 1], &entries[i]) != Ordering::Less {
				return Err(Error::Validation(format!("ranked list out of order at position {}", i + 1)));
			}
		}
		Ok(Self { entries })
	}

	/// Sorts arbitrary scored entries into ranking order.
	pub fn from_scored(mut entries: Vec<(String, f64)>) -> Result<Self> {
		entries.sort_by(rank_order);
		Self::new(entries)
	}

	/// Builds a list whose order was decided by several stages (a rerank
	/// cascade). Each stage keeps its own scores, so scores are only
	/// guaranteed to be non-increasing within a stage; ids must be unique.
	pub fn from_stages(entries: Vec<(String, f64)>) -> Result<Self> {
		let mut seen = std::collections::HashSet::new();
		for (id, score) in &entries {
			if !score.is_finite() {
				return Err(Error::Validation(format!("non-finite score for {id}")));
			}
			if !seen.insert(id.as_str()) {
				return Err(Error::Validation(format!("duplicate passage {id} in ranked list")));
			}
		}
		Ok(Self { entries })
	}

	/// True when scores are non-increasing with ascending-id ties.
	pub fn is_score_ordered(&self) -> bool {
		self.entries.windows(2).all(|w| rank_order(&w[0], &w[1]) == Ordering::Less)
	}

	pub fn entries(&self) -> &[(String, f64)] {
		&self.entries
	}

	pub fn ids(&self) -> impl Iterator<Item = &str> {
		self.entries.iter().map(|(id, _)| id.as_str())
	}

	pub fn len(&self) -> usize {
		self.entries.len()
	}

	pub fn is_empty(&self) -> bool {
		self.entries.is_empty()
	}

	pub fn truncated(&self, k: usize) -> Self {
		Self { entries: self.entries.iter().take(k).cloned().collect() }
	}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
	doc: u32,
	tf: u32,
}

/// Immutable inverted index over a passage collection. Passage text is
/// kept so later stages can rescore without a second lookup.
#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
	ids: Vec<String>,
	texts: Vec<String>,
	lengths: Vec<u32>,
	ordinals: HashMap<String, u32>,
	postings: BTreeMap<String, Vec<Posting>>,
	avg_doc_length: f64,
}

/// Anything that can map passage ids back to their text.
pub trait PassageLookup {
	fn passage_text(&self, id: &str) -> Option<&str>;
}

impl PassageLookup for InvertedIndex {
	fn passage_text(&self, id: &str) -> Option<&str> {
		self.ordinals.get(id).map(|&o| self.texts[o as usize].as_str())
	}
}

impl PassageLookup for HashMap<String, String> {
	fn passage_text(&self, id: &str) -> Option<&str> {
		self.get(id).map(String::as_str)
	}
}

impl InvertedIndex {
	pub fn build<I: IntoIterator<Item = Passage>>(corpus: I) -> Result<Self> {
		let mut index = Self::default();
		for passage in corpus {
			if index.ordinals.contains_key(&passage.id) {
				return Err(Error::DuplicatePassage(passage.id));
			}
			let ord = index.ids.len() as u32;
			let tokens = tokenize(&passage.text);
			let mut tfs: BTreeMap<String, u32> = BTreeMap::new();
			for t in &tokens {
				*tfs.entry(t.clone()).or_insert(0) += 1;
			}
			for (term, tf) in tfs {
				index.postings.entry(term).or_default().push(Posting { doc: ord, tf });
			}
			index.ordinals.insert(passage.id.clone(), ord);
			index.ids.push(passage.id);
			index.texts.push(passage.text);
			index.lengths.push(tokens.len() as u32);
		}
		index.finish();
		Ok(index)
	}

	fn finish(&mut self) {
		self.avg_doc_length = if self.ids.is_empty() {
			0.0
		} else {
			self.lengths.iter().map(|&l| l as f64).sum::<f64>() / self.ids.len() as f64
		};
	}

	pub fn doc_count(&self) -> usize {
		self.ids.len()
	}

	pub fn avg_doc_length(&self) -> f64 {
		self.avg_doc_length
	}

	pub fn doc_length(&self, id: &str) -> Option<usize> {
		self.ordinals.get(id).map(|&o| self.lengths[o as usize] as usize)
	}

	pub fn contains(&self, id: &str) -> bool {
		self.ordinals.contains_key(id)
	}

	pub fn doc_freq(&self, term: &str) -> usize {
		self.postings.get(term).map_or(0, Vec::len)
	}

	/// Postings of `term` as `(passage_id, tf)` in index order.
	pub fn postings(&self, term: &str) -> impl Iterator<Item = (&str, u32)> {
		self.postings.get(term).into_iter().flatten().map(|p| (self.ids[p.doc as usize].as_str(), p.tf))
	}

	pub fn terms(&self) -> impl Iterator<Item = &str> {
		self.postings.keys().map(String::as_str)
	}

	/// Passage ids in insertion order.
	pub fn passage_ids(&self) -> impl Iterator<Item = &str> {
		self.ids.iter().map(String::as_str)
	}

	pub fn idf(&self, term: &str) -> f64 {
		idf(self.doc_count(), self.doc_freq(term))
	}

	fn term_weight(&self, tf: u32, len: u32, params: &Bm25Params) -> f64 {
		let tf = tf as f64;
		let norm = 1.0 - params.b + params.b * len as f64 / self.avg_doc_length;
		tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
	}

	pub fn bm25_score(&self, query: &WeightedQuery, passage_id: &str, params: &Bm25Params) -> Result<f64> {
		let ord = *self.ordinals.get(passage_id).ok_or_else(|| Error::NotFound(format!("passage {passage_id}")))?;
		let len = self.lengths[ord as usize];
		let mut score = 0.0;
		for (term, &w) in &query.weights {
			let Some(list) = self.postings.get(term) else { continue };
			let Ok(pos) = list.binary_search_by_key(&ord, |p| p.doc) else { continue };
			score += w * idf(self.doc_count(), list.len()) * self.term_weight(list[pos].tf, len, params);
		}
		Ok(score)
	}

	/// Top `k` passages with a positive BM25 score.
	pub fn search(&self, query: &WeightedQuery, k: usize, params: &Bm25Params) -> RankedList {
		if k == 0 || self.ids.is_empty() {
			return RankedList::default();
		}
		let mut acc = vec![0.0f64; self.ids.len()];
		for (term, &w) in &query.weights {
			if w <= 0.0 {
				continue;
			}
			let Some(list) = self.postings.get(term) else { continue };
			let idf = idf(self.doc_count(), list.len());
			for p in list {
				acc[p.doc as usize] += w * idf * self.term_weight(p.tf, self.lengths[p.doc as usize], params);
			}
		}
		let mut hits: Vec<(String, f64)> =
			acc.into_iter().enumerate().filter(|(_, s)| *s > 0.0).map(|(d, s)| (self.ids[d].clone(), s)).collect();
		hits.sort_by(rank_order);
		hits.truncate(k);
		RankedList { entries: hits }
	}

	/// RM3 expansion: a relevance model over the top `fb_docs` passages,
	/// truncated to `fb_terms` non-stopword terms and interpolated with the
	/// normalized input query.
	pub fn rm3_expand(&self, query: &WeightedQuery, rm3: &Rm3Params, bm25: &Bm25Params) -> Result<WeightedQuery> {
		self.rm3_expand_from(query, query, rm3, bm25)
	}

	/// RM3 where the feedback passages are retrieved with `feedback_query`
	/// while `query` supplies the original-term distribution.
	pub fn rm3_expand_from(
		&self,
		query: &WeightedQuery,
		feedback_query: &WeightedQuery,
		rm3: &Rm3Params,
		bm25: &Bm25Params,
	) -> Result<WeightedQuery> {
		if !(0.0..=1.0).contains(&rm3.lambda) {
			return Err(Error::InvalidArguments(format!("rm3 lambda {} outside [0, 1]", rm3.lambda)));
		}
		let original = query.normalized();
		if original.is_empty() || rm3.fb_terms == 0 || rm3.fb_docs == 0 {
			return Ok(original);
		}
		let feedback = self.search(feedback_query, rm3.fb_docs, bm25);
		let total: f64 = feedback.entries.iter().map(|(_, s)| s).sum();
		if feedback.is_empty() || total <= 0.0 {
			return Ok(original);
		}

		let mut model: BTreeMap<String, f64> = BTreeMap::new();
		for (id, score) in &feedback.entries {
			let ord = self.ordinals[id] as usize;
			let len = self.lengths[ord] as f64;
			let doc_weight = score / total;
			let mut tfs: BTreeMap<String, u32> = BTreeMap::new();
			for t in tokenize(&self.texts[ord]) {
				*tfs.entry(t).or_insert(0) += 1;
			}
			for (t, tf) in tfs {
				if is_stopword(&t) {
					continue;
				}
				*model.entry(t).or_insert(0.0) += doc_weight * tf as f64 / len;
			}
		}

		let mut ranked: Vec<(String, f64)> = model.into_iter().collect();
		ranked.sort_by(rank_order);
		ranked.truncate(rm3.fb_terms);
		let mass: f64 = ranked.iter().map(|(_, p)| p).sum();
		if mass <= 0.0 {
			return Ok(original);
		}

		let mut mixed: BTreeMap<String, f64> = BTreeMap::new();
		for (t, w) in &original.weights {
			*mixed.entry(t.clone()).or_insert(0.0) += rm3.lambda * w;
		}
		for (t, p) in ranked {
			*mixed.entry(t).or_insert(0.0) += (1.0 - rm3.lambda) * p / mass;
		}
		mixed.retain(|_, w| *w > 0.0);
		Ok(WeightedQuery { weights: mixed }.normalized())
	}

	/// Writes the versioned text serialization: doc table, then postings in
	/// ascending term order.
	pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
		writeln!(w, "{INDEX_MAGIC}")?;
		writeln!(w, "docs\t{}", self.ids.len())?;
		for ((id, len), text) in self.ids.iter().zip(&self.lengths).zip(&self.texts) {
			if text.contains(['\t', '\n', '\r']) {
				return Err(Error::Validation(format!("passage {id} text contains a tab or line break")));
			}
			writeln!(w, "{id}\t{len}\t{text}")?;
		}
		writeln!(w, "terms\t{}", self.postings.len())?;
		for (term, list) in &self.postings {
			write!(w, "{term}\t")?;
			for (i, p) in list.iter().enumerate() {
				if i > 0 {
					write!(w, " ")?;
				}
				write!(w, "{}:{}", p.doc, p.tf)?;
			}
			writeln!(w)?;
		}
		Ok(())
	}

	pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
		let mut lines = reader.lines().enumerate();
		let mut next = |what: &str| -> Result<(usize, String)> {
			match lines.next() {
				Some((n, l)) => Ok((n + 1, l?)),
				None => Err(parse_err(0, format!("unexpected end of index, expected {what}"))),
			}
		};
		let (n, magic) = next("header")?;
		if magic != INDEX_MAGIC {
			return Err(parse_err(n, format!("unsupported index header {magic:?}")));
		}
		let count = |n: usize, line: &str, key: &str| -> Result<usize> {
			line.strip_prefix(key)
				.and_then(|r| r.strip_prefix('\t'))
				.and_then(|r| r.parse().ok())
				.ok_or_else(|| parse_err(n, format!("expected `{key}<TAB>count`")))
		};
		let (n, line) = next("docs")?;
		let docs = count(n, &line, "docs")?;
		let mut index = Self::default();
		for _ in 0..docs {
			let (n, line) = next("doc row")?;
			let mut parts = line.splitn(3, '\t');
			let (Some(id), Some(len), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
				return Err(parse_err(n, "expected `id<TAB>length<TAB>text`"));
			};
			let len: u32 = len.parse().map_err(|_| parse_err(n, "bad doc length"))?;
			if index.ordinals.insert(id.to_string(), index.ids.len() as u32).is_some() {
				return Err(Error::DuplicatePassage(id.to_string()));
			}
			index.ids.push(id.to_string());
			index.lengths.push(len);
			index.texts.push(text.to_string());
		}
		let (n, line) = next("terms")?;
		let terms = count(n, &line, "terms")?;
		for _ in 0..terms {
			let (n, line) = next("postings row")?;
			let (term, rest) = line.split_once('\t').ok_or_else(|| parse_err(n, "expected `term<TAB>postings`"))?;
			let mut list = Vec::new();
			for item in rest.split(' ') {
				let (d, tf) = item.split_once(':').ok_or_else(|| parse_err(n, "bad posting"))?;
				let doc: u32 = d.parse().map_err(|_| parse_err(n, "bad posting doc"))?;
				let tf: u32 = tf.parse().map_err(|_| parse_err(n, "bad posting tf"))?;
				if doc as usize >= index.ids.len() {
					return Err(parse_err(n, format!("posting refers to unknown doc {doc}")));
				}
				list.push(Posting { doc, tf });
			}
			index.postings.insert(term.to_string(), list);
		}
		index.finish();
		Ok(index)
	}
}
