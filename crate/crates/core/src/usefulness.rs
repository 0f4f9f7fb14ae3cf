//! Usefulness of a clarifying question and its answer: the four-class
//! label, the feature-based linear classifier, and the expansion dispatch
//! the label drives.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::evaluation::{macro_f1_and_accuracy, stratified_kfold_split};
use crate::rewriter::{expand, RewriteBackend};
use crate::text::{is_stopword, tokenize};

/// Which parts of a clarifying exchange carry useful information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum UsefulnessLabel {
	Neither = 0,
	Question = 1,
	Answer = 2,
	Both = 3,
}

impl UsefulnessLabel {
	pub const ALL: [Self; 4] = [Self::Neither, Self::Question, Self::Answer, Self::Both];

	pub fn value(self) -> u8 {
		self as u8
	}

	pub fn name(self) -> &'static str {
		match self {
			Self::Neither => "neither",
			Self::Question => "question",
			Self::Answer => "answer",
			Self::Both => "both",
		}
	}
}

impl From<UsefulnessLabel> for u8 {
	fn from(l: UsefulnessLabel) -> u8 {
		l.value()
	}
}

impl TryFrom<u8> for UsefulnessLabel {
	type Error = Error;

	fn try_from(v: u8) -> Result<Self> {
		Self::ALL
			.get(v as usize)
			.copied()
			.ok_or_else(|| Error::InvalidArguments(format!("usefulness label {v} not in 0..=3")))
	}
}

impl fmt::Display for UsefulnessLabel {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		write!(f, "{}", self.value())
	}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
	Affirmative,
	Negative,
	Other,
}

pub const AFFIRMATIONS: [&str; 7] = ["yes", "yeah", "yep", "sure", "correct", "right", "exactly"];
pub const NEGATIONS: [&str; 4] = ["no", "nope", "not", "nah"];

/// Affirmation and negation word lists used for polarity detection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
	pub affirmations: Vec<String>,
	pub negations: Vec<String>,
}

impl Default for Lexicon {
	fn default() -> Self {
		Self {
			affirmations: AFFIRMATIONS.iter().map(|s| s.to_string()).collect(),
			negations: NEGATIONS.iter().map(|s| s.to_string()).collect(),
		}
	}
}

impl Lexicon {
	/// Reads `affirmative \t word` / `negative \t word` lines.
	pub fn read<R: BufRead>(reader: R) -> Result<Self> {
		let mut lex = Self { affirmations: Vec::new(), negations: Vec::new() };
		for (n, line) in reader.lines().enumerate() {
			let line = line?;
			if line.trim().is_empty() {
				continue;
			}
			let (kind, word) = line.split_once('\t').ok_or_else(|| parse_err(n + 1, "expected `kind \\t word`"))?;
			let word = word.trim().to_lowercase();
			if tokenize(&word) != [word.clone()] {
				return Err(parse_err(n + 1, format!("lexicon entry {word:?} is not a single token")));
			}
			match kind {
				"affirmative" => lex.affirmations.push(word),
				"negative" => lex.negations.push(word),
				other => return Err(parse_err(n + 1, format!("unknown polarity {other:?}"))),
			}
		}
		Ok(lex)
	}

	fn is_polarity_word(&self, t: &str) -> bool {
		self.affirmations.iter().chain(&self.negations).any(|w| w == t)
	}

	/// Polarity from the first non-stopword token of the answer.
	pub fn polarity(&self, answer: &str) -> Polarity {
		match tokenize(answer).into_iter().find(|t| !is_stopword(t)) {
			Some(t) if self.affirmations.contains(&t) => Polarity::Affirmative,
			Some(t) if self.negations.contains(&t) => Polarity::Negative,
			_ => Polarity::Other,
		}
	}
}

/// Polarity under the default lexicon.
pub fn detect_polarity(answer: &str) -> Polarity {
	Lexicon::default().polarity(answer)
}

/// One annotated (query, question, answer) triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedExample {
	pub query: String,
	pub question: String,
	pub answer: String,
	pub label: UsefulnessLabel,
}

impl AnnotatedExample {
	pub fn new(query: &str, question: &str, answer: &str, label: UsefulnessLabel) -> Result<Self> {
		if [query, question, answer].iter().any(|s| s.trim().is_empty()) {
			return Err(Error::InvalidArguments("annotated example texts must be non-empty".into()));
		}
		Ok(Self { query: query.into(), question: question.into(), answer: answer.into(), label })
	}
}

/// Reads a `label \t query \t question \t answer` annotation file.
pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<AnnotatedExample>> {
	let mut out = Vec::new();
	for (n, line) in reader.lines().enumerate() {
		let line = line?;
		if line.trim().is_empty() {
			continue;
		}
		let cols: Vec<&str> = line.split('\t').collect();
		let [label, query, question, answer] = cols[..] else {
			return Err(parse_err(n + 1, format!("expected 4 columns, found {}", cols.len())));
		};
		let label = label
			.parse::<u8>()
			.ok()
			.and_then(|v| UsefulnessLabel::try_from(v).ok())
			.ok_or_else(|| parse_err(n + 1, format!("label {label:?} not in 0..=3")))?;
		out.push(AnnotatedExample::new(query, question, answer, label).map_err(|e| parse_err(n + 1, e.to_string()))?);
	}
	Ok(out)
}

pub fn write_annotations(examples: &[AnnotatedExample]) -> Result<String> {
	let mut out = String::new();
	for e in examples {
		for field in [&e.query, &e.question, &e.answer] {
			if field.contains(['\t', '\n', '\r']) {
				return Err(Error::Validation(format!("annotation field {field:?} contains a tab or line break")));
			}
		}
		out.push_str(&format!("{}\t{}\t{}\t{}\n", e.label, e.query, e.question, e.answer));
	}
	Ok(out)
}

/// Hand-built features of a clarifying exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
	pub answer_polarity: Polarity,
	pub answer_token_count: usize,
	/// Non-stopword, non-polarity answer tokens found in neither the query
	/// nor the question.
	pub answer_novel_content_tokens: usize,
	/// Share of distinct question tokens that also occur in the query.
	pub question_query_overlap: f64,
	pub starts_affirmative_then_content: bool,
	pub starts_negative_then_content: bool,
}

pub fn extract_features(query: &str, question: &str, answer: &str) -> Result<FeatureVector> {
	extract_features_with(query, question, answer, &Lexicon::default())
}

pub fn extract_features_with(query: &str, question: &str, answer: &str, lexicon: &Lexicon) -> Result<FeatureVector> {
	if [query, question, answer].iter().any(|s| s.trim().is_empty()) {
		return Err(Error::InvalidArguments("feature extraction needs non-empty query, question and answer".into()));
	}
	let query_tokens: HashSet<String> = tokenize(query).into_iter().collect();
	let question_tokens: HashSet<String> = tokenize(question).into_iter().collect();
	let answer_tokens = tokenize(answer);

	let novel = answer_tokens
		.iter()
		.filter(|t| !is_stopword(t) && !lexicon.is_polarity_word(t))
		.filter(|t| !query_tokens.contains(*t) && !question_tokens.contains(*t))
		.count();
	let overlap = if question_tokens.is_empty() {
		0.0
	} else {
		question_tokens.intersection(&query_tokens).count() as f64 / question_tokens.len() as f64
	};
	let polarity = lexicon.polarity(answer);
	Ok(FeatureVector {
		answer_polarity: polarity,
		answer_token_count: answer_tokens.len(),
		answer_novel_content_tokens: novel,
		question_query_overlap: overlap,
		starts_affirmative_then_content: polarity == Polarity::Affirmative && novel > 0,
		starts_negative_then_content: polarity == Polarity::Negative && novel > 0,
	})
}

const DIM: usize = 8;

impl FeatureVector {
	/// Dense design row fed to the linear model.
	fn design(&self) -> [f64; DIM] {
		let b = |x: bool| if x { 1.0 } else { 0.0 };
		[
			b(self.answer_polarity == Polarity::Affirmative),
			b(self.answer_polarity == Polarity::Negative),
			(self.answer_token_count as f64).ln_1p(),
			(self.answer_novel_content_tokens as f64).ln_1p(),
			b(self.answer_novel_content_tokens > 0),
			self.question_query_overlap,
			b(self.starts_affirmative_then_content),
			b(self.starts_negative_then_content),
		]
	}
}

/// Predicts the usefulness label of a clarifying exchange.
pub trait UsefulnessClassifier: Send + Sync {
	fn identity(&self) -> String;
	fn classify(&self, query: &str, question: &str, answer: &str) -> Result<UsefulnessLabel>;
}

/// Optimizer settings for [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
	pub folds: usize,
	pub seed: u64,
	pub epochs: usize,
	pub learning_rate: f64,
	pub l2: f64,
}

impl Default for TrainConfig {
	fn default() -> Self {
		Self { folds: 5, seed: 13, epochs: 600, learning_rate: 0.5, l2: 1e-3 }
	}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
	pub macro_f1: f64,
	pub accuracy: f64,
}

/// Cross-validation results of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
	pub folds: Vec<FoldScore>,
	pub mean_macro_f1: f64,
	pub mean_accuracy: f64,
	pub class_counts: BTreeMap<u8, usize>,
	pub config: TrainConfig,
}

/// Multinomial logistic regression over standardized [`FeatureVector`]s.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsefulnessModel {
	weights: Vec<[f64; DIM]>,
	bias: Vec<f64>,
	mean: Vec<f64>,
	scale: Vec<f64>,
	report: Option<TrainReport>,
	#[serde(default)]
	lexicon: Lexicon,
}

pub const LINEAR_CLASSIFIER_ID: &str = "linear-features";

impl UsefulnessModel {
	pub fn is_trained(&self) -> bool {
		self.weights.len() == 4
	}

	pub fn report(&self) -> Option<&TrainReport> {
		self.report.as_ref()
	}

	pub fn lexicon(&self) -> &Lexicon {
		&self.lexicon
	}

	fn standardize(&self, row: [f64; DIM]) -> [f64; DIM] {
		let mut out = row;
		for (j, v) in out.iter_mut().enumerate() {
			*v = (*v - self.mean[j]) / self.scale[j];
		}
		out
	}

	fn class_scores(&self, row: &[f64; DIM]) -> [f64; 4] {
		let mut s = [0.0; 4];
		for (c, score) in s.iter_mut().enumerate() {
			*score = self.bias[c] + self.weights[c].iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
		}
		s
	}

	pub fn predict_features(&self, features: &FeatureVector) -> Result<UsefulnessLabel> {
		if !self.is_trained() {
			return Err(Error::Contract("usefulness model is untrained".into()));
		}
		Ok(self.predict_features_row(&features.design()))
	}

	/// Argmax over class scores; ties go to the lower label.
	fn predict_features_row(&self, row: &[f64; DIM]) -> UsefulnessLabel {
		let scores = self.class_scores(&self.standardize(*row));
		let mut best = 0;
		for c in 1..4 {
			if scores[c] > scores[best] {
				best = c;
			}
		}
		UsefulnessLabel::ALL[best]
	}

	pub fn classify(&self, query: &str, question: &str, answer: &str) -> Result<UsefulnessLabel> {
		if !self.is_trained() {
			return Err(Error::Contract("usefulness model is untrained".into()));
		}
		self.predict_features(&extract_features_with(query, question, answer, &self.lexicon)?)
	}

	/// Fits on already extracted design rows with full-batch gradient descent.
	fn fit(rows: &[[f64; DIM]], labels: &[UsefulnessLabel], config: &TrainConfig, lexicon: &Lexicon) -> Self {
		let n = rows.len() as f64;
		let mut mean = vec![0.0; DIM];
		let mut scale = vec![1.0; DIM];
		for j in 0..DIM {
			mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
			let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
			if var > 1e-12 {
				scale[j] = var.sqrt();
			}
		}
		let mut model = Self {
			weights: vec![[0.0; DIM]; 4],
			bias: vec![0.0; 4],
			mean,
			scale,
			report: None,
			lexicon: lexicon.clone(),
		};
		let xs: Vec<[f64; DIM]> = rows.iter().map(|r| model.standardize(*r)).collect();

		for _ in 0..config.epochs {
			let mut grad_w = [[0.0; DIM]; 4];
			let mut grad_b = [0.0; 4];
			for (x, y) in xs.iter().zip(labels) {
				let s = model.class_scores(x);
				let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
				let exp: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
				let z: f64 = exp.iter().sum();
				for c in 0..4 {
					let err = exp[c] / z - if c == y.value() as usize { 1.0 } else { 0.0 };
					grad_b[c] += err;
					for j in 0..DIM {
						grad_w[c][j] += err * x[j];
					}
				}
			}
			for c in 0..4 {
				model.bias[c] -= config.learning_rate * grad_b[c] / n;
				for j in 0..DIM {
					let g = grad_w[c][j] / n + config.l2 * model.weights[c][j];
					model.weights[c][j] -= config.learning_rate * g;
				}
			}
		}
		model
	}
}

impl UsefulnessClassifier for UsefulnessModel {
	fn identity(&self) -> String {
		LINEAR_CLASSIFIER_ID.to_string()
	}

	fn classify(&self, query: &str, question: &str, answer: &str) -> Result<UsefulnessLabel> {
		UsefulnessModel::classify(self, query, question, answer)
	}
}

/// Stratified k-fold evaluation followed by a final fit on every example.
pub fn train(examples: &[AnnotatedExample], config: &TrainConfig) -> Result<(UsefulnessModel, TrainReport)> {
	train_with(examples, config, &Lexicon::default())
}

/// [`train`] with a custom polarity lexicon, which the model keeps.
pub fn train_with(
	examples: &[AnnotatedExample],
	config: &TrainConfig,
	lexicon: &Lexicon,
) -> Result<(UsefulnessModel, TrainReport)> {
	let labels: Vec<UsefulnessLabel> = examples.iter().map(|e| e.label).collect();
	let mut class_counts: BTreeMap<u8, usize> = BTreeMap::new();
	for l in &labels {
		*class_counts.entry(l.value()).or_insert(0) += 1;
	}
	for l in UsefulnessLabel::ALL {
		let count = class_counts.get(&l.value()).copied().unwrap_or(0);
		if count < config.folds {
			return Err(Error::Stratification(format!(
				"class {l} has {count} examples, fewer than {} folds",
				config.folds
			)));
		}
	}
	let rows: Vec<[f64; DIM]> = examples
		.iter()
		.map(|e| extract_features_with(&e.query, &e.question, &e.answer, lexicon).map(|f| f.design()))
		.collect::<Result<_>>()?;

	let mut folds = Vec::new();
	for (train_idx, test_idx) in stratified_kfold_split(&labels, config.folds, config.seed)? {
		let fold_rows: Vec<_> = train_idx.iter().map(|&i| rows[i]).collect();
		let fold_labels: Vec<_> = train_idx.iter().map(|&i| labels[i]).collect();
		let model = UsefulnessModel::fit(&fold_rows, &fold_labels, config, lexicon);
		let truth: Vec<u8> = test_idx.iter().map(|&i| labels[i].value()).collect();
		let predicted: Vec<u8> = test_idx.iter().map(|&i| model.predict_features_row(&rows[i]).value()).collect();
		let (macro_f1, accuracy) = macro_f1_and_accuracy(&truth, &predicted);
		folds.push(FoldScore { macro_f1, accuracy });
	}
	let k = folds.len() as f64;
	let report = TrainReport {
		mean_macro_f1: folds.iter().map(|f| f.macro_f1).sum::<f64>() / k,
		mean_accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / k,
		folds,
		class_counts,
		config: *config,
	};
	let mut model = UsefulnessModel::fit(&rows, &labels, config, lexicon);
	model.report = Some(report.clone());
	Ok((model, report))
}

/// Builds the final query from the label: 0 keeps `resolved`, 1 adds the
/// question, 2 the answer, 3 both.
pub fn dispatch_expansion(
	label: UsefulnessLabel,
	resolved: &str,
	question: &str,
	answer: &str,
	expander: &dyn RewriteBackend,
) -> Result<String> {
	if resolved.trim().is_empty() {
		return Err(Error::InvalidArguments("resolved query is empty".into()));
	}
	match label {
		UsefulnessLabel::Neither => Ok(resolved.to_string()),
		UsefulnessLabel::Question => expand(expander, resolved, Some(question), None),
		UsefulnessLabel::Answer => expand(expander, resolved, None, Some(answer)),
		UsefulnessLabel::Both => expand(expander, resolved, Some(question), Some(answer)),
	}
}
