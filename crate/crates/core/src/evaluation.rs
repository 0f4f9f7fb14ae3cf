//! TREC-style run/qrels handling, ranking metrics, classifier metrics,
//! inter-annotator agreement and stratified k-fold splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;
use std::io::BufRead;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::retrieval::RankedList;

/// Graded judgments keyed by turn then passage. Insertion order is kept so
/// canonical files round-trip.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
	rows: Vec<(String, String, u32)>,
	judgments: BTreeMap<String, HashMap<String, u32>>,
}

impl Qrels {
	pub fn insert(&mut self, turn: &str, passage: &str, grade: u32) -> Result<()> {
		let by_turn = self.judgments.entry(turn.to_string()).or_default();
		if by_turn.insert(passage.to_string(), grade).is_some() {
			return Err(Error::Validation(format!("duplicate judgment for ({turn}, {passage})")));
		}
		self.rows.push((turn.to_string(), passage.to_string(), grade));
		Ok(())
	}

	pub fn grade(&self, turn: &str, passage: &str) -> Option<u32> {
		self.judgments.get(turn)?.get(passage).copied()
	}

	pub fn turn(&self, turn: &str) -> Option<&HashMap<String, u32>> {
		self.judgments.get(turn)
	}

	pub fn turns(&self) -> impl Iterator<Item = &str> {
		self.judgments.keys().map(String::as_str)
	}

	pub fn len(&self) -> usize {
		self.rows.len()
	}

	pub fn is_empty(&self) -> bool {
		self.rows.is_empty()
	}
}

/// Reads `topic_turn_id iteration passage_id grade` rows, any whitespace.
pub fn read_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
	let mut qrels = Qrels::default();
	for (n, line) in reader.lines().enumerate() {
		let line = line?;
		let cols: Vec<&str> = line.split_whitespace().collect();
		if cols.is_empty() {
			continue;
		}
		let [turn, _, passage, grade] = cols[..] else {
			return Err(parse_err(n + 1, format!("expected 4 qrels fields, found {}", cols.len())));
		};
		let grade: u32 =
			grade.parse().map_err(|_| parse_err(n + 1, format!("grade {grade:?} is not a non-negative integer")))?;
		qrels.insert(turn, passage, grade).map_err(|e| parse_err(n + 1, e.to_string()))?;
	}
	Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels) -> String {
	qrels.rows.iter().map(|(t, p, g)| format!("{t} 0 {p} {g}\n")).collect()
}

/// One row of a TREC run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
	pub topic_turn_id: String,
	pub passage_id: String,
	pub rank: u32,
	pub score: f64,
	pub run_id: String,
}

/// Validated run: within each turn ranks run 1..n and scores never increase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
	records: Vec<RunRecord>,
}

impl Run {
	pub fn new(records: Vec<RunRecord>) -> Result<Self> {
		let mut last: HashMap<&str, (u32, f64)> = HashMap::new();
		for r in &records {
			for (what, v) in [("turn id", &r.topic_turn_id), ("passage id", &r.passage_id), ("run id", &r.run_id)] {
				if v.is_empty() || v.chars().any(char::is_whitespace) {
					return Err(Error::Validation(format!("{what} {v:?} must be non-empty without whitespace")));
				}
			}
			if !r.score.is_finite() {
				return Err(Error::Validation(format!("non-finite score for {} in {}", r.passage_id, r.topic_turn_id)));
			}
			let (prev_rank, prev_score) = last.get(r.topic_turn_id.as_str()).copied().unwrap_or((0, f64::INFINITY));
			if r.rank != prev_rank + 1 {
				return Err(Error::Validation(format!(
					"rank gap in {}: expected {}, found {}",
					r.topic_turn_id,
					prev_rank + 1,
					r.rank
				)));
			}
			if r.score > prev_score {
				return Err(Error::Validation(format!("scores increase at rank {} of {}", r.rank, r.topic_turn_id)));
			}
			last.insert(&r.topic_turn_id, (r.rank, r.score));
		}
		Ok(Self { records })
	}

	/// Builds a run from per-turn rankings.
	pub fn from_rankings<'a>(
		run_id: &str,
		rankings: impl IntoIterator<Item = (&'a str, &'a RankedList)>,
	) -> Result<Self> {
		let mut records = Vec::new();
		for (turn, list) in rankings {
			for (i, (pid, score)) in list.entries().iter().enumerate() {
				records.push(RunRecord {
					topic_turn_id: turn.to_string(),
					passage_id: pid.clone(),
					rank: i as u32 + 1,
					score: *score,
					run_id: run_id.to_string(),
				});
			}
		}
		Self::new(records)
	}

	pub fn records(&self) -> &[RunRecord] {
		&self.records
	}

	/// Passage ids per turn in rank order.
	pub fn rankings(&self) -> BTreeMap<&str, Vec<&str>> {
		let mut out: BTreeMap<&str, Vec<(u32, &str)>> = BTreeMap::new();
		for r in &self.records {
			out.entry(&r.topic_turn_id).or_default().push((r.rank, &r.passage_id));
		}
		out.into_iter()
			.map(|(t, mut v)| {
				v.sort_by_key(|(rank, _)| *rank);
				(t, v.into_iter().map(|(_, p)| p).collect())
			})
			.collect()
	}
}

/// Reads a run file; fields may be separated by any whitespace.
pub fn read_run<R: BufRead>(reader: R) -> Result<Run> {
	let mut records = Vec::new();
	for (n, line) in reader.lines().enumerate() {
		let line = line?;
		let cols: Vec<&str> = line.split_whitespace().collect();
		if cols.is_empty() {
			continue;
		}
		let [turn, _, passage, rank, score, run_id] = cols[..] else {
			return Err(parse_err(n + 1, format!("expected 6 run fields, found {}", cols.len())));
		};
		records.push(RunRecord {
			topic_turn_id: turn.into(),
			passage_id: passage.into(),
			rank: rank.parse().map_err(|_| parse_err(n + 1, format!("bad rank {rank:?}")))?,
			score: score.parse().map_err(|_| parse_err(n + 1, format!("bad score {score:?}")))?,
			run_id: run_id.into(),
		});
	}
	Run::new(records)
}

/// Canonical TREC run text: `turn Q0 passage rank score run_id`, score with
/// six decimals.
pub fn write_run(run: &Run) -> String {
	let mut out = String::new();
	for r in &run.records {
		out.push_str(&format!("{} Q0 {} {} {:.6} {}\n", r.topic_turn_id, r.passage_id, r.rank, r.score, r.run_id));
	}
	out
}

fn is_token(s: &str) -> bool {
	!s.is_empty() && !s.chars().any(char::is_whitespace)
}

fn is_fixed6(s: &str) -> bool {
	let digits = s.strip_prefix('-').unwrap_or(s);
	match digits.split_once('.') {
		Some((int, frac)) => {
			!int.is_empty()
				&& int.bytes().all(|b| b.is_ascii_digit())
				&& (int == "0" || !int.starts_with('0'))
				&& frac.len() == 6
				&& frac.bytes().all(|b| b.is_ascii_digit())
		}
		None => false,
	}
}

/// Checks every line against the exact canonical grammar (single spaces,
/// literal `Q0`, positive rank, six-decimal score, LF endings).
pub fn validate_run_text(text: &str) -> Result<()> {
	if !text.is_empty() && !text.ends_with('\n') {
		return Err(Error::Validation("run file must end with a line feed".into()));
	}
	for (n, line) in text.lines().enumerate() {
		let cols: Vec<&str> = line.split(' ').collect();
		let ok = cols.len() == 6
			&& is_token(cols[0])
			&& cols[1] == "Q0"
			&& is_token(cols[2])
			&& cols[3].parse::<u32>().is_ok_and(|r| r >= 1 && cols[3] == r.to_string())
			&& is_fixed6(cols[4])
			&& is_token(cols[5])
			&& !line.contains(['\r', '\t']);
		if !ok {
			return Err(parse_err(n + 1, format!("not a canonical run line: {line:?}")));
		}
	}
	read_run(text.as_bytes()).map(|_| ())
}

/// Gain applied to grades in DCG.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
	#[default]
	Linear,
	Exponential,
}

impl Gain {
	fn apply(self, grade: u32) -> f64 {
		match self {
			Self::Linear => grade as f64,
			Self::Exponential => 2f64.powi(grade as i32) - 1.0,
		}
	}
}

/// Per-turn metric primitives over a ranked id list and its judgments.
pub mod per_turn {
	use super::*;

	fn relevant_count(judged: &HashMap<String, u32>, threshold: u32) -> usize {
		judged.values().filter(|&&g| g >= threshold).count()
	}

	fn is_rel(judged: &HashMap<String, u32>, id: &str, threshold: u32) -> bool {
		judged.get(id).is_some_and(|&g| g >= threshold)
	}

	/// None when the turn has no relevant passages.
	pub fn recall_at_k(ranked: &[&str], judged: &HashMap<String, u32>, k: usize, threshold: u32) -> Option<f64> {
		let total = relevant_count(judged, threshold);
		if total == 0 {
			return None;
		}
		let hits = ranked.iter().take(k).filter(|id| is_rel(judged, id, threshold)).count();
		Some(hits as f64 / total as f64)
	}

	pub fn average_precision(ranked: &[&str], judged: &HashMap<String, u32>, threshold: u32) -> f64 {
		let total = relevant_count(judged, threshold);
		if total == 0 {
			return 0.0;
		}
		let mut hits = 0;
		let mut sum = 0.0;
		for (i, id) in ranked.iter().enumerate() {
			if is_rel(judged, id, threshold) {
				hits += 1;
				sum += hits as f64 / (i + 1) as f64;
			}
		}
		sum / total as f64
	}

	pub fn reciprocal_rank(ranked: &[&str], judged: &HashMap<String, u32>, threshold: u32) -> f64 {
		ranked.iter().position(|id| is_rel(judged, id, threshold)).map_or(0.0, |i| 1.0 / (i + 1) as f64)
	}

	/// None when the ideal DCG is zero.
	pub fn ndcg(ranked: &[&str], judged: &HashMap<String, u32>, k: Option<usize>, gain: Gain) -> Option<f64> {
		let depth = k.unwrap_or(usize::MAX);
		let dcg: f64 = ranked
			.iter()
			.take(depth)
			.enumerate()
			.map(|(i, id)| gain.apply(judged.get(*id).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
			.sum();
		let mut grades: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
		grades.sort_unstable_by(|a, b| b.cmp(a));
		let idcg: f64 =
			grades.iter().take(depth).enumerate().map(|(i, &g)| gain.apply(g) / ((i + 2) as f64).log2()).sum();
		(idcg > 0.0).then(|| dcg / idcg)
	}
}

/// A ranking metric by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
	RecallAt(usize),
	Map,
	Mrr,
	Ndcg,
	NdcgAt(usize),
}

impl fmt::Display for Metric {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		match self {
			Self::RecallAt(k) => write!(f, "R@{k}"),
			Self::Map => write!(f, "MAP"),
			Self::Mrr => write!(f, "MRR"),
			Self::Ndcg => write!(f, "nDCG"),
			Self::NdcgAt(k) => write!(f, "nDCG@{k}"),
		}
	}
}

impl FromStr for Metric {
	type Err = Error;

	fn from_str(s: &str) -> Result<Self> {
		let lower = s.trim().to_ascii_lowercase();
		let cutoff = |rest: &str| -> Result<usize> {
			rest.parse()
				.ok()
				.filter(|&k| k >= 1)
				.ok_or_else(|| Error::InvalidArguments(format!("bad cutoff in metric {s:?}")))
		};
		match lower.as_str() {
			"map" => Ok(Self::Map),
			"mrr" => Ok(Self::Mrr),
			"ndcg" => Ok(Self::Ndcg),
			_ => {
				if let Some(rest) = lower.strip_prefix("ndcg@") {
					Ok(Self::NdcgAt(cutoff(rest)?))
				} else if let Some(rest) = lower.strip_prefix("r@").or_else(|| lower.strip_prefix("recall@")) {
					Ok(Self::RecallAt(cutoff(rest)?))
				} else {
					Err(Error::InvalidArguments(format!("unknown metric {s:?}")))
				}
			}
		}
	}
}

pub fn parse_metrics(list: &str) -> Result<Vec<Metric>> {
	list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// Evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
	/// Minimum grade counted as relevant by binary metrics.
	pub rel_threshold: u32,
	pub gain: Gain,
}

impl Default for EvalOptions {
	fn default() -> Self {
		Self { rel_threshold: 1, gain: Gain::Linear }
	}
}

/// Per-turn and mean metric values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
	pub per_turn: BTreeMap<String, BTreeMap<String, f64>>,
	pub mean: BTreeMap<String, f64>,
	/// Turns in the run with no judgments; not averaged.
	pub skipped_turns: Vec<String>,
	/// Turns whose ideal DCG is zero; their nDCG is reported as 0.
	pub zero_ideal_turns: Vec<String>,
}

impl MetricReport {
	pub fn mean_of(&self, metric: Metric) -> Option<f64> {
		self.mean.get(&metric.to_string()).copied()
	}

	pub fn turn_value(&self, turn: &str, metric: Metric) -> Option<f64> {
		self.per_turn.get(turn)?.get(&metric.to_string()).copied()
	}
}

/// Evaluates `run` against `qrels` over the turns present in both.
pub fn evaluate(run: &Run, qrels: &Qrels, metrics: &[Metric], opts: &EvalOptions) -> MetricReport {
	let mut report = MetricReport::default();
	let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
	let mut zero_ideal = BTreeSet::new();
	for (turn, ranked) in run.rankings() {
		let Some(judged) = qrels.turn(turn) else {
			report.skipped_turns.push(turn.to_string());
			continue;
		};
		let values = report.per_turn.entry(turn.to_string()).or_default();
		for &m in metrics {
			let v = match m {
				Metric::RecallAt(k) => per_turn::recall_at_k(&ranked, judged, k, opts.rel_threshold),
				Metric::Map => Some(per_turn::average_precision(&ranked, judged, opts.rel_threshold)),
				Metric::Mrr => Some(per_turn::reciprocal_rank(&ranked, judged, opts.rel_threshold)),
				Metric::Ndcg | Metric::NdcgAt(_) => {
					let k = if let Metric::NdcgAt(k) = m { Some(k) } else { None };
					Some(per_turn::ndcg(&ranked, judged, k, opts.gain).unwrap_or_else(|| {
						zero_ideal.insert(turn.to_string());
						0.0
					}))
				}
			};
			if let Some(v) = v {
				values.insert(m.to_string(), v);
				let e = sums.entry(m.to_string()).or_insert((0.0, 0));
				e.0 += v;
				e.1 += 1;
			}
		}
	}
	report.mean = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
	report.zero_ideal_turns = zero_ideal.into_iter().collect();
	report
}

/// Per-turn recall@k (turns without relevant passages omitted).
pub fn recall_at_k(run: &Run, qrels: &Qrels, k: usize, rel_threshold: u32) -> BTreeMap<String, f64> {
	let opts = EvalOptions { rel_threshold, ..Default::default() };
	let m = Metric::RecallAt(k);
	evaluate(run, qrels, &[m], &opts)
		.per_turn
		.into_iter()
		.filter_map(|(t, v)| v.get(&m.to_string()).map(|x| (t, *x)))
		.collect()
}

pub fn mean_average_precision(run: &Run, qrels: &Qrels, rel_threshold: u32) -> f64 {
	let opts = EvalOptions { rel_threshold, ..Default::default() };
	evaluate(run, qrels, &[Metric::Map], &opts).mean_of(Metric::Map).unwrap_or(0.0)
}

pub fn mrr(run: &Run, qrels: &Qrels, rel_threshold: u32) -> f64 {
	let opts = EvalOptions { rel_threshold, ..Default::default() };
	evaluate(run, qrels, &[Metric::Mrr], &opts).mean_of(Metric::Mrr).unwrap_or(0.0)
}

pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: Option<usize>) -> f64 {
	let m = k.map_or(Metric::Ndcg, Metric::NdcgAt);
	evaluate(run, qrels, &[m], &EvalOptions::default()).mean_of(m).unwrap_or(0.0)
}

/// Macro-F1 over the classes present in `truth`, and accuracy.
pub fn macro_f1_and_accuracy<T: Ord + Copy>(truth: &[T], predicted: &[T]) -> (f64, f64) {
	assert_eq!(truth.len(), predicted.len(), "label lists differ in length");
	if truth.is_empty() {
		return (0.0, 0.0);
	}
	let classes: BTreeSet<T> = truth.iter().copied().collect();
	let mut f1_sum = 0.0;
	for &c in &classes {
		let tp = truth.iter().zip(predicted).filter(|(t, p)| **t == c && **p == c).count() as f64;
		let fp = truth.iter().zip(predicted).filter(|(t, p)| **t != c && **p == c).count() as f64;
		let fn_ = truth.iter().zip(predicted).filter(|(t, p)| **t == c && **p != c).count() as f64;
		let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
		let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
		if precision + recall > 0.0 {
			f1_sum += 2.0 * precision * recall / (precision + recall);
		}
	}
	let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count() as f64;
	(f1_sum / classes.len() as f64, correct / truth.len() as f64)
}

/// Chance-corrected agreement between two annotators.
pub fn cohens_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
	if a.len() != b.len() || a.is_empty() {
		return Err(Error::InvalidArguments(format!(
			"kappa needs equal non-empty label lists ({} vs {})",
			a.len(),
			b.len()
		)));
	}
	let n = a.len() as f64;
	let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
	let mut counts: HashMap<&T, (f64, f64)> = HashMap::new();
	for x in a {
		counts.entry(x).or_default().0 += 1.0;
	}
	for y in b {
		counts.entry(y).or_default().1 += 1.0;
	}
	let expected: f64 = counts.values().map(|(ca, cb)| (ca / n) * (cb / n)).sum();
	if (1.0 - expected).abs() < f64::EPSILON {
		return Ok(if observed >= 1.0 { 1.0 } else { 0.0 });
	}
	Ok((observed - expected) / (1.0 - expected))
}

/// Stratified k-fold: each class is shuffled with `seed` and dealt
/// round-robin, continuing from where the previous class stopped, so
/// per-class fold counts differ by at most one. Returns `(train, test)`
/// index sets, ascending.
pub fn stratified_kfold_split<T: Ord + Clone>(
	labels: &[T],
	folds: usize,
	seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
	if folds < 2 || folds > labels.len() {
		return Err(Error::InvalidArguments(format!("cannot make {folds} folds from {} items", labels.len())));
	}
	let mut by_class: BTreeMap<T, Vec<usize>> = BTreeMap::new();
	for (i, l) in labels.iter().enumerate() {
		by_class.entry(l.clone()).or_default().push(i);
	}
	let mut rng = ChaCha8Rng::seed_from_u64(seed);
	let mut tests = vec![Vec::new(); folds];
	let mut next = 0;
	for (_, mut idx) in by_class {
		idx.shuffle(&mut rng);
		for i in idx {
			tests[next % folds].push(i);
			next += 1;
		}
	}
	Ok(tests
		.into_iter()
		.map(|mut test| {
			test.sort_unstable();
			let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
			(train, test)
		})
		.collect())
}
