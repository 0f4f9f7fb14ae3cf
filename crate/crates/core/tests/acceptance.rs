//! Acceptance suite. Runs each criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.
//!
//!     cargo test --test acceptance

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clarify_rank::clarification::{filter_pool, FilterRules};
use clarify_rank::conversation::ConversationHistory;
use clarify_rank::conversation::ScriptedTopic;
use clarify_rank::evaluation::{
	cohens_kappa, evaluate, macro_f1_and_accuracy, read_qrels, read_run, validate_run_text, write_qrels, write_run,
	EvalOptions, Gain, Metric, Qrels, Run, RunRecord,
};
use clarify_rank::pipeline::{BatchOutput, Engine, Mode};
use clarify_rank::reranker::{
	aggregate_preferences, rerank_pairwise, rerank_pointwise, LogisticPairwise, PairwiseScorer, PointwiseScorer,
};
use clarify_rank::retrieval::{Bm25Params, InvertedIndex, Passage, RankedList, Rm3Params, WeightedQuery};
use clarify_rank::rewriter::{FallbackRewriter, RewriteBackend};
use clarify_rank::synthetic::{self, Stratum, SyntheticWorld};
use clarify_rank::text::STOPWORDS;
use clarify_rank::usefulness::{dispatch_expansion, read_annotations, train, TrainConfig, UsefulnessLabel};
use clarify_rank::Result;

type Check = std::result::Result<String, String>;

macro_rules! ensure {
	($cond:expr, $($msg:tt)+) => {
		if !$cond {
			return Err(format!($($msg)+));
		}
	};
}

fn within(budget: Duration, start: Instant) -> Check {
	let took = start.elapsed();
	if took > budget {
		return Err(format!("took {:.2}s, budget {:.0}s", took.as_secs_f64(), budget.as_secs_f64()));
	}
	Ok(format!("{:.2}s", took.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 1. dispatch

/// Echoes its arguments so the routing of each case is observable.
struct Recorder;

impl RewriteBackend for Recorder {
	fn identity(&self) -> String {
		"recorder".into()
	}
	fn supports_resolve(&self) -> bool {
		false
	}
	fn supports_expand(&self) -> bool {
		true
	}
	fn resolve(&self, _: &str, _: &ConversationHistory) -> Result<String> {
		unreachable!()
	}
	fn expand(&self, resolved: &str, question: Option<&str>, answer: Option<&str>) -> Result<String> {
		Ok(format!("phi[{resolved}|{question:?}|{answer:?}]"))
	}
}

fn oracle_tokens(text: &str) -> Vec<String> {
	text.split(|c: char| !c.is_alphanumeric()).filter(|s| !s.is_empty()).map(str::to_lowercase).collect()
}

/// Appends context tokens that are not stopwords and not yet present.
fn oracle_expand(resolved: &str, contexts: &[&str]) -> String {
	let mut seen: HashSet<String> = oracle_tokens(resolved).into_iter().collect();
	let mut added = Vec::new();
	for c in contexts {
		for t in oracle_tokens(c) {
			if !STOPWORDS.contains(&t.as_str()) && seen.insert(t.clone()) {
				added.push(t);
			}
		}
	}
	if added.is_empty() {
		resolved.to_string()
	} else {
		format!("{resolved} {}", added.join(" "))
	}
}

fn random_text(rng: &mut ChaCha8Rng, vocab: &[&str], min: usize, max: usize) -> String {
	let n = rng.gen_range(min..=max);
	let mut words: Vec<String> = (0..n)
		.map(|_| {
			let w = vocab[rng.gen_range(0..vocab.len())];
			if rng.gen_bool(0.2) {
				w.to_uppercase()
			} else {
				w.to_string()
			}
		})
		.collect();
	if rng.gen_bool(0.3) {
		words.last_mut().expect("n >= 1").push('?');
	}
	words.join(if rng.gen_bool(0.2) { ", " } else { " " })
}

fn criterion_1() -> Check {
	let start = Instant::now();
	let vocab = [
		"map",
		"usa",
		"us",
		"territories",
		"the",
		"of",
		"you",
		"want",
		"no",
		"yes",
		"career",
		"options",
		"coding",
		"it's",
		"a",
		"do",
		"see",
		"bootcamp",
		"who",
		"wrote",
		"declaration",
		"x1",
	];
	let mut rng = ChaCha8Rng::seed_from_u64(101);
	let mut cases = 0;
	for _ in 0..50 {
		let resolved = random_text(&mut rng, &vocab, 1, 5);
		let question = random_text(&mut rng, &vocab, 1, 8);
		let answer = random_text(&mut rng, &vocab, 1, 8);
		for label in UsefulnessLabel::ALL {
			let (q, a) = match label {
				UsefulnessLabel::Neither => (None, None),
				UsefulnessLabel::Question => (Some(question.as_str()), None),
				UsefulnessLabel::Answer => (None, Some(answer.as_str())),
				UsefulnessLabel::Both => (Some(question.as_str()), Some(answer.as_str())),
			};
			let routed =
				dispatch_expansion(label, &resolved, &question, &answer, &Recorder).map_err(|e| e.to_string())?;
			let expected_routed = match label {
				UsefulnessLabel::Neither => resolved.clone(),
				_ => format!("phi[{resolved}|{q:?}|{a:?}]"),
			};
			ensure!(routed == expected_routed, "label {label}: routed {routed:?}, expected {expected_routed:?}");

			let out = dispatch_expansion(label, &resolved, &question, &answer, &FallbackRewriter)
				.map_err(|e| e.to_string())?;
			let contexts: Vec<&str> = q.into_iter().chain(a).collect();
			let expected =
				if label == UsefulnessLabel::Neither { resolved.clone() } else { oracle_expand(&resolved, &contexts) };
			ensure!(out == expected, "label {label}: fallback gave {out:?}, expected {expected:?}");
			if label == UsefulnessLabel::Neither {
				ensure!(out.as_bytes() == resolved.as_bytes(), "label 0 is not the identity");
			}
			cases += 1;
		}
	}
	let t = within(Duration::from_secs(1), start)?;
	Ok(format!("{cases} dispatch cases match the case definition, {t}"))
}

// ---------------------------------------------------------------------------
// 2. BM25 / RM3 oracle

struct BruteForce {
	docs: Vec<(String, Vec<String>)>,
}

impl BruteForce {
	fn tf(doc: &[String], t: &str) -> f64 {
		doc.iter().filter(|x| *x == t).count() as f64
	}

	fn score(&self, query: &BTreeMap<String, f64>, doc: &[String], p: &Bm25Params) -> f64 {
		let n = self.docs.len() as f64;
		let avg = self.docs.iter().map(|(_, d)| d.len() as f64).sum::<f64>() / n;
		let mut s = 0.0;
		for (t, w) in query {
			let tf = Self::tf(doc, t);
			if tf == 0.0 {
				continue;
			}
			let df = self.docs.iter().filter(|(_, d)| d.contains(t)).count() as f64;
			let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
			s += w * idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * doc.len() as f64 / avg));
		}
		s
	}

	fn search(&self, query: &BTreeMap<String, f64>, k: usize, p: &Bm25Params) -> Vec<(String, f64)> {
		let mut all: Vec<(String, f64)> =
			self.docs.iter().map(|(id, d)| (id.clone(), self.score(query, d, p))).filter(|(_, s)| *s > 0.0).collect();
		all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
		all.truncate(k);
		all
	}

	fn rm3(&self, query: &BTreeMap<String, f64>, rm3: &Rm3Params, p: &Bm25Params) -> BTreeMap<String, f64> {
		let total_q: f64 = query.values().sum();
		let pq: BTreeMap<String, f64> =
			query.iter().filter(|(_, w)| **w > 0.0).map(|(t, w)| (t.clone(), w / total_q)).collect();
		let fb = if rm3.fb_terms == 0 { Vec::new() } else { self.search(query, rm3.fb_docs, p) };
		let mass: f64 = fb.iter().map(|(_, s)| s).sum();
		if fb.is_empty() || mass <= 0.0 {
			return pq;
		}
		let mut rm: BTreeMap<String, f64> = BTreeMap::new();
		for (id, s) in &fb {
			let doc = &self.docs.iter().find(|(d, _)| d == id).unwrap().1;
			let distinct: BTreeSet<&String> = doc.iter().collect();
			for t in distinct {
				if !STOPWORDS.contains(&t.as_str()) {
					*rm.entry(t.clone()).or_insert(0.0) += s / mass * Self::tf(doc, t) / doc.len() as f64;
				}
			}
		}
		let mut top: Vec<(String, f64)> = rm.into_iter().collect();
		top.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
		top.truncate(rm3.fb_terms);
		let top_mass: f64 = top.iter().map(|(_, v)| v).sum();
		let mut out: BTreeMap<String, f64> = pq.iter().map(|(t, w)| (t.clone(), rm3.lambda * w)).collect();
		for (t, v) in top {
			*out.entry(t).or_insert(0.0) += (1.0 - rm3.lambda) * v / top_mass;
		}
		out.retain(|_, w| *w > 0.0);
		let z: f64 = out.values().sum();
		out.into_iter().map(|(t, w)| (t, w / z)).collect()
	}
}

fn criterion_2() -> Check {
	let start = Instant::now();
	let vocab = ["rain", "sun", "spain", "the", "of", "cloud", "storm", "wind", "a", "snow", "tell", "frost"];
	let mut rng = ChaCha8Rng::seed_from_u64(202);
	let bm25 = Bm25Params::default();
	let mut comparisons = 0;
	for c in 0..100 {
		let n = rng.gen_range(1..=10);
		let mut passages = Vec::new();
		let mut docs = Vec::new();
		let mut ids: Vec<String> = (0..n).map(|i| format!("d{}", (i * 7 + c) % 97)).collect();
		ids.sort();
		ids.dedup();
		ids.shuffle(&mut rng);
		for (i, id) in ids.iter().enumerate() {
			// Occasionally duplicate the previous text to force score ties.
			let text = if i > 0 && rng.gen_bool(0.15) {
				passages.last().map(|p: &Passage| p.text().to_string()).unwrap()
			} else {
				let len = rng.gen_range(1..=8);
				(0..len).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect::<Vec<_>>().join(" ")
			};
			docs.push((id.clone(), oracle_tokens(&text)));
			passages.push(Passage::new(id.clone(), text).unwrap());
		}
		let index = InvertedIndex::build(passages).map_err(|e| e.to_string())?;
		let oracle = BruteForce { docs };

		for _ in 0..3 {
			let mut weights = BTreeMap::new();
			for _ in 0..rng.gen_range(1..=4) {
				let t = if rng.gen_bool(0.1) {
					"absent".to_string()
				} else {
					vocab[rng.gen_range(0..vocab.len())].to_string()
				};
				*weights.entry(t).or_insert(0.0) += rng.gen_range(1..=3) as f64;
			}
			let query = WeightedQuery::new(weights.clone()).map_err(|e| e.to_string())?;
			let k = rng.gen_range(0..=12);
			let got = index.search(&query, k, &bm25);
			let want = oracle.search(&weights, k, &bm25);
			ensure!(
				got.ids().collect::<Vec<_>>() == want.iter().map(|(i, _)| i.as_str()).collect::<Vec<_>>(),
				"corpus {c}: ranking {:?} != oracle {:?}",
				got.entries(),
				want
			);
			for ((_, a), (_, b)) in got.entries().iter().zip(&want) {
				ensure!((a - b).abs() <= 1e-9, "corpus {c}: score {a} vs oracle {b}");
			}

			let rm3 = Rm3Params {
				fb_docs: rng.gen_range(0..=10),
				fb_terms: rng.gen_range(0..=10),
				lambda: [0.0, 0.3, 0.5, 1.0][rng.gen_range(0..4)],
			};
			let got = index.rm3_expand(&query, &rm3, &bm25).map_err(|e| e.to_string())?;
			let want = oracle.rm3(&weights, &rm3, &bm25);
			ensure!(
				got.weights().keys().collect::<Vec<_>>() == want.keys().collect::<Vec<_>>(),
				"corpus {c} {rm3:?}: rm3 terms {:?} != oracle {:?}",
				got.weights(),
				want
			);
			for (t, w) in &want {
				ensure!((got.weight(t) - w).abs() <= 1e-9, "corpus {c}: rm3 weight of {t}: {} vs {w}", got.weight(t));
			}
			comparisons += 2;
		}
	}
	let t = within(Duration::from_secs(10), start)?;
	Ok(format!("{comparisons} search/RM3 comparisons over 100 corpora agree, {t}"))
}

// ---------------------------------------------------------------------------
// 3. metrics

fn single_turn(ids: &[&str], qrels: &[(&str, u32)]) -> (Run, Qrels) {
	let n = ids.len();
	let records = ids
		.iter()
		.enumerate()
		.map(|(i, id)| RunRecord {
			topic_turn_id: "t1_1".into(),
			passage_id: id.to_string(),
			rank: i as u32 + 1,
			score: (n - i) as f64,
			run_id: "hand".into(),
		})
		.collect();
	let mut q = Qrels::default();
	for (p, g) in qrels {
		q.insert("t1_1", p, *g).unwrap();
	}
	(Run::new(records).unwrap(), q)
}

fn near(a: f64, b: f64, tol: f64) -> bool {
	(a - b).abs() <= tol
}

struct MetricOracle;

impl MetricOracle {
	fn rel(j: &HashMap<String, u32>, id: &str, thr: u32) -> bool {
		j.get(id).copied().unwrap_or(0) >= thr
	}

	fn recall(r: &[String], j: &HashMap<String, u32>, k: usize, thr: u32) -> Option<f64> {
		let rel: Vec<&String> = j.keys().filter(|p| j[*p] >= thr).collect();
		if rel.is_empty() {
			return None;
		}
		let top: HashSet<&String> = r.iter().take(k).collect();
		Some(rel.iter().filter(|p| top.contains(*p)).count() as f64 / rel.len() as f64)
	}

	fn ap(r: &[String], j: &HashMap<String, u32>, thr: u32) -> f64 {
		let big_r = j.values().filter(|g| **g >= thr).count();
		if big_r == 0 {
			return 0.0;
		}
		let mut total = 0.0;
		for (i, p) in r.iter().enumerate() {
			if Self::rel(j, p, thr) {
				let prec = r[..=i].iter().filter(|q| Self::rel(j, q, thr)).count() as f64 / (i + 1) as f64;
				total += prec;
			}
		}
		total / big_r as f64
	}

	fn rr(r: &[String], j: &HashMap<String, u32>, thr: u32) -> f64 {
		for (i, p) in r.iter().enumerate() {
			if Self::rel(j, p, thr) {
				return 1.0 / (i as f64 + 1.0);
			}
		}
		0.0
	}

	fn ndcg(r: &[String], j: &HashMap<String, u32>, k: Option<usize>, gain: Gain) -> f64 {
		let g = |x: u32| match gain {
			Gain::Linear => x as f64,
			Gain::Exponential => 2f64.powi(x as i32) - 1.0,
		};
		let depth = k.unwrap_or(r.len().max(j.len()));
		let dcg: f64 =
			(0..depth.min(r.len())).map(|i| g(j.get(&r[i]).copied().unwrap_or(0)) / (i as f64 + 2.0).log2()).sum();
		let mut ideal: Vec<u32> = j.values().copied().collect();
		ideal.sort_by(|a, b| b.cmp(a));
		let idcg: f64 = (0..depth.min(ideal.len())).map(|i| g(ideal[i]) / (i as f64 + 2.0).log2()).sum();
		if idcg == 0.0 {
			0.0
		} else {
			dcg / idcg
		}
	}

	fn f1_acc(t: &[u8], p: &[u8]) -> (f64, f64) {
		let classes: BTreeSet<u8> = t.iter().copied().collect();
		let mut f1s = Vec::new();
		for c in &classes {
			let tp = t.iter().zip(p).filter(|(a, b)| *a == c && *b == c).count() as f64;
			let fp = t.iter().zip(p).filter(|(a, b)| *a != c && *b == c).count() as f64;
			let fneg = t.iter().zip(p).filter(|(a, b)| *a == c && *b != c).count() as f64;
			let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
			let rec = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
			f1s.push(if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 });
		}
		let acc = t.iter().zip(p).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
		(f1s.iter().sum::<f64>() / f1s.len() as f64, acc)
	}

	fn kappa(a: &[u8], b: &[u8]) -> f64 {
		let n = a.len() as f64;
		let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
		let labels: BTreeSet<u8> = a.iter().chain(b).copied().collect();
		let pe: f64 = labels
			.iter()
			.map(|l| {
				(a.iter().filter(|x| *x == l).count() as f64 / n) * (b.iter().filter(|x| *x == l).count() as f64 / n)
			})
			.sum();
		if pe == 1.0 {
			return 1.0;
		}
		(po - pe) / (1.0 - pe)
	}
}

fn criterion_3() -> Check {
	let start = Instant::now();
	let tol = 1e-4;
	// Hand-worked examples.
	let (run, q) = single_turn(&["a", "x", "b", "y", "c", "d"], &[("a", 1), ("b", 1), ("c", 1), ("d", 1)]);
	let r = evaluate(&run, &q, &[Metric::RecallAt(3)], &EvalOptions::default()).mean_of(Metric::RecallAt(3)).unwrap();
	ensure!(near(r, 0.5, tol), "recall@3 = {r}, expected 0.5");
	let (run, q) = single_turn(&["a", "x", "b"], &[("a", 1), ("b", 1)]);
	let ap = evaluate(&run, &q, &[Metric::Map], &EvalOptions::default()).mean_of(Metric::Map).unwrap();
	ensure!(near(ap, 0.8333, tol), "AP = {ap}, expected 0.8333");
	let (run, q) = single_turn(&["x", "a"], &[("a", 1)]);
	let rr = evaluate(&run, &q, &[Metric::Mrr], &EvalOptions::default()).mean_of(Metric::Mrr).unwrap();
	ensure!(near(rr, 0.5, tol), "MRR = {rr}, expected 0.5");
	let (run, q) = single_turn(&["a", "x", "b"], &[("a", 1), ("x", 0), ("b", 1)]);
	let nd = evaluate(&run, &q, &[Metric::NdcgAt(3)], &EvalOptions::default()).mean_of(Metric::NdcgAt(3)).unwrap();
	ensure!(near(nd, 0.9197, tol), "nDCG@3 = {nd}, expected 0.9197");
	let (f1, acc) = macro_f1_and_accuracy(&['A', 'A', 'B'], &['A', 'B', 'B']);
	ensure!(near(f1, 2.0 / 3.0, tol) && near(acc, 2.0 / 3.0, tol), "macro-F1/accuracy = {f1}/{acc}, expected 2/3, 2/3");
	let k = cohens_kappa(&[0, 0, 1, 1], &[0, 0, 1, 0]).map_err(|e| e.to_string())?;
	ensure!(near(k, 0.5, tol), "kappa = {k}, expected 0.5");

	// Random pairs against the brute-force oracle.
	let mut rng = ChaCha8Rng::seed_from_u64(303);
	let pool: Vec<String> = (0..15).map(|i| format!("p{i}")).collect();
	let metrics =
		[Metric::RecallAt(5), Metric::RecallAt(1000), Metric::Map, Metric::Mrr, Metric::Ndcg, Metric::NdcgAt(3)];
	let mut checked = 0;
	for case in 0..100 {
		let thr = rng.gen_range(1..=2);
		let gain = if rng.gen_bool(0.5) { Gain::Linear } else { Gain::Exponential };
		let mut records = Vec::new();
		let mut qrels = Qrels::default();
		let mut rankings: BTreeMap<String, Vec<String>> = BTreeMap::new();
		for t in 0..rng.gen_range(1..=5) {
			let tid = format!("t{t}_1");
			let mut ids = pool.clone();
			ids.shuffle(&mut rng);
			ids.truncate(rng.gen_range(1..=pool.len()));
			let n = ids.len();
			for (i, id) in ids.iter().enumerate() {
				records.push(RunRecord {
					topic_turn_id: tid.clone(),
					passage_id: id.clone(),
					rank: i as u32 + 1,
					score: (n - i) as f64 * 0.5,
					run_id: "r".into(),
				});
			}
			rankings.insert(tid.clone(), ids);
			if rng.gen_bool(0.85) {
				for p in &pool {
					if rng.gen_bool(0.4) {
						qrels.insert(&tid, p, rng.gen_range(0..=3)).unwrap();
					}
				}
				if qrels.turn(&tid).is_none() {
					qrels.insert(&tid, &pool[0], 0).unwrap();
				}
			}
		}
		let run = Run::new(records).map_err(|e| e.to_string())?;
		let report = evaluate(&run, &qrels, &metrics, &EvalOptions { rel_threshold: thr, gain });
		let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
		for (tid, ranked) in &rankings {
			let Some(j) = qrels.turn(tid) else {
				ensure!(report.skipped_turns.contains(tid), "case {case}: {tid} not reported as skipped");
				continue;
			};
			for m in metrics {
				let want = match m {
					Metric::RecallAt(k) => MetricOracle::recall(ranked, j, k, thr),
					Metric::Map => Some(MetricOracle::ap(ranked, j, thr)),
					Metric::Mrr => Some(MetricOracle::rr(ranked, j, thr)),
					Metric::Ndcg => Some(MetricOracle::ndcg(ranked, j, None, gain)),
					Metric::NdcgAt(k) => Some(MetricOracle::ndcg(ranked, j, Some(k), gain)),
				};
				let got = report.turn_value(tid, m);
				match (got, want) {
					(None, None) => {}
					(Some(g), Some(w)) => {
						ensure!(near(g, w, 1e-9), "case {case} {tid} {m}: {g} vs oracle {w}");
						let e = sums.entry(m.to_string()).or_insert((0.0, 0));
						e.0 += w;
						e.1 += 1;
					}
					_ => return Err(format!("case {case} {tid} {m}: {got:?} vs oracle {want:?}")),
				}
				checked += 1;
			}
		}
		for (m, (s, n)) in sums {
			let got = report.mean.get(&m).copied().unwrap_or(f64::NAN);
			ensure!(near(got, s / n as f64, 1e-9), "case {case} mean {m}: {got} vs {}", s / n as f64);
		}

		let labels_a: Vec<u8> = (0..rng.gen_range(1..30)).map(|_| rng.gen_range(0..4)).collect();
		let labels_b: Vec<u8> =
			labels_a.iter().map(|&l| if rng.gen_bool(0.3) { rng.gen_range(0..4) } else { l }).collect();
		let (f1, acc) = macro_f1_and_accuracy(&labels_a, &labels_b);
		let (wf1, wacc) = MetricOracle::f1_acc(&labels_a, &labels_b);
		ensure!(near(f1, wf1, 1e-9) && near(acc, wacc, 1e-9), "case {case}: f1/acc {f1}/{acc} vs {wf1}/{wacc}");
		let k = cohens_kappa(&labels_a, &labels_b).map_err(|e| e.to_string())?;
		let wk = MetricOracle::kappa(&labels_a, &labels_b);
		ensure!(near(k, wk, 1e-9), "case {case}: kappa {k} vs {wk}");
	}
	let t = within(Duration::from_secs(10), start)?;
	Ok(format!("7 hand examples and {checked} per-turn values over 100 random pairs agree, {t}"))
}

// ---------------------------------------------------------------------------
// 4. usefulness classifier protocol

fn shipped_annotations() -> std::result::Result<Vec<clarify_rank::usefulness::AnnotatedExample>, String> {
	let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/annotations.tsv");
	let file = std::fs::File::open(path).map_err(|e| format!("{path}: {e}"))?;
	read_annotations(std::io::BufReader::new(file)).map_err(|e| e.to_string())
}

fn criterion_4() -> Check {
	let start = Instant::now();
	let examples = shipped_annotations()?;
	ensure!(examples.len() == 150, "{} annotations, expected 150", examples.len());
	ensure!(
		examples == synthetic::annotation_set(synthetic::ANNOTATION_SEED),
		"shipped annotations differ from the generator"
	);
	let counts: Vec<usize> =
		UsefulnessLabel::ALL.iter().map(|l| examples.iter().filter(|e| e.label == *l).count()).collect();
	ensure!(counts == synthetic::ANNOTATION_COUNTS, "class counts {counts:?}");
	let config = TrainConfig::default();
	let (model, report) = train(&examples, &config).map_err(|e| e.to_string())?;
	let (_, again) = train(&examples, &config).map_err(|e| e.to_string())?;
	ensure!(report == again, "training is not deterministic");
	ensure!(report.folds.len() == 5, "{} folds", report.folds.len());
	ensure!(
		report.mean_macro_f1 >= 0.70 && report.mean_accuracy >= 0.85,
		"mean macro-F1 {:.3} (>= 0.70), accuracy {:.3} (>= 0.85)",
		report.mean_macro_f1,
		report.mean_accuracy
	);
	for (q, cq, a, label) in synthetic::CANONICAL_ROWS {
		let got = model.classify(q, cq, a).map_err(|e| e.to_string())?;
		ensure!(got == label, "canonical row {a:?} classified {got}, expected {label}");
	}
	let t = within(Duration::from_secs(30), start)?;
	Ok(format!(
		"5-fold macro-F1 {:.3}, accuracy {:.3}, deterministic, canonical rows 0/1/2/3, {t}",
		report.mean_macro_f1, report.mean_accuracy
	))
}

// ---------------------------------------------------------------------------
// 5 and 6. synthetic world experiments

struct Experiment {
	world: SyntheticWorld,
	engine: Engine,
	outputs: BTreeMap<Mode, BatchOutput>,
}

fn experiment() -> std::result::Result<Experiment, String> {
	let world = synthetic::default_world();
	let examples = shipped_annotations()?;
	let (model, _) = train(&examples, &TrainConfig::default()).map_err(|e| e.to_string())?;
	let index = Arc::new(InvertedIndex::build(world.passages.clone()).map_err(|e| e.to_string())?);
	let engine = Engine::builder(index, filter_pool(&world.pool, &FilterRules::default()))
		.classifier(Box::new(model))
		.build()
		.map_err(|e| e.to_string())?;
	let mut outputs = BTreeMap::new();
	for mode in [Mode::NoMi, Mode::MiAll, Mode::MiClf] {
		let out = engine.run_batch(&world.topics, mode, "synthetic").map_err(|e| e.to_string())?;
		outputs.insert(mode, out);
	}
	Ok(Experiment { world, engine, outputs })
}

fn stratum_turns(world: &SyntheticWorld, s: Stratum) -> Vec<String> {
	world.strata.iter().filter(|(_, x)| *x == s).map(|(t, _)| t.clone()).collect()
}

fn criterion_5(exp: &Experiment) -> Check {
	let start = Instant::now();
	let [no_mi, mi_all, mi_clf] = [Mode::NoMi, Mode::MiAll, Mode::MiClf].map(|m| &exp.outputs[&m]);
	let label_zero: Vec<&String> =
		mi_clf.results.iter().filter(|(_, r)| r.label == Some(UsefulnessLabel::Neither)).map(|(t, _)| t).collect();
	ensure!(!label_zero.is_empty(), "no turn was labelled 0");
	let baseline: HashMap<&String, &RankedList> = no_mi.results.iter().map(|(t, r)| (t, &r.ranking)).collect();
	for (t, r) in &mi_clf.results {
		if r.label == Some(UsefulnessLabel::Neither) {
			ensure!(&r.ranking == baseline[t], "label-0 turn {t}: MI_CLF ranking differs from NO_MI");
		}
	}

	let turns = stratum_turns(&exp.world, Stratum::MisleadingNegative);
	let m = Metric::NdcgAt(3);
	let mean = |out: &BatchOutput| {
		let rep = evaluate(&out.run, &exp.world.qrels, &[m], &EvalOptions::default());
		turns.iter().map(|t| rep.turn_value(t, m).unwrap_or(0.0)).sum::<f64>() / turns.len() as f64
	};
	let (base, all, clf) = (mean(no_mi), mean(mi_all), mean(mi_clf));
	ensure!(all < base, "MI_ALL nDCG@3 {all:.4} not below NO_MI {base:.4} on the misleading stratum");
	ensure!(clf == base, "MI_CLF nDCG@3 {clf:.4} differs from NO_MI {base:.4} on the misleading stratum");

	// Bare "No." on every turn: the whole MI_CLF run equals NO_MI.
	let bare: Vec<ScriptedTopic> = exp
		.world
		.topics
		.iter()
		.map(|t| ScriptedTopic { history: t.history.clone(), answers: vec![Some("No.".into()); t.answers.len()] })
		.collect();
	let a = exp.engine.run_batch(&bare, Mode::MiClf, "synthetic").map_err(|e| e.to_string())?;
	let b = exp.engine.run_batch(&bare, Mode::NoMi, "synthetic").map_err(|e| e.to_string())?;
	ensure!(write_run(&a.run) == write_run(&b.run), "all-\"No.\" MI_CLF run file differs from NO_MI");

	let t = within(Duration::from_secs(60), start)?;
	Ok(format!(
		"{} label-0 turns identical to NO_MI; misleading stratum nDCG@3 NO_MI {base:.3}, MI_ALL {all:.3}, MI_CLF {clf:.3}; all-\"No.\" run identical, {t}",
		label_zero.len()
	))
}

fn criterion_6(exp: &Experiment) -> Check {
	let start = Instant::now();
	let turns = stratum_turns(&exp.world, Stratum::ContentAnswer);
	let m = Metric::RecallAt(100);
	let values = |mode: Mode| {
		let rep = evaluate(&exp.outputs[&mode].run, &exp.world.qrels, &[m], &EvalOptions::default());
		turns.iter().map(|t| rep.turn_value(t, m).unwrap_or(0.0)).collect::<Vec<f64>>()
	};
	let base = values(Mode::NoMi);
	let mut summary = Vec::new();
	for mode in [Mode::MiAll, Mode::MiClf] {
		let v = values(mode);
		for (i, t) in turns.iter().enumerate() {
			ensure!(v[i] >= base[i], "{mode} R@100 {:.3} < NO_MI {:.3} on {t}", v[i], base[i]);
		}
		let strict = v.iter().zip(&base).filter(|(a, b)| a > b).count() as f64 / turns.len() as f64;
		ensure!(strict >= 0.8, "{mode} improves R@100 on only {:.0}% of content turns", strict * 100.0);
		summary.push(format!("{mode} strictly better on {:.0}%", strict * 100.0));
	}
	let t = within(Duration::from_secs(60), start)?;
	Ok(format!("{} content turns: {}, {t}", turns.len(), summary.join(", ")))
}

// ---------------------------------------------------------------------------
// 7. rerank cascade

fn hash_unit(parts: &[&str]) -> f64 {
	let mut h = DefaultHasher::new();
	parts.hash(&mut h);
	(h.finish() % 10_000) as f64 / 10_000.0
}

/// Scores from a hash of (query, id), quantized so that ties occur.
struct HashPointwise;

impl PointwiseScorer for HashPointwise {
	fn identity(&self) -> String {
		"hash".into()
	}
	fn score(&self, query: &str, passages: &[(&str, &str)]) -> Result<Vec<f64>> {
		Ok(passages.iter().map(|(id, _)| (hash_unit(&[query, id]) * 5.0).floor()).collect())
	}
}

/// Arbitrary, not necessarily consistent, preferences.
struct HashPairwise;

impl PairwiseScorer for HashPairwise {
	fn identity(&self) -> String {
		"hash".into()
	}
	fn prefer(&self, query: &str, pairs: &[((&str, &str), (&str, &str))]) -> Result<Vec<f64>> {
		Ok(pairs.iter().map(|((a, _), (b, _))| hash_unit(&[query, a, b])).collect())
	}
}

fn sort_head(mut head: Vec<(String, f64)>) -> Vec<(String, f64)> {
	head.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
	head
}

fn criterion_7() -> Check {
	let start = Instant::now();
	let mut rng = ChaCha8Rng::seed_from_u64(707);
	let words = ["red", "green", "apple", "pear", "tart", "pie", "crumble", "fresh"];
	for case in 0..1000 {
		let n = rng.gen_range(0..=25);
		let mut texts: HashMap<String, String> = HashMap::new();
		let mut entries = Vec::new();
		for i in 0..n {
			let id = format!("c{:02}", (i * 13 + case) % 50);
			if texts.contains_key(&id) {
				continue;
			}
			let len = rng.gen_range(1..6);
			let text = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ");
			texts.insert(id.clone(), text);
			entries.push((id, (rng.gen_range(0..20) as f64) / 4.0));
		}
		let candidates = RankedList::from_scored(entries).map_err(|e| e.to_string())?;
		let query = format!("q{case}");
		let depth = rng.gen_range(0..=n + 2);
		let head_len = depth.min(candidates.len());

		let out = rerank_pointwise(&query, &candidates, &texts, &HashPointwise, depth).map_err(|e| e.to_string())?;
		let scored: Vec<(String, f64)> = candidates.entries()[..head_len]
			.iter()
			.map(|(id, _)| (id.clone(), (hash_unit(&[&query, id]) * 5.0).floor()))
			.collect();
		let mut want = sort_head(scored);
		want.extend_from_slice(&candidates.entries()[head_len..]);
		ensure!(out.entries() == want.as_slice(), "case {case}: pointwise depth {depth} output differs");

		let pdepth = rng.gen_range(0..=n + 2);
		let pairwise: &dyn PairwiseScorer =
			if case % 2 == 0 { &HashPairwise } else { &LogisticPairwise::new(index_of(&texts)) };
		let out2 = rerank_pairwise(&query, &out, &texts, pairwise, pdepth).map_err(|e| e.to_string())?;
		let h = pdepth.min(out.len());
		let head: Vec<&(String, f64)> = out.entries()[..h].iter().collect();
		let mut sums = Vec::new();
		for (i, (a, _)) in head.iter().enumerate() {
			let mut s = 0.0;
			for (j, (b, _)) in head.iter().enumerate() {
				if i != j {
					let p = pairwise.prefer(&query, &[((a, &texts[a]), (b, &texts[b]))]).map_err(|e| e.to_string())?[0];
					s += p;
				}
			}
			sums.push((a.clone(), s));
		}
		// A head without pairs is left as it was.
		let mut want2 = if h < 2 { out.entries()[..h].to_vec() } else { sort_head(sums) };
		want2.extend_from_slice(&out.entries()[h..]);
		ensure!(
			out2.entries() == want2.as_slice(),
			"case {case}: pairwise depth {pdepth} differs from the brute-force sums"
		);

		let before: BTreeSet<&str> = candidates.ids().collect();
		let after: BTreeSet<&str> = out2.ids().collect();
		ensure!(before == after && out2.len() == candidates.len(), "case {case}: not a permutation");
		if case % 2 == 1 && h > 1 {
			let total: f64 = out2.entries()[..h].iter().map(|(_, s)| s).sum();
			let expect = (h * (h - 1)) as f64 / 2.0;
			ensure!(near(total, expect, 1e-9), "case {case}: aggregate sum {total} != {expect}");
		}
	}
	ensure!(
		aggregate_preferences(3, &[0.9, 0.8, 0.1, 0.7, 0.2, 0.3]) == vec![0.9 + 0.8, 0.1 + 0.7, 0.2 + 0.3],
		"aggregation example"
	);
	let t = within(Duration::from_secs(10), start)?;
	Ok(format!("1000 randomized cascades: permutation, depth semantics and exact aggregation hold, {t}"))
}

fn index_of(texts: &HashMap<String, String>) -> Arc<InvertedIndex> {
	let mut ids: Vec<&String> = texts.keys().collect();
	ids.sort();
	Arc::new(
		InvertedIndex::build(ids.into_iter().map(|id| Passage::new(id.clone(), texts[id].clone()).unwrap())).unwrap(),
	)
}

// ---------------------------------------------------------------------------
// 8. formats

fn criterion_8(exp: &Experiment) -> Check {
	let start = Instant::now();
	let mut rng = ChaCha8Rng::seed_from_u64(808);
	for case in 0..200 {
		let mut records = Vec::new();
		for t in 0..rng.gen_range(1..4) {
			let mut score: f64 = rng.gen_range(-5.0..50.0);
			for rank in 1..=rng.gen_range(1..12) {
				records.push(RunRecord {
					topic_turn_id: format!("topic{t}_{}", rng.gen_range(1..9)),
					passage_id: format!("doc-{rank}-{case}"),
					rank,
					score,
					run_id: "run_a".into(),
				});
				score -= rng.gen_range(0.0..3.0);
			}
			let tid = records.last().unwrap().topic_turn_id.clone();
			for r in records.iter_mut().rev().take_while(|r| r.rank != 0) {
				if r.topic_turn_id.starts_with(&format!("topic{t}_")) {
					r.topic_turn_id = tid.clone();
				}
			}
		}
		let run = Run::new(records).map_err(|e| format!("case {case}: {e}"))?;
		let text = write_run(&run);
		validate_run_text(&text).map_err(|e| format!("case {case}: {e}"))?;
		let again = write_run(&read_run(text.as_bytes()).map_err(|e| e.to_string())?);
		ensure!(again == text, "case {case}: run file does not round-trip");

		let mut q = Qrels::default();
		for i in 0..rng.gen_range(1..10) {
			q.insert(&format!("t{}_{}", i % 3, i % 2 + 1), &format!("p{i}"), rng.gen_range(0..4)).unwrap();
		}
		let qt = write_qrels(&q);
		ensure!(write_qrels(&read_qrels(qt.as_bytes()).map_err(|e| e.to_string())?) == qt, "case {case}: qrels");
	}
	ensure!(
		read_qrels("t1_1   0\td7  2\n".as_bytes()).map_err(|e| e.to_string())?.grade("t1_1", "d7") == Some(2),
		"qrels whitespace"
	);
	for bad in [
		"t1 Q0 d1 2 1.000000 r\n",
		"t1 Q0 d1 1 1.00000 r\n",
		"t1 Q1 d1 1 1.000000 r\n",
		"t1 Q0 d1 1 1.000000\n",
		"t1 Q0 d1 1 1.000000 r\nt1 Q0 d2 3 0.500000 r\n",
		"t1 Q0 d1 1 1.000000 r\nt1 Q0 d2 2 2.000000 r\n",
		"t1  Q0 d1 1 1.000000 r\n",
	] {
		ensure!(validate_run_text(bad).is_err(), "grammar accepted {bad:?}");
	}
	for (mode, out) in &exp.outputs {
		let text = write_run(&out.run);
		validate_run_text(&text).map_err(|e| format!("{mode} run: {e}"))?;
		ensure!(
			write_run(&read_run(text.as_bytes()).map_err(|e| e.to_string())?) == text,
			"{mode} run does not round-trip"
		);
	}
	let q = write_qrels(&exp.world.qrels);
	ensure!(write_qrels(&read_qrels(q.as_bytes()).map_err(|e| e.to_string())?) == q, "world qrels do not round-trip");
	Ok(format!(
		"200 random runs/qrels and pipeline runs round-trip byte-identically and validate, {}",
		within(Duration::from_secs(10), start)?
	))
}

// ---------------------------------------------------------------------------

fn run_check(name: &str, f: impl FnOnce() -> Check) -> bool {
	let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
		Err(format!(
			"panicked: {}",
			e.downcast_ref::<String>()
				.cloned()
				.or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
				.unwrap_or_default()
		))
	});
	match result {
		Ok(detail) => {
			println!("{name}: PASS ({detail})");
			true
		}
		Err(why) => {
			println!("{name}: FAIL ({why})");
			false
		}
	}
}

fn main() -> ExitCode {
	let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
	let wanted = |n: &str| filter.as_deref().is_none_or(|f| n.contains(f));

	let mut ok = true;
	println!("\nacceptance criteria");
	if wanted("criterion 1") {
		ok &= run_check("criterion 1 dispatch", criterion_1);
	}
	if wanted("criterion 2") {
		ok &= run_check("criterion 2 bm25/rm3 oracle", criterion_2);
	}
	if wanted("criterion 3") {
		ok &= run_check("criterion 3 metric oracles", criterion_3);
	}
	if wanted("criterion 4") {
		ok &= run_check("criterion 4 usefulness protocol", criterion_4);
	}
	let needs_world = ["criterion 5", "criterion 6", "criterion 8"].iter().any(|c| wanted(c));
	let exp = if needs_world { Some(experiment()) } else { None };
	for (id, name, f) in [
		("criterion 5", "criterion 5 mitigation", criterion_5 as fn(&Experiment) -> Check),
		("criterion 6", "criterion 6 gain", criterion_6),
	] {
		if wanted(id) {
			ok &= match exp.as_ref().expect("built above") {
				Ok(e) => run_check(name, || f(e)),
				Err(why) => run_check(name, || Err(why.clone())),
			};
		}
	}
	if wanted("criterion 7") {
		ok &= run_check("criterion 7 rerank cascade", criterion_7);
	}
	if wanted("criterion 8") {
		ok &= match exp.as_ref().expect("built above") {
			Ok(e) => run_check("criterion 8 formats", || criterion_8(e)),
			Err(why) => run_check("criterion 8 formats", || Err(why.clone())),
		};
	}
	println!("acceptance: {}\n", if ok { "all criteria passed" } else { "FAILED" });
	if ok {
		ExitCode::SUCCESS
	} else {
		ExitCode::FAILURE
	}
}
