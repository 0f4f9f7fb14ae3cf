//! `key = value` engine configuration and engine assembly.
//!
//! Recognized keys (paths are relative to the config file):
//!
//! | key | meaning |
//! |---|---|
//! | `index` / `corpus` | serialized index, or a corpus to index at load (exactly one) |
//! | `pool` | clarifying-question pool |
//! | `mode` | `no_mi`, `mi_all` or `mi_clf` |
//! | `model` / `annotations` | trained usefulness model (JSON), or annotations to train on at load |
//! | `lexicon`, `blocklist` | polarity lexicon and question blocklist files |
//! | `rewrite_endpoint`, `embed_endpoint`, `classify_endpoint`, `score_endpoint` | remote backends |
//! | `backend_timeout_ms` | remote timeout, default 10000 |
//! | `bm25.k1`, `bm25.b` | BM25 parameters |
//! | `rm3.fb_docs`, `rm3.fb_terms`, `rm3.lambda`, `rm3.source` | RM3 parameters; source is `expanded` or `resolved` |
//! | `rerank.pointwise_depth`, `rerank.pairwise_depth` | cascade depths |
//! | `train.folds`, `train.seed` | usefulness training protocol |
//! | `filter.min_tokens`, `filter.require_question_mark` | pool filter rules |
//! | `bind`, `snapshot` | service address and optional session snapshot file |

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use crate::backend::{RemoteBackend, DEFAULT_TIMEOUT};
use crate::clarification::{filter_pool, load_pool, FilterRules};
use crate::error::{parse_err, Error, Result};
use crate::pipeline::{Engine, Mode, PipelineConfig};
use crate::retrieval::{read_corpus, InvertedIndex};
use crate::rewriter::DegradingRewriter;
use crate::text::tokenize;
use crate::usefulness::{read_annotations, train_with, Lexicon, TrainConfig, TrainReport, UsefulnessModel};

#[derive(Debug, Clone, PartialEq)]
pub enum IndexSource {
	Serialized(PathBuf),
	Corpus(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSource {
	Model(PathBuf),
	Annotations(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
	pub index: IndexSource,
	pub pool: PathBuf,
	pub mode: Mode,
	pub classifier: Option<ClassifierSource>,
	pub lexicon: Option<PathBuf>,
	pub blocklist: Option<PathBuf>,
	pub rewrite_endpoint: Option<String>,
	pub embed_endpoint: Option<String>,
	pub classify_endpoint: Option<String>,
	pub score_endpoint: Option<String>,
	pub backend_timeout: Duration,
	pub pipeline: PipelineConfig,
	pub train: TrainConfig,
	pub filter_min_tokens: usize,
	pub filter_require_question_mark: bool,
	pub bind: String,
	pub snapshot: Option<PathBuf>,
}

impl EngineConfig {
	/// Config with defaults for everything but the two required inputs.
	pub fn new(index: IndexSource, pool: impl Into<PathBuf>) -> Self {
		let rules = FilterRules::default();
		Self {
			index,
			pool: pool.into(),
			mode: Mode::MiClf,
			classifier: None,
			lexicon: None,
			blocklist: None,
			rewrite_endpoint: None,
			embed_endpoint: None,
			classify_endpoint: None,
			score_endpoint: None,
			backend_timeout: DEFAULT_TIMEOUT,
			pipeline: PipelineConfig::default(),
			train: TrainConfig::default(),
			filter_min_tokens: rules.min_tokens,
			filter_require_question_mark: rules.require_question_mark,
			bind: "127.0.0.1:8080".into(),
			snapshot: None,
		}
	}

	pub fn load(path: &Path) -> Result<Self> {
		let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
		let base = path.parent().unwrap_or(Path::new("."));
		let cfg = Self::parse(&text, base)?;
		cfg.check_files()?;
		Ok(cfg)
	}

	/// Parses config text; relative paths are joined onto `base`.
	pub fn parse(text: &str, base: &Path) -> Result<Self> {
		let mut index = None;
		let mut pool = None;
		let mut cfg = Self::new(IndexSource::Serialized(PathBuf::new()), PathBuf::new());
		for (n, raw) in text.lines().enumerate() {
			let n = n + 1;
			let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
			if line.is_empty() {
				continue;
			}
			let (key, value) = line.split_once('=').ok_or_else(|| parse_err(n, "expected `key = value`"))?;
			let (key, value) = (key.trim(), value.trim());
			let path = || base.join(value);
			let bad = |what: &str| Error::Config(format!("line {n}: {key}: {what} ({value:?})"));
			match key {
				"index" | "corpus" => {
					if index.is_some() {
						return Err(Error::Config(format!("line {n}: index given twice")));
					}
					index = Some(if key == "index" {
						IndexSource::Serialized(path())
					} else {
						IndexSource::Corpus(path())
					});
				}
				"pool" => pool = Some(path()),
				"mode" => cfg.mode = value.parse()?,
				"model" | "annotations" => {
					if cfg.classifier.is_some() {
						return Err(Error::Config(format!("line {n}: classifier given twice")));
					}
					cfg.classifier = Some(if key == "model" {
						ClassifierSource::Model(path())
					} else {
						ClassifierSource::Annotations(path())
					});
				}
				"lexicon" => cfg.lexicon = Some(path()),
				"blocklist" => cfg.blocklist = Some(path()),
				"rewrite_endpoint" => cfg.rewrite_endpoint = Some(value.into()),
				"embed_endpoint" => cfg.embed_endpoint = Some(value.into()),
				"classify_endpoint" => cfg.classify_endpoint = Some(value.into()),
				"score_endpoint" => cfg.score_endpoint = Some(value.into()),
				"backend_timeout_ms" => {
					cfg.backend_timeout = Duration::from_millis(num(value).map_err(|_| bad("not an integer"))?)
				}
				"bm25.k1" => cfg.pipeline.bm25.k1 = num(value).map_err(|_| bad("not a number"))?,
				"bm25.b" => cfg.pipeline.bm25.b = num(value).map_err(|_| bad("not a number"))?,
				"rm3.fb_docs" => cfg.pipeline.rm3.fb_docs = num(value).map_err(|_| bad("not an integer"))?,
				"rm3.fb_terms" => cfg.pipeline.rm3.fb_terms = num(value).map_err(|_| bad("not an integer"))?,
				"rm3.lambda" => cfg.pipeline.rm3.lambda = num(value).map_err(|_| bad("not a number"))?,
				"rm3.source" => cfg.pipeline.rm3_source = value.parse()?,
				"rerank.pointwise_depth" => {
					cfg.pipeline.rerank.pointwise_depth = num(value).map_err(|_| bad("not an integer"))?
				}
				"rerank.pairwise_depth" => {
					cfg.pipeline.rerank.pairwise_depth = num(value).map_err(|_| bad("not an integer"))?
				}
				"train.folds" => cfg.train.folds = num(value).map_err(|_| bad("not an integer"))?,
				"train.seed" => cfg.train.seed = num(value).map_err(|_| bad("not an integer"))?,
				"filter.min_tokens" => cfg.filter_min_tokens = num(value).map_err(|_| bad("not an integer"))?,
				"filter.require_question_mark" => {
					cfg.filter_require_question_mark = value.parse().map_err(|_| bad("not true/false"))?
				}
				"bind" => cfg.bind = value.into(),
				"snapshot" => cfg.snapshot = Some(path()),
				_ => return Err(Error::Config(format!("line {n}: unknown key {key:?}"))),
			}
		}
		cfg.index = index.ok_or_else(|| Error::Config("missing `index` or `corpus`".into()))?;
		cfg.pool = pool.ok_or_else(|| Error::Config("missing `pool`".into()))?;
		cfg.validate()?;
		Ok(cfg)
	}

	/// Parameter range checks.
	pub fn validate(&self) -> Result<()> {
		let p = &self.pipeline;
		if !(p.bm25.k1 > 0.0 && p.bm25.k1.is_finite()) {
			return Err(Error::Config(format!("bm25.k1 must be > 0, got {}", p.bm25.k1)));
		}
		if !(0.0..=1.0).contains(&p.bm25.b) {
			return Err(Error::Config(format!("bm25.b must be in [0, 1], got {}", p.bm25.b)));
		}
		if !(0.0..=1.0).contains(&p.rm3.lambda) {
			return Err(Error::Config(format!("rm3.lambda must be in [0, 1], got {}", p.rm3.lambda)));
		}
		if p.rerank.pointwise_depth == 0 || p.rerank.pairwise_depth == 0 {
			return Err(Error::Config("rerank depths must be positive".into()));
		}
		p.rerank.validate().map_err(|e| Error::Config(e.to_string()))?;
		if self.train.folds < 2 {
			return Err(Error::Config("train.folds must be at least 2".into()));
		}
		Ok(())
	}

	/// Every referenced input file must exist.
	pub fn check_files(&self) -> Result<()> {
		let mut files = vec![match &self.index {
			IndexSource::Serialized(p) | IndexSource::Corpus(p) => p,
		}];
		files.push(&self.pool);
		if let Some(ClassifierSource::Model(p) | ClassifierSource::Annotations(p)) = &self.classifier {
			files.push(p);
		}
		files.extend(self.lexicon.iter());
		files.extend(self.blocklist.iter());
		for f in files {
			if !f.is_file() {
				return Err(Error::Config(format!("file not found: {}", f.display())));
			}
		}
		Ok(())
	}

	pub fn load_index(&self) -> Result<InvertedIndex> {
		match &self.index {
			IndexSource::Serialized(p) => InvertedIndex::read_from(BufReader::new(File::open(p)?)),
			IndexSource::Corpus(p) => InvertedIndex::build(read_corpus(BufReader::new(File::open(p)?))?),
		}
	}

	pub fn filter_rules(&self) -> Result<FilterRules> {
		let mut rules = FilterRules {
			min_tokens: self.filter_min_tokens,
			require_question_mark: self.filter_require_question_mark,
			..FilterRules::default()
		};
		if let Some(p) = &self.blocklist {
			rules.blocklist = fs::read_to_string(p)?
				.lines()
				.filter(|l| !tokenize(l).is_empty())
				.map(|l| l.trim().to_string())
				.collect();
		}
		Ok(rules)
	}

	pub fn load_lexicon(&self) -> Result<Lexicon> {
		match &self.lexicon {
			Some(p) => Lexicon::read(BufReader::new(File::open(p)?)),
			None => Ok(Lexicon::default()),
		}
	}

	/// Loads or trains the built-in usefulness model, if one is configured.
	pub fn load_model(&self) -> Result<Option<(UsefulnessModel, Option<TrainReport>)>> {
		match &self.classifier {
			None => Ok(None),
			Some(ClassifierSource::Model(p)) => {
				let model: UsefulnessModel = serde_json::from_reader(BufReader::new(File::open(p)?))?;
				if !model.is_trained() {
					return Err(Error::Config(format!("{} holds an untrained model", p.display())));
				}
				Ok(Some((model, None)))
			}
			Some(ClassifierSource::Annotations(p)) => {
				let examples = read_annotations(BufReader::new(File::open(p)?))?;
				let (model, report) = train_with(&examples, &self.train, &self.load_lexicon()?)?;
				Ok(Some((model, Some(report))))
			}
		}
	}

	/// Assembles the engine. Remote endpoints take precedence over the
	/// built-in backends; the rewriter degrades to the lexical fallback when
	/// its endpoint is unreachable.
	pub fn build_engine(&self) -> Result<(Engine, Option<TrainReport>)> {
		let index = Arc::new(self.load_index()?);
		let pool = filter_pool(&load_pool(BufReader::new(File::open(&self.pool)?))?, &self.filter_rules()?);
		let remote = |url: &String| RemoteBackend::new(url.clone(), self.backend_timeout);

		let mut builder = Engine::builder(index, pool).config(self.pipeline);
		if let Some(url) = &self.rewrite_endpoint {
			builder = builder.rewriter(Box::new(DegradingRewriter::new(Box::new(remote(url)))));
		}
		if let Some(url) = &self.embed_endpoint {
			builder = builder.similarity(Box::new(remote(url)));
		}
		if let Some(url) = &self.score_endpoint {
			builder = builder.pointwise(Box::new(remote(url))).pairwise(Box::new(remote(url)));
		}
		let mut report = None;
		if let Some(url) = &self.classify_endpoint {
			builder = builder.classifier(Box::new(remote(url)));
		} else if let Some((model, r)) = self.load_model()? {
			report = r;
			builder = builder.classifier(Box::new(model));
		}
		if self.mode == Mode::MiClf && self.classify_endpoint.is_none() && self.classifier.is_none() {
			return Err(Error::Config("mode mi_clf needs `model`, `annotations` or `classify_endpoint`".into()));
		}
		Ok((builder.build()?, report))
	}
}

fn num<T: FromStr>(s: &str) -> std::result::Result<T, T::Err> {
	s.parse()
}
