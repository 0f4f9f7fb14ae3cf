//! Conversational turn orchestration in the three run modes, plus batch
//! runs over scripted topics.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clarification::{select_question, ClarifyingQuestion, QuestionPool, SimilarityScorer, TfIdfScorer};
use crate::conversation::{ConversationHistory, QueryState, ScriptedTopic, Utterance, UtteranceKind};
use crate::error::{Error, Result};
use crate::evaluation::{Run, RunRecord};
use crate::reranker::{rerank_cascade, LexicalScorer, LogisticPairwise, PairwiseScorer, PointwiseScorer, RerankConfig};
use crate::retrieval::{Bm25Params, InvertedIndex, RankedList, Rm3Params, WeightedQuery};
use crate::rewriter::{expand, resolve, FallbackRewriter, RewriteBackend};
use crate::usefulness::{dispatch_expansion, UsefulnessClassifier, UsefulnessLabel};

/// Run configuration: no clarification, always use the exchange, or use it
/// as the usefulness classifier decides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
	#[serde(rename = "NO_MI")]
	NoMi,
	#[serde(rename = "MI_ALL")]
	MiAll,
	#[serde(rename = "MI_CLF")]
	MiClf,
}

impl Mode {
	pub const ALL: [Self; 3] = [Self::NoMi, Self::MiAll, Self::MiClf];

	pub fn as_str(self) -> &'static str {
		match self {
			Self::NoMi => "NO_MI",
			Self::MiAll => "MI_ALL",
			Self::MiClf => "MI_CLF",
		}
	}

	pub fn is_mixed_initiative(self) -> bool {
		self != Self::NoMi
	}
}

impl fmt::Display for Mode {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		f.write_str(self.as_str())
	}
}

impl FromStr for Mode {
	type Err = Error;

	fn from_str(s: &str) -> Result<Self> {
		match s.to_ascii_lowercase().replace('-', "_").as_str() {
			"no_mi" => Ok(Self::NoMi),
			"mi_all" => Ok(Self::MiAll),
			"mi_clf" => Ok(Self::MiClf),
			_ => Err(Error::InvalidArguments(format!("unknown mode {s:?} (expected no_mi, mi_all or mi_clf)"))),
		}
	}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
	AwaitingQuery,
	AwaitingAnswer,
}

impl SessionState {
	pub fn as_str(self) -> &'static str {
		match self {
			Self::AwaitingQuery => "awaiting_query",
			Self::AwaitingAnswer => "awaiting_answer",
		}
	}
}

/// One conversation bound to a mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
	id: String,
	history: ConversationHistory,
	mode: Mode,
	state: SessionState,
	pending: Option<(QueryState, ClarifyingQuestion)>,
}

impl Session {
	pub fn new(id: impl Into<String>, mode: Mode) -> Self {
		let id = id.into();
		Self {
			history: ConversationHistory::new(id.clone()),
			id,
			mode,
			state: SessionState::AwaitingQuery,
			pending: None,
		}
	}

	pub fn id(&self) -> &str {
		&self.id
	}

	pub fn history(&self) -> &ConversationHistory {
		&self.history
	}

	pub fn mode(&self) -> Mode {
		self.mode
	}

	pub fn state(&self) -> SessionState {
		self.state
	}

	pub fn pending(&self) -> Option<&(QueryState, ClarifyingQuestion)> {
		self.pending.as_ref()
	}

	fn expect(&self, state: SessionState) -> Result<()> {
		if self.state != state {
			return Err(Error::State { expected: state.as_str(), actual: self.state.as_str() });
		}
		Ok(())
	}
}

/// Outcome of a completed turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
	pub query_state: QueryState,
	pub question_asked: Option<ClarifyingQuestion>,
	pub label: Option<UsefulnessLabel>,
	pub ranking: RankedList,
}

/// What the system says after a query.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryOutcome {
	Clarify(ClarifyingQuestion),
	Ranked(TurnResult),
}

/// Which query text drives RM3 feedback retrieval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rm3Source {
	/// The post-dispatch query.
	#[default]
	Expanded,
	/// The history-resolved query, before clarification expansion.
	Resolved,
}

impl FromStr for Rm3Source {
	type Err = Error;

	fn from_str(s: &str) -> Result<Self> {
		match s {
			"expanded" => Ok(Self::Expanded),
			"resolved" => Ok(Self::Resolved),
			_ => Err(Error::InvalidArguments(format!("rm3 source {s:?} is neither `expanded` nor `resolved`"))),
		}
	}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
	pub bm25: Bm25Params,
	pub rm3: Rm3Params,
	pub rm3_source: Rm3Source,
	pub rerank: RerankConfig,
}

impl Default for PipelineConfig {
	fn default() -> Self {
		Self {
			bm25: Bm25Params::default(),
			rm3: Rm3Params::default(),
			rm3_source: Rm3Source::Expanded,
			rerank: RerankConfig::default(),
		}
	}
}

/// Shared, read-only retrieval engine. Sessions are passed in by the caller.
pub struct Engine {
	index: Arc<InvertedIndex>,
	pool: QuestionPool,
	similarity: Box<dyn SimilarityScorer>,
	rewriter: Box<dyn RewriteBackend>,
	classifier: Option<Box<dyn UsefulnessClassifier>>,
	pointwise: Box<dyn PointwiseScorer>,
	pairwise: Box<dyn PairwiseScorer>,
	config: PipelineConfig,
}

pub struct EngineBuilder {
	index: Arc<InvertedIndex>,
	pool: QuestionPool,
	similarity: Option<Box<dyn SimilarityScorer>>,
	rewriter: Option<Box<dyn RewriteBackend>>,
	classifier: Option<Box<dyn UsefulnessClassifier>>,
	pointwise: Option<Box<dyn PointwiseScorer>>,
	pairwise: Option<Box<dyn PairwiseScorer>>,
	config: PipelineConfig,
}

impl EngineBuilder {
	pub fn similarity(mut self, s: Box<dyn SimilarityScorer>) -> Self {
		self.similarity = Some(s);
		self
	}

	pub fn rewriter(mut self, r: Box<dyn RewriteBackend>) -> Self {
		self.rewriter = Some(r);
		self
	}

	pub fn classifier(mut self, c: Box<dyn UsefulnessClassifier>) -> Self {
		self.classifier = Some(c);
		self
	}

	pub fn pointwise(mut self, p: Box<dyn PointwiseScorer>) -> Self {
		self.pointwise = Some(p);
		self
	}

	pub fn pairwise(mut self, p: Box<dyn PairwiseScorer>) -> Self {
		self.pairwise = Some(p);
		self
	}

	pub fn config(mut self, config: PipelineConfig) -> Self {
		self.config = config;
		self
	}

	/// Missing backends default to the built-in lexical ones.
	pub fn build(self) -> Result<Engine> {
		if !self.pool.is_filtered() {
			return Err(Error::Contract("engine requires a filtered question pool".into()));
		}
		self.config.rerank.validate()?;
		let index = self.index;
		Ok(Engine {
			similarity: self.similarity.unwrap_or_else(|| Box::new(TfIdfScorer::from_pool(&self.pool))),
			rewriter: self.rewriter.unwrap_or_else(|| Box::new(FallbackRewriter)),
			classifier: self.classifier,
			pointwise: self.pointwise.unwrap_or_else(|| Box::new(LexicalScorer::new(index.clone()))),
			pairwise: self.pairwise.unwrap_or_else(|| Box::new(LogisticPairwise::new(index.clone()))),
			pool: self.pool,
			config: self.config,
			index,
		})
	}
}

/// Per-turn metadata written next to a batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnMetadata {
	pub topic_id: String,
	pub turn: u32,
	pub mode: Mode,
	pub label: Option<UsefulnessLabel>,
	pub backend_ids: String,
}

/// Output of [`Engine::run_batch`].
#[derive(Debug, Clone)]
pub struct BatchOutput {
	pub run: Run,
	pub metadata: Vec<TurnMetadata>,
	/// `(topic_turn_id, result)` in run order.
	pub results: Vec<(String, TurnResult)>,
}

/// Formats `topic_id \t turn \t mode \t label \t backend_ids` lines; an
/// absent label is written as `-`.
pub fn write_metadata(rows: &[TurnMetadata]) -> String {
	let mut out = String::new();
	for r in rows {
		let label = r.label.map_or_else(|| "-".to_string(), |l| l.to_string());
		out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.topic_id, r.turn, r.mode, label, r.backend_ids));
	}
	out
}

pub fn turn_id(topic_id: &str, turn: u32) -> String {
	format!("{topic_id}_{turn}")
}

impl Engine {
	pub fn builder(index: Arc<InvertedIndex>, pool: QuestionPool) -> EngineBuilder {
		EngineBuilder {
			index,
			pool,
			similarity: None,
			rewriter: None,
			classifier: None,
			pointwise: None,
			pairwise: None,
			config: PipelineConfig::default(),
		}
	}

	pub fn index(&self) -> &InvertedIndex {
		&self.index
	}

	pub fn pool(&self) -> &QuestionPool {
		&self.pool
	}

	pub fn config(&self) -> &PipelineConfig {
		&self.config
	}

	pub fn has_classifier(&self) -> bool {
		self.classifier.is_some()
	}

	/// Backend identities as recorded in run metadata.
	pub fn backend_ids(&self) -> String {
		let classify = self.classifier.as_ref().map_or_else(|| "none".to_string(), |c| c.identity());
		let rm3 = match self.config.rm3_source {
			Rm3Source::Expanded => "expanded",
			Rm3Source::Resolved => "resolved",
		};
		format!(
			"rewrite={};similarity={};classify={};pointwise={};pairwise={};rm3={}",
			self.rewriter.identity(),
			self.similarity.identity(),
			classify,
			self.pointwise.identity(),
			self.pairwise.identity(),
			rm3
		)
	}

	/// BM25 + RM3 first stage followed by the rerank cascade.
	pub fn retrieve(&self, expanded: &str, resolved: &str) -> Result<RankedList> {
		let cfg = &self.config;
		let query = WeightedQuery::from_text(expanded);
		let feedback = match cfg.rm3_source {
			Rm3Source::Expanded => query.clone(),
			Rm3Source::Resolved => WeightedQuery::from_text(resolved),
		};
		let expanded_query = self.index.rm3_expand_from(&query, &feedback, &cfg.rm3, &cfg.bm25)?;
		let first = self.index.search(&expanded_query, cfg.rerank.pointwise_depth, &cfg.bm25);
		rerank_cascade(
			expanded,
			&first,
			self.index.as_ref(),
			self.pointwise.as_ref(),
			self.pairwise.as_ref(),
			&cfg.rerank,
		)
	}

	/// Resolves the query; in NO_MI mode retrieves at once, otherwise asks
	/// the best clarifying question and waits for the answer.
	pub fn submit_query(&self, session: &mut Session, query: &str) -> Result<QueryOutcome> {
		session.expect(SessionState::AwaitingQuery)?;
		let user = Utterance::query(query)?;
		let resolved = resolve(self.rewriter.as_ref(), query, &session.history)?;
		let state = QueryState::resolved(query, resolved)?;

		if session.mode == Mode::NoMi {
			let ranking = self.retrieve(state.expanded(), state.resolved_text())?;
			session.history = session.history.append_turn(user, Utterance::passage_list(ranking.clone()))?;
			return Ok(QueryOutcome::Ranked(TurnResult {
				query_state: state,
				question_asked: None,
				label: None,
				ranking,
			}));
		}

		let question = select_question(state.resolved_text(), &self.pool, self.similarity.as_ref())?.clone();
		session.pending = Some((state, question.clone()));
		session.state = SessionState::AwaitingAnswer;
		Ok(QueryOutcome::Clarify(question))
	}

	/// Folds the answer into the query according to the session mode,
	/// retrieves, and appends both halves of the clarifying exchange to the
	/// history. On error the session is left untouched.
	pub fn submit_answer(&self, session: &mut Session, answer: &str) -> Result<TurnResult> {
		session.expect(SessionState::AwaitingAnswer)?;
		let answer_utt = Utterance::answer(answer)?;
		let (state, question) =
			session.pending.clone().ok_or_else(|| Error::Contract("pending exchange missing".into()))?;
		let resolved = state.resolved_text().to_string();

		let (expanded, label) = match session.mode {
			Mode::NoMi => return Err(Error::Contract("NO_MI sessions never await answers".into())),
			Mode::MiAll => (expand(self.rewriter.as_ref(), &resolved, Some(&question.text), Some(answer))?, None),
			Mode::MiClf => {
				let classifier = self
					.classifier
					.as_ref()
					.ok_or_else(|| Error::Contract("MI_CLF requires a usefulness classifier".into()))?;
				let label = classifier.classify(&resolved, &question.text, answer)?;
				(dispatch_expansion(label, &resolved, &question.text, answer, self.rewriter.as_ref())?, Some(label))
			}
		};
		let state = state.with_expansion(expanded, label)?;
		let ranking = self.retrieve(state.expanded(), state.resolved_text())?;

		let history = session
			.history
			.append_turn(Utterance::query(state.raw())?, Utterance::clarifying_question(question.text.clone())?)?
			.append_turn(answer_utt, Utterance::passage_list(ranking.clone()))?;
		session.history = history;
		session.pending = None;
		session.state = SessionState::AwaitingQuery;
		Ok(TurnResult { query_state: state, question_asked: Some(question), label, ranking })
	}

	/// Runs every query turn of every topic through a fresh session, feeding
	/// scripted answers in MI modes. Run scores are rank-derived
	/// (`n - rank + 1`) because cascade stages score on different scales.
	pub fn run_batch(&self, topics: &[ScriptedTopic], mode: Mode, run_id: &str) -> Result<BatchOutput> {
		for topic in topics {
			for turn in topic.history.turns() {
				if turn.user().kind() != UtteranceKind::Query {
					return Err(Error::Input(format!(
						"turn {} is not a query turn",
						turn_id(topic.history.topic_id(), turn.index())
					)));
				}
				if mode.is_mixed_initiative() && topic.answer_for(turn.index()).is_none() {
					return Err(Error::Input(format!(
						"turn {} has no scripted answer",
						turn_id(topic.history.topic_id(), turn.index())
					)));
				}
			}
		}

		let mut records = Vec::new();
		let mut metadata = Vec::new();
		let mut results = Vec::new();
		for topic in topics {
			let topic_id = topic.history.topic_id();
			let mut session = Session::new(topic_id, mode);
			for turn in topic.history.turns() {
				let result = match self.submit_query(&mut session, turn.user().text())? {
					QueryOutcome::Ranked(r) => r,
					QueryOutcome::Clarify(_) => {
						let answer = topic.answer_for(turn.index()).expect("checked above");
						self.submit_answer(&mut session, answer)?
					}
				};
				let tid = turn_id(topic_id, turn.index());
				let n = result.ranking.len();
				for (i, (pid, _)) in result.ranking.entries().iter().enumerate() {
					records.push(RunRecord {
						topic_turn_id: tid.clone(),
						passage_id: pid.clone(),
						rank: i as u32 + 1,
						score: (n - i) as f64,
						run_id: run_id.to_string(),
					});
				}
				metadata.push(TurnMetadata {
					topic_id: topic_id.to_string(),
					turn: turn.index(),
					mode,
					label: result.label,
					backend_ids: self.backend_ids(),
				});
				results.push((tid, result));
			}
		}
		Ok(BatchOutput { run: Run::new(records)?, metadata, results })
	}
}
