//! HTTP+JSON client for remote model backends.
//!
//! Every operation is a `POST {base}/invoke` whose body carries an `op`
//! field; `GET {base}/manifest` lists the ops a backend serves. Connection
//! failures and timeouts surface as [`Error::BackendUnavailable`], bad
//! replies as [`Error::Protocol`].

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clarification::SimilarityScorer;
use crate::conversation::{ConversationHistory, Role};
use crate::error::{Error, Result};
use crate::reranker::{PairwiseScorer, PointwiseScorer};
use crate::rewriter::RewriteBackend;
use crate::usefulness::{UsefulnessClassifier, UsefulnessLabel};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireUtterance {
	pub role: Role,
	pub kind: String,
	pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePassage {
	pub id: String,
	pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePair {
	pub a_id: String,
	pub a_text: String,
	pub b_id: String,
	pub b_text: String,
}

/// Request bodies of the shared protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum WireRequest {
	Resolve {
		query: String,
		history: Vec<WireUtterance>,
	},
	Expand {
		query: String,
		#[serde(default, skip_serializing_if = "Option::is_none")]
		question: Option<String>,
		#[serde(default, skip_serializing_if = "Option::is_none")]
		answer: Option<String>,
	},
	Embed {
		texts: Vec<String>,
	},
	Classify {
		query: String,
		question: String,
		answer: String,
	},
	Score {
		query: String,
		passages: Vec<WirePassage>,
	},
	Prefer {
		query: String,
		pairs: Vec<WirePair>,
	},
}

impl WireRequest {
	pub fn op(&self) -> &'static str {
		match self {
			Self::Resolve { .. } => "resolve",
			Self::Expand { .. } => "expand",
			Self::Embed { .. } => "embed",
			Self::Classify { .. } => "classify",
			Self::Score { .. } => "score",
			Self::Prefer { .. } => "prefer",
		}
	}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextResponse {
	pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
	pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
	pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
	pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferResponse {
	pub probs: Vec<f64>,
}

/// What a backend advertises at `GET /manifest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendManifest {
	pub ops: Vec<String>,
	#[serde(default)]
	pub models: std::collections::BTreeMap<String, String>,
	#[serde(default)]
	pub max_batch: Option<usize>,
}

pub fn history_to_wire(history: &ConversationHistory) -> Vec<WireUtterance> {
	let mut out = Vec::with_capacity(history.len() * 2);
	for t in history.turns() {
		for u in [t.user(), t.system()] {
			out.push(WireUtterance { role: u.role(), kind: u.kind().as_str().to_string(), text: u.text().to_string() });
		}
	}
	out
}

/// Blocking client for one backend endpoint.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
	base: String,
	agent: ureq::Agent,
}

impl RemoteBackend {
	pub fn new(base: impl Into<String>, timeout: Duration) -> Self {
		let agent: ureq::Agent =
			ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
		Self { base: base.into().trim_end_matches('/').to_string(), agent }
	}

	pub fn base(&self) -> &str {
		&self.base
	}

	fn read<T: DeserializeOwned>(
		&self,
		what: &str,
		result: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
	) -> Result<T> {
		let mut resp = match result {
			Ok(r) => r,
			Err(
				e @ (ureq::Error::Io(_)
				| ureq::Error::Timeout(_)
				| ureq::Error::ConnectionFailed
				| ureq::Error::HostNotFound),
			) => return Err(Error::BackendUnavailable(format!("{}: {e}", self.base))),
			Err(e) => return Err(Error::Protocol(format!("{what} at {}: {e}", self.base))),
		};
		let status = resp.status();
		if !status.is_success() {
			let body = resp.body_mut().read_to_string().unwrap_or_default();
			if status.is_server_error() && status.as_u16() == 503 {
				return Err(Error::BackendUnavailable(format!("{}: {status} {body}", self.base)));
			}
			return Err(Error::Protocol(format!("{what} at {} failed with {status}: {body}", self.base)));
		}
		resp.body_mut()
			.read_json()
			.map_err(|e| Error::Protocol(format!("{what} at {}: malformed reply: {e}", self.base)))
	}

	pub fn call<T: DeserializeOwned>(&self, request: &WireRequest) -> Result<T> {
		let url = format!("{}/invoke", self.base);
		self.read(request.op(), self.agent.post(&url).send_json(request))
	}

	pub fn manifest(&self) -> Result<BackendManifest> {
		let url = format!("{}/manifest", self.base);
		self.read("manifest", self.agent.get(&url).call())
	}

	fn identity_string(&self) -> String {
		format!("remote:{}", self.base)
	}
}

impl RewriteBackend for RemoteBackend {
	fn identity(&self) -> String {
		self.identity_string()
	}

	fn supports_resolve(&self) -> bool {
		true
	}

	fn supports_expand(&self) -> bool {
		true
	}

	fn resolve(&self, query: &str, history: &ConversationHistory) -> Result<String> {
		let req = WireRequest::Resolve { query: query.into(), history: history_to_wire(history) };
		Ok(self.call::<TextResponse>(&req)?.text)
	}

	fn expand(&self, resolved: &str, question: Option<&str>, answer: Option<&str>) -> Result<String> {
		let req = WireRequest::Expand {
			query: resolved.into(),
			question: question.map(Into::into),
			answer: answer.map(Into::into),
		};
		Ok(self.call::<TextResponse>(&req)?.text)
	}
}

impl RemoteBackend {
	fn embed(&self, texts: Vec<String>) -> Result<Vec<Vec<f64>>> {
		let n = texts.len();
		let vectors = self.call::<EmbedResponse>(&WireRequest::Embed { texts })?.vectors;
		if vectors.len() != n {
			return Err(Error::Protocol(format!("embed returned {} vectors for {n} texts", vectors.len())));
		}
		Ok(vectors)
	}
}

fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
	if a.len() != b.len() {
		return Err(Error::Protocol("embedding dimensions differ".into()));
	}
	Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

impl SimilarityScorer for RemoteBackend {
	fn identity(&self) -> String {
		self.identity_string()
	}

	fn score(&self, a: &str, b: &str) -> Result<f64> {
		let v = self.embed(vec![a.into(), b.into()])?;
		dot(&v[0], &v[1])
	}

	fn score_many(&self, query: &str, candidates: &[&str]) -> Result<Vec<f64>> {
		let texts = std::iter::once(query).chain(candidates.iter().copied()).map(String::from).collect();
		let v = self.embed(texts)?;
		v[1..].iter().map(|c| dot(&v[0], c)).collect()
	}
}

impl UsefulnessClassifier for RemoteBackend {
	fn identity(&self) -> String {
		self.identity_string()
	}

	fn classify(&self, query: &str, question: &str, answer: &str) -> Result<UsefulnessLabel> {
		let req = WireRequest::Classify { query: query.into(), question: question.into(), answer: answer.into() };
		let label = self.call::<ClassifyResponse>(&req)?.label;
		UsefulnessLabel::try_from(label).map_err(|e| Error::Protocol(e.to_string()))
	}
}

impl PointwiseScorer for RemoteBackend {
	fn identity(&self) -> String {
		self.identity_string()
	}

	fn score(&self, query: &str, passages: &[(&str, &str)]) -> Result<Vec<f64>> {
		let req = WireRequest::Score {
			query: query.into(),
			passages: passages
				.iter()
				.map(|(id, text)| WirePassage { id: (*id).into(), text: (*text).into() })
				.collect(),
		};
		Ok(self.call::<ScoreResponse>(&req)?.scores)
	}
}

impl PairwiseScorer for RemoteBackend {
	fn identity(&self) -> String {
		self.identity_string()
	}

	fn prefer(&self, query: &str, pairs: &[((&str, &str), (&str, &str))]) -> Result<Vec<f64>> {
		let req = WireRequest::Prefer {
			query: query.into(),
			pairs: pairs
				.iter()
				.map(|((a_id, a_text), (b_id, b_text))| WirePair {
					a_id: (*a_id).into(),
					a_text: (*a_text).into(),
					b_id: (*b_id).into(),
					b_text: (*b_text).into(),
				})
				.collect(),
		};
		Ok(self.call::<PreferResponse>(&req)?.probs)
	}
}
