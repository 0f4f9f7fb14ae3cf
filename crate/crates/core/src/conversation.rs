//! Dialogue state: utterances, turns, histories and per-turn query states.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::retrieval::RankedList;
use crate::usefulness::UsefulnessLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
	User,
	System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceKind {
	Query,
	Answer,
	ClarifyingQuestion,
	PassageList,
}

impl UtteranceKind {
	pub fn role(self) -> Role {
		match self {
			Self::Query | Self::Answer => Role::User,
			Self::ClarifyingQuestion | Self::PassageList => Role::System,
		}
	}

	pub fn as_str(self) -> &'static str {
		match self {
			Self::Query => "query",
			Self::Answer => "answer",
			Self::ClarifyingQuestion => "clarifying_question",
			Self::PassageList => "passage_list",
		}
	}
}

impl FromStr for UtteranceKind {
	type Err = Error;

	fn from_str(s: &str) -> Result<Self> {
		match s {
			"query" => Ok(Self::Query),
			"answer" => Ok(Self::Answer),
			"clarifying_question" => Ok(Self::ClarifyingQuestion),
			"passage_list" => Ok(Self::PassageList),
			other => Err(Error::InvalidUtterance(format!("unknown utterance kind {other:?}"))),
		}
	}
}

/// One side of a turn. Text is stored verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
	role: Role,
	kind: UtteranceKind,
	text: String,
	passages: Option<RankedList>,
}

impl Utterance {
	pub fn new(role: Role, kind: UtteranceKind, text: impl Into<String>, passages: Option<RankedList>) -> Result<Self> {
		let text = text.into();
		if kind.role() != role {
			return Err(Error::InvalidUtterance(format!("{} cannot be spoken by {role:?}", kind.as_str())));
		}
		if (kind == UtteranceKind::PassageList) != passages.is_some() {
			return Err(Error::InvalidUtterance("passages must be present exactly for passage lists".into()));
		}
		if kind != UtteranceKind::PassageList && text.trim().is_empty() {
			return Err(Error::InvalidUtterance(format!("{} text is empty", kind.as_str())));
		}
		Ok(Self { role, kind, text, passages })
	}

	pub fn query(text: impl Into<String>) -> Result<Self> {
		Self::new(Role::User, UtteranceKind::Query, text, None)
	}

	pub fn answer(text: impl Into<String>) -> Result<Self> {
		Self::new(Role::User, UtteranceKind::Answer, text, None)
	}

	pub fn clarifying_question(text: impl Into<String>) -> Result<Self> {
		Self::new(Role::System, UtteranceKind::ClarifyingQuestion, text, None)
	}

	pub fn passage_list(passages: RankedList) -> Self {
		Self { role: Role::System, kind: UtteranceKind::PassageList, text: String::new(), passages: Some(passages) }
	}

	pub fn role(&self) -> Role {
		self.role
	}

	pub fn kind(&self) -> UtteranceKind {
		self.kind
	}

	pub fn text(&self) -> &str {
		&self.text
	}

	pub fn passages(&self) -> Option<&RankedList> {
		self.passages.as_ref()
	}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
	index: u32,
	user: Utterance,
	system: Utterance,
}

impl Turn {
	pub fn index(&self) -> u32 {
		self.index
	}

	pub fn user(&self) -> &Utterance {
		&self.user
	}

	pub fn system(&self) -> &Utterance {
		&self.system
	}
}

/// Conversation history of one topic. Turn indices run 1..=n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationHistory {
	topic_id: String,
	turns: Vec<Turn>,
}

impl ConversationHistory {
	pub fn new(topic_id: impl Into<String>) -> Self {
		Self { topic_id: topic_id.into(), turns: Vec::new() }
	}

	pub fn topic_id(&self) -> &str {
		&self.topic_id
	}

	pub fn turns(&self) -> &[Turn] {
		&self.turns
	}

	pub fn len(&self) -> usize {
		self.turns.len()
	}

	pub fn is_empty(&self) -> bool {
		self.turns.is_empty()
	}

	/// Most recent user utterance of kind query, if any.
	pub fn last_query(&self) -> Option<&str> {
		self.turns.iter().rev().find(|t| t.user.kind == UtteranceKind::Query).map(|t| t.user.text.as_str())
	}

	/// Returns a new history with one more turn.
	pub fn append_turn(&self, user: Utterance, system: Utterance) -> Result<Self> {
		if user.role != Role::User {
			return Err(Error::InvalidUtterance("first utterance of a turn must be the user's".into()));
		}
		if system.role != Role::System {
			return Err(Error::InvalidUtterance("second utterance of a turn must be the system's".into()));
		}
		check_sequence(self.turns.last().map(|t| t.system.kind), user.kind)?;
		let mut next = self.clone();
		next.turns.push(Turn { index: self.turns.len() as u32 + 1, user, system });
		Ok(next)
	}
}

fn check_sequence(previous_system: Option<UtteranceKind>, user: UtteranceKind) -> Result<()> {
	match (previous_system, user) {
		(None, UtteranceKind::Query) => Ok(()),
		(None, kind) => Err(Error::InvalidUtterance(format!("{} cannot open a conversation", kind.as_str()))),
		(Some(UtteranceKind::PassageList), UtteranceKind::Query)
		| (Some(UtteranceKind::ClarifyingQuestion), UtteranceKind::Answer) => Ok(()),
		(Some(prev), kind) => {
			Err(Error::InvalidUtterance(format!("{} cannot follow {}", kind.as_str(), prev.as_str())))
		}
	}
}

/// The query at each rewriting stage of a turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryState {
	raw: String,
	resolved: String,
	expanded: String,
	label: Option<UsefulnessLabel>,
}

impl QueryState {
	/// State after history resolution; nothing expanded yet.
	pub fn resolved(raw: impl Into<String>, resolved: impl Into<String>) -> Result<Self> {
		let raw = raw.into();
		let resolved = resolved.into();
		if !raw.trim().is_empty() && resolved.trim().is_empty() {
			return Err(Error::Contract("resolved query is empty for a non-empty raw query".into()));
		}
		Ok(Self { raw, expanded: resolved.clone(), resolved, label: None })
	}

	/// Records the expanded query and, when a classifier decided it, the label.
	pub fn with_expansion(mut self, expanded: impl Into<String>, label: Option<UsefulnessLabel>) -> Result<Self> {
		let expanded = expanded.into();
		if label == Some(UsefulnessLabel::Neither) && expanded != self.resolved {
			return Err(Error::Contract("label 0 must leave the resolved query unchanged".into()));
		}
		self.expanded = expanded;
		self.label = label;
		Ok(self)
	}

	pub fn raw(&self) -> &str {
		&self.raw
	}

	pub fn resolved_text(&self) -> &str {
		&self.resolved
	}

	pub fn expanded(&self) -> &str {
		&self.expanded
	}

	pub fn label(&self) -> Option<UsefulnessLabel> {
		self.label
	}
}

/// A topic read from a scripted topic file: the history plus the scripted
/// answer (if any) for each turn, aligned by position.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTopic {
	pub history: ConversationHistory,
	pub answers: Vec<Option<String>>,
}

impl ScriptedTopic {
	pub fn answer_for(&self, turn_index: u32) -> Option<&str> {
		self.answers.get(turn_index as usize - 1).and_then(|a| a.as_deref())
	}
}

/// Parses a six-column topic file.
pub fn parse_topics<R: BufRead>(reader: R) -> Result<Vec<ConversationHistory>> {
	Ok(parse_lines(reader, false)?.into_iter().map(|t| t.history).collect())
}

/// Parses a topic file that may carry a seventh `answer` column.
pub fn parse_scripted_topics<R: BufRead>(reader: R) -> Result<Vec<ScriptedTopic>> {
	parse_lines(reader, true)
}

fn parse_passages(line: usize, text: &str) -> Result<RankedList> {
	let mut entries = Vec::new();
	for item in text.split(' ').filter(|s| !s.is_empty()) {
		let (id, score) =
			item.rsplit_once(':').ok_or_else(|| parse_err(line, format!("bad passage entry {item:?}")))?;
		let score: f64 = score.parse().map_err(|_| parse_err(line, format!("bad passage score in {item:?}")))?;
		entries.push((id.to_string(), score));
	}
	RankedList::from_stages(entries).map_err(|e| parse_err(line, e.to_string()))
}

fn format_passages(list: &RankedList) -> String {
	list.entries().iter().map(|(id, s)| format!("{id}:{s}")).collect::<Vec<_>>().join(" ")
}

fn parse_lines<R: BufRead>(reader: R, scripted: bool) -> Result<Vec<ScriptedTopic>> {
	let mut topics: Vec<ScriptedTopic> = Vec::new();
	let mut seen = HashSet::new();
	for (n, line) in reader.lines().enumerate() {
		let n = n + 1;
		let line = line?;
		if line.is_empty() {
			continue;
		}
		let cols: Vec<&str> = line.split('\t').collect();
		let answer = match (cols.len(), scripted) {
			(6, _) => None,
			(7, true) => Some(cols[6]).filter(|a| !a.trim().is_empty()).map(str::to_string),
			(k, _) => {
				return Err(parse_err(
					n,
					format!("expected {} columns, found {k}", if scripted { "6 or 7" } else { "6" }),
				))
			}
		};
		let topic_id = cols[0];
		if topic_id.is_empty() {
			return Err(parse_err(n, "empty topic id"));
		}
		let index: u32 = cols[1].parse().map_err(|_| parse_err(n, format!("bad turn index {:?}", cols[1])))?;
		let user_kind: UtteranceKind = cols[2].parse().map_err(|e: Error| parse_err(n, e.to_string()))?;
		let system_kind: UtteranceKind = cols[4].parse().map_err(|e: Error| parse_err(n, e.to_string()))?;
		let user = Utterance::new(Role::User, user_kind, cols[3], None).map_err(|e| parse_err(n, e.to_string()))?;
		let passages = match system_kind {
			UtteranceKind::PassageList => Some(parse_passages(n, cols[5])?),
			_ => None,
		};
		let system_text = if passages.is_some() { "" } else { cols[5] };
		let system = Utterance::new(Role::System, system_kind, system_text, passages)
			.map_err(|e| parse_err(n, e.to_string()))?;

		let continues = topics.last().is_some_and(|t| t.history.topic_id == topic_id);
		if !continues {
			if !seen.insert(topic_id.to_string()) {
				return Err(Error::DuplicateId(topic_id.to_string()));
			}
			topics.push(ScriptedTopic { history: ConversationHistory::new(topic_id), answers: Vec::new() });
		}
		let topic = topics.last_mut().expect("topic pushed above");
		let expected = topic.history.len() as u32 + 1;
		if index != expected {
			return Err(parse_err(n, format!("turn index {index} in topic {topic_id}, expected {expected}")));
		}
		topic.history = topic.history.append_turn(user, system).map_err(|e| parse_err(n, e.to_string()))?;
		topic.answers.push(answer);
	}
	Ok(topics)
}

fn check_field(field: &str) -> Result<&str> {
	if field.contains(['\t', '\n', '\r']) {
		return Err(Error::Validation(format!("field {field:?} contains a tab or line break")));
	}
	Ok(field)
}

/// Canonical serialization of histories in the six-column topic format.
pub fn serialize_topics(histories: &[ConversationHistory]) -> Result<String> {
	let mut out = String::new();
	for h in histories {
		for t in &h.turns {
			write_turn(&mut out, h, t)?;
			out.push('\n');
		}
	}
	Ok(out)
}

/// Canonical serialization of scripted topics (seven columns).
pub fn serialize_scripted_topics(topics: &[ScriptedTopic]) -> Result<String> {
	let mut out = String::new();
	for topic in topics {
		for (i, t) in topic.history.turns.iter().enumerate() {
			write_turn(&mut out, &topic.history, t)?;
			out.push('\t');
			out.push_str(check_field(topic.answers.get(i).and_then(|a| a.as_deref()).unwrap_or(""))?);
			out.push('\n');
		}
	}
	Ok(out)
}

fn write_turn(out: &mut String, h: &ConversationHistory, t: &Turn) -> Result<()> {
	let system_text = match &t.system.passages {
		Some(list) => format_passages(list),
		None => t.system.text.clone(),
	};
	let cols = [
		check_field(&h.topic_id)?,
		&t.index.to_string(),
		t.user.kind.as_str(),
		check_field(&t.user.text)?,
		t.system.kind.as_str(),
		check_field(&system_text)?,
	];
	out.push_str(&cols.join("\t"));
	Ok(())
}

impl fmt::Display for ConversationHistory {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		for t in &self.turns {
			writeln!(f, "[{}] user({}): {}", t.index, t.user.kind.as_str(), t.user.text)?;
			match &t.system.passages {
				Some(p) => writeln!(f, "[{}] system: {} passages", t.index, p.len())?,
				None => writeln!(f, "[{}] system({}): {}", t.index, t.system.kind.as_str(), t.system.text)?,
			}
		}
		Ok(())
	}
}
