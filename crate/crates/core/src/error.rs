use std::io;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
	#[error("invalid utterance: {0}")]
	InvalidUtterance(String),
	#[error("parse error at line {line}: {message}")]
	Parse { line: usize, message: String },
	#[error("duplicate id: {0}")]
	DuplicateId(String),
	#[error("duplicate passage id: {0}")]
	DuplicatePassage(String),
	#[error("not found: {0}")]
	NotFound(String),
	#[error("invalid arguments: {0}")]
	InvalidArguments(String),
	#[error("backend unavailable: {0}")]
	BackendUnavailable(String),
	#[error("protocol error: {0}")]
	Protocol(String),
	#[error("question pool is empty")]
	EmptyPool,
	#[error("contract violation: {0}")]
	Contract(String),
	#[error("cannot stratify: {0}")]
	Stratification(String),
	#[error("session state error: expected {expected}, session is {actual}")]
	State { expected: &'static str, actual: &'static str },
	#[error("input error: {0}")]
	Input(String),
	#[error("validation error: {0}")]
	Validation(String),
	#[error("config error: {0}")]
	Config(String),
	#[error(transparent)]
	Io(#[from] io::Error),
	#[error(transparent)]
	Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> Error {
	Error::Parse { line, message: message.into() }
}
