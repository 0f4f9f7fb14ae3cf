//! Tokenization and the shared stopword list.

/// Fixed 30-word stopword list. Retained in the index, excluded from RM3
/// expansion candidates and from the "novel content" counts used by the
/// fallback rewriter and the usefulness features.
pub const STOPWORDS: [&str; 30] = [
	"a", "about", "an", "and", "are", "d", "do", "for", "i", "in", "is", "it", "know", "like", "looking", "m", "me",
	"my", "of", "on", "s", "see", "tell", "that", "the", "to", "want", "what", "would", "you",
];

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
	text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

pub fn is_stopword(term: &str) -> bool {
	STOPWORDS.binary_search(&term).is_ok()
}
