//! Filters a question pool and picks the question closest to a query.
//!
//!     cargo run --example clarifying_question

use clarify_rank::clarification::{
	filter_pool, select_question, ClarifyingQuestion, FilterRules, QuestionPool, TfIdfScorer,
};

fn main() -> clarify_rank::Result<()> {
	let raw = QuestionPool::new(
		[
			("q1", "Are you interested in tarantula venom?"),
			("q2", "Do you want to know how to keep a tarantula as a pet?"),
			("q3", "Would you like orb weaver web photos?"),
			("q4", "More?"),
			("q5", "tell me more about spiders"),
		]
		.iter()
		.map(|(id, text)| ClarifyingQuestion { id: id.to_string(), text: text.to_string() })
		.collect(),
	)?;
	let pool = filter_pool(&raw, &FilterRules::default());
	println!("{} of {} questions pass the filter", pool.len(), raw.len());

	let scorer = TfIdfScorer::from_pool(&pool);
	for query in ["tarantula venom", "keeping a pet tarantula", "orb weaver webs"] {
		let q = select_question(query, &pool, &scorer)?;
		println!("{query:<26} -> {} {}", q.id, q.text);
	}
	Ok(())
}
