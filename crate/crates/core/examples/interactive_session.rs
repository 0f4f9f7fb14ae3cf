//! One mixed-initiative session driven in code: query, clarifying
//! question, answer, ranked passages; then a follow-up turn.
//!
//!     cargo run --example interactive_session

use std::sync::Arc;

use clarify_rank::clarification::{filter_pool, FilterRules};
use clarify_rank::retrieval::PassageLookup;
use clarify_rank::synthetic::{annotation_set, default_world, ANNOTATION_SEED};
use clarify_rank::usefulness::{train, TrainConfig};
use clarify_rank::{Engine, InvertedIndex, Mode, QueryOutcome, Session};

fn main() -> clarify_rank::Result<()> {
	let world = default_world();
	let (model, _) = train(&annotation_set(ANNOTATION_SEED), &TrainConfig::default())?;
	let index = Arc::new(InvertedIndex::build(world.passages.clone())?);
	let engine = Engine::builder(index, filter_pool(&world.pool, &FilterRules::default()))
		.classifier(Box::new(model))
		.build()?;

	let topic = &world.topics[1];
	let mut session = Session::new("demo", Mode::MiClf);
	for turn in topic.history.turns() {
		println!("user:   {}", turn.user().text());
		let result = match engine.submit_query(&mut session, turn.user().text())? {
			QueryOutcome::Clarify(q) => {
				println!("system: {}", q.text);
				let answer = topic.answer_for(turn.index()).unwrap_or("No.");
				println!("user:   {answer}");
				engine.submit_answer(&mut session, answer)?
			}
			QueryOutcome::Ranked(r) => r,
		};
		let label = result.label.map_or("-", |l| l.name());
		println!("        label {label}, query \"{}\"", result.query_state.expanded());
		for (id, _) in result.ranking.entries().iter().take(3) {
			println!("        {id} {}", engine.index().passage_text(id).unwrap_or_default());
		}
	}
	println!("history holds {} turns", session.history().len());
	Ok(())
}
