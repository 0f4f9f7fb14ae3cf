//! Points the engine at a model sidecar. Pass the sidecar's base URL; with
//! no argument the example shows the rewriter falling back when nothing is
//! listening.
//!
//!     cargo run --example remote_backend -- http://127.0.0.1:9000

use std::sync::Arc;
use std::time::Duration;

use clarify_rank::backend::RemoteBackend;
use clarify_rank::clarification::{filter_pool, FilterRules};
use clarify_rank::rewriter::DegradingRewriter;
use clarify_rank::synthetic::default_world;
use clarify_rank::{Engine, InvertedIndex, Mode, QueryOutcome, Session};

fn main() -> clarify_rank::Result<()> {
	let url = std::env::args().nth(1).unwrap_or_else(|| "http://127.0.0.1:9".into());
	let remote = RemoteBackend::new(url.clone(), Duration::from_secs(2));
	match remote.manifest() {
		Ok(m) => println!("{url} serves {:?}", m.ops),
		Err(e) => println!("{url}: {e}"),
	}

	let world = default_world();
	let index = Arc::new(InvertedIndex::build(world.passages.clone())?);
	let engine = Engine::builder(index, filter_pool(&world.pool, &FilterRules::default()))
		.rewriter(Box::new(DegradingRewriter::new(Box::new(remote))))
		.build()?;

	let mut session = Session::new("remote", Mode::MiAll);
	let topic = &world.topics[0];
	for turn in topic.history.turns() {
		if let QueryOutcome::Clarify(q) = engine.submit_query(&mut session, turn.user().text())? {
			let r = engine.submit_answer(&mut session, topic.answer_for(turn.index()).unwrap_or("No."))?;
			println!("{} | {} -> {}", turn.user().text(), q.text, r.query_state.expanded());
		}
	}
	println!("backends: {}", engine.backend_ids());
	Ok(())
}
