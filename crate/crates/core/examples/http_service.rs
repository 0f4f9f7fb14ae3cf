//! Starts the session service on an ephemeral port and walks through one
//! exchange with a plain HTTP client.
//!
//!     cargo run --example http_service

use std::sync::Arc;

use serde_json::{json, Value};

use clarify_rank::clarification::{filter_pool, FilterRules};
use clarify_rank::service::{spawn_local, AppState};
use clarify_rank::synthetic::{annotation_set, default_world, ANNOTATION_SEED};
use clarify_rank::usefulness::{train, TrainConfig};
use clarify_rank::{Engine, InvertedIndex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
	let world = default_world();
	let (model, _) = train(&annotation_set(ANNOTATION_SEED), &TrainConfig::default())?;
	let index = Arc::new(InvertedIndex::build(world.passages.clone())?);
	let engine = Engine::builder(index, filter_pool(&world.pool, &FilterRules::default()))
		.classifier(Box::new(model))
		.build()?;

	let rt = tokio::runtime::Runtime::new()?;
	let (addr, stop, handle) = rt.block_on(spawn_local(Arc::new(AppState::new(Arc::new(engine)))))?;
	let base = format!("http://{addr}");
	let post = |path: &str, body: Value| -> Result<Value, ureq::Error> {
		ureq::post(&format!("{base}{path}")).send_json(body)?.body_mut().read_json()
	};

	let s = post("/session", json!({ "mode": "MI_CLF" }))?;
	let id = s["session_id"].as_str().unwrap_or_default().to_string();
	println!("POST /session -> {s}");
	let q = post(&format!("/session/{id}/query"), json!({ "text": world.topics[0].history.turns()[0].user().text() }))?;
	println!("POST /query   -> {}", q["clarifying_question"]);
	let a = post(&format!("/session/{id}/answer"), json!({ "text": "No." }))?;
	println!(
		"POST /answer  -> label {} ({}), {} passages",
		a["label"],
		a["label_name"],
		a["passages"].as_array().map_or(0, Vec::len)
	);
	let health: Value = ureq::get(&format!("{base}/healthz")).call()?.body_mut().read_json()?;
	println!("GET /healthz  -> {health}");

	let _ = stop.send(());
	rt.block_on(handle)??;
	Ok(())
}
