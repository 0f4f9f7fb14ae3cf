//! Pointwise then pairwise reranking with the built-in lexical scorers.
//!
//!     cargo run --example rerank_cascade

use std::sync::Arc;

use clarify_rank::reranker::{rerank_cascade, LexicalScorer, LogisticPairwise, RerankConfig};
use clarify_rank::retrieval::{Bm25Params, InvertedIndex, Passage, WeightedQuery};

fn main() -> clarify_rank::Result<()> {
	let docs = [
		("a", "apple pie with a buttery crust"),
		("b", "apple orchards in autumn"),
		("c", "a pie made from pears"),
		("d", "apple pie recipes and apple tart recipes"),
		("e", "crust troubles: why pie crust shrinks"),
	];
	let index =
		Arc::new(InvertedIndex::build(docs.iter().map(|(i, t)| Passage::new(*i, *t)).collect::<Result<Vec<_>, _>>()?)?);
	let query = "apple pie crust";
	let first = index.search(&WeightedQuery::from_text(query), 1000, &Bm25Params::default());
	println!("BM25:      {:?}", first.ids().collect::<Vec<_>>());

	let pointwise = LexicalScorer::new(index.clone());
	let pairwise = LogisticPairwise::new(index.clone());
	for depth in [0, 2, 5] {
		let config = RerankConfig { pointwise_depth: 5, pairwise_depth: depth };
		let out = rerank_cascade(query, &first, index.as_ref(), &pointwise, &pairwise, &config)?;
		let shown: Vec<String> = out.entries().iter().map(|(id, s)| format!("{id}:{s:.3}")).collect();
		println!("pairwise@{depth}: {}", shown.join(" "));
	}
	Ok(())
}
