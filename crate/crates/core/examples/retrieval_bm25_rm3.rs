//! First-stage retrieval: BM25 over a tiny corpus, then the same query
//! after RM3 expansion.
//!
//!     cargo run --example retrieval_bm25_rm3

use clarify_rank::retrieval::{Bm25Params, InvertedIndex, Passage, Rm3Params, WeightedQuery};

fn main() -> clarify_rank::Result<()> {
	let corpus = [
		("p1", "Tarantulas are large hairy spiders found in warm regions."),
		("p2", "Tarantula venom is mild and rarely dangerous to humans."),
		("p3", "Orb weaver spiders build wheel shaped webs at night."),
		("p4", "Many spiders use venom to subdue insects and other prey."),
		("p5", "Keeping a tarantula as a pet needs a warm, dry enclosure."),
	];
	let index =
		InvertedIndex::build(corpus.iter().map(|(id, t)| Passage::new(*id, *t)).collect::<Result<Vec<_>, _>>()?)?;
	let bm25 = Bm25Params::default();
	let query = WeightedQuery::from_text("tarantula venom");

	println!("BM25 (k1={}, b={}):", bm25.k1, bm25.b);
	for (id, score) in index.search(&query, 10, &bm25).entries() {
		println!("  {id} {score:.4}");
	}

	let rm3 = Rm3Params::default();
	let expanded = index.rm3_expand(&query, &rm3, &bm25)?;
	println!("RM3 query ({} docs, {} terms, lambda {}):", rm3.fb_docs, rm3.fb_terms, rm3.lambda);
	for (term, w) in expanded.weights() {
		println!("  {term:<10} {w:.4}");
	}
	println!("BM25 + RM3:");
	for (id, score) in index.search(&expanded, 10, &bm25).entries() {
		println!("  {id} {score:.4}");
	}
	Ok(())
}
