//! Shipped data files stay in sync with their generators.

use std::fs;

use clarify_rank::retrieval::read_corpus;
use clarify_rank::synthetic::{annotation_file, default_world};
use clarify_rank::InvertedIndex;

fn shipped(rel: &str) -> String {
	fs::read_to_string(format!("{}/data/{rel}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn world_files_match_the_generator() {
	let world = default_world();
	assert_eq!(shipped("world/corpus.tsv"), world.corpus_text());
	assert_eq!(shipped("world/pool.tsv"), world.pool_text());
	assert_eq!(shipped("world/topics.tsv"), world.topics_text().unwrap());
	assert_eq!(shipped("world/qrels.txt"), world.qrels_text());
	assert_eq!(shipped("annotations.tsv"), annotation_file().unwrap());
}

#[test]
fn shipped_index_matches_a_fresh_build() {
	let index = InvertedIndex::build(read_corpus(shipped("world/corpus.tsv").as_bytes()).unwrap()).unwrap();
	let mut buf = Vec::new();
	index.write_to(&mut buf).unwrap();
	assert_eq!(String::from_utf8(buf).unwrap(), shipped("world/index.txt"));
	let loaded = InvertedIndex::read_from(shipped("world/index.txt").as_bytes()).unwrap();
	assert_eq!(loaded.doc_count(), index.doc_count());
}
