//! Deterministic synthetic data: a usefulness annotation set built from
//! four answer patterns, and a small conversational retrieval world with
//! scripted answers and graded judgments.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clarification::{ClarifyingQuestion, QuestionPool};
use crate::conversation::{serialize_scripted_topics, ConversationHistory, ScriptedTopic, Utterance};
use crate::error::Result;
use crate::evaluation::{write_qrels, Qrels};
use crate::pipeline::turn_id;
use crate::retrieval::{Passage, RankedList};
use crate::usefulness::{write_annotations, AnnotatedExample, UsefulnessLabel};

pub const ANNOTATION_SEED: u64 = 7;
pub const WORLD_SEED: u64 = 11;

/// Per-class counts of the shipped 150-example set (none, question,
/// answer, both).
pub const ANNOTATION_COUNTS: [usize; 4] = [47, 78, 16, 9];

/// The four canonical rows, one per label, always included verbatim.
pub const CANONICAL_ROWS: [(&str, &str, &str, UsefulnessLabel); 4] = [
	(
		"I'm looking for information on hobby stores.",
		"Do you want to know hours of operation?",
		"No.",
		UsefulnessLabel::Neither,
	),
	("Find me map of USA.", "Do you want to see a map of US territories?", "Yes.", UsefulnessLabel::Question),
	(
		"Tell me information about computer programming.",
		"Are you interested in a coding bootcamp?",
		"No, I want to know what career options programmers have",
		UsefulnessLabel::Answer,
	),
	(
		"All men are created equal",
		"Would you like to know more about the declaration of independence?",
		"Yes, I'd like to know who wrote it",
		UsefulnessLabel::Both,
	),
];

// (query, helpful question, off-target question, follow-up content)
const SCENARIOS: [(&str, &str, &str, &str); 16] = [
	(
		"Tell me about the Orca whale.",
		"Are you interested in orca hunting behavior?",
		"Do you want to buy a whale watching ticket?",
		"how long they live in captivity",
	),
	(
		"I need information on diabetes.",
		"Do you want to know the symptoms of diabetes?",
		"Are you looking for a diabetes clinic nearby?",
		"diet plans for type two patients",
	),
	(
		"Find me recipes with lentils.",
		"Would you like lentil soup recipes?",
		"Do you want to know where lentils are grown?",
		"quick vegan dinners under thirty minutes",
	),
	(
		"How do I get a passport?",
		"Do you want the passport application steps?",
		"Are you asking about passport photo sizes?",
		"renewal fees for children",
	),
	(
		"Tell me about solar panels.",
		"Are you interested in installing solar panels at home?",
		"Do you want the history of the photovoltaic effect?",
		"battery storage costs and payback period",
	),
	(
		"What is the Marathon race?",
		"Do you want to know the marathon distance?",
		"Are you interested in the Marathon candy bar?",
		"training schedules for beginners",
	),
	(
		"Information about jaguar.",
		"Are you looking for the jaguar animal?",
		"Do you mean the Jaguar car company?",
		"rainforest habitat loss and conservation",
	),
	(
		"I want to learn guitar.",
		"Are you looking for beginner guitar lessons?",
		"Do you want to buy a guitar amplifier?",
		"fingerpicking exercises and chord charts",
	),
	(
		"Tell me about volcanoes.",
		"Do you want to know how volcanoes form?",
		"Are you interested in volcano tourism packages?",
		"famous eruptions such as Pompeii",
	),
	(
		"How do I fix a leaking faucet?",
		"Is it a compression faucet?",
		"Do you want to hire a plumber?",
		"replacing the cartridge washer",
	),
	(
		"Find information on the French Revolution.",
		"Do you want the causes of the French Revolution?",
		"Are you looking for French language courses?",
		"role of Robespierre during the terror",
	),
	(
		"What are good houseplants?",
		"Are you looking for low light houseplants?",
		"Do you want to know about plant nurseries?",
		"ones safe for cats",
	),
	(
		"Tell me about the stock market.",
		"Do you want to know how stock exchanges work?",
		"Are you interested in a brokerage account?",
		"index funds versus individual shares",
	),
	(
		"I am looking for hiking trails.",
		"Do you want trails near mountains?",
		"Are you interested in hiking boots?",
		"dog friendly routes with waterfalls",
	),
	(
		"Explain black holes.",
		"Do you want to know how black holes form?",
		"Are you looking for the Black Hole movie?",
		"event horizon and Hawking radiation",
	),
	(
		"Tell me about coffee.",
		"Are you interested in coffee brewing methods?",
		"Do you want to find a coffee shop?",
		"caffeine effects on sleep quality",
	),
];

const BARE_NEGATIVE: [&str; 7] = ["No.", "No", "no", "Nope.", "Nah.", "No, that's not it.", "No, not that."];
// Rarer answers annotators still marked as not useful.
const LOOSE_NEGATIVE: [&str; 2] = ["Not really.", "No thanks."];
const BARE_AFFIRMATIVE: [&str; 8] = ["Yes.", "Yes", "yes", "Yeah.", "Sure.", "Yep.", "Correct.", "Yes, exactly."];
const NEGATIVE_CONTENT: [&str; 3] = ["No, I want to know {}", "No, I'm looking for {}", "Nope, tell me about {}"];
const OTHER_CONTENT: [&str; 2] = ["I want to know {}", "Actually {}"];
const AFFIRMATIVE_CONTENT: [&str; 3] = ["Yes, I'd like to know {}", "Yes, and also {}", "Sure, especially {}"];

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
	items[rng.gen_range(0..items.len())]
}

/// Builds the 150-example annotation set. The four canonical rows come
/// first in their class; the rest are drawn from [`SCENARIOS`].
pub fn annotation_set(seed: u64) -> Vec<AnnotatedExample> {
	let mut rng = ChaCha8Rng::seed_from_u64(seed);
	let mut out = Vec::new();
	for (label, &count) in UsefulnessLabel::ALL.iter().zip(ANNOTATION_COUNTS.iter()) {
		let (q, cq, a, l) = CANONICAL_ROWS[label.value() as usize];
		out.push(AnnotatedExample::new(q, cq, a, l).expect("canonical rows are non-empty"));
		for _ in 1..count {
			let (query, good, bad, content) = SCENARIOS[rng.gen_range(0..SCENARIOS.len())];
			let (question, answer) = match label {
				UsefulnessLabel::Neither => {
					let answer = if rng.gen_bool(0.1) {
						pick(&mut rng, &LOOSE_NEGATIVE)
					} else {
						pick(&mut rng, &BARE_NEGATIVE)
					};
					(bad, answer.to_string())
				}
				UsefulnessLabel::Question => {
					let answer = if rng.gen_bool(0.2) {
						// Echo a word of the question back: no new information.
						let words: Vec<&str> = good.trim_end_matches('?').split(' ').filter(|w| w.len() > 4).collect();
						format!("Yes, {}", words[rng.gen_range(0..words.len())].to_lowercase())
					} else {
						pick(&mut rng, &BARE_AFFIRMATIVE).to_string()
					};
					(good, answer)
				}
				UsefulnessLabel::Answer => {
					let template = match rng.gen_range(0..20) {
						0..=13 => pick(&mut rng, &NEGATIVE_CONTENT),
						14..=17 => pick(&mut rng, &OTHER_CONTENT),
						// Polite agreement that still redirects: annotators disagree on these.
						_ => "Yes, but I mostly need {}",
					};
					(bad, template.replace("{}", content))
				}
				UsefulnessLabel::Both => (good, pick(&mut rng, &AFFIRMATIVE_CONTENT).replace("{}", content)),
			};
			out.push(AnnotatedExample::new(query, question, &answer, *label).expect("templates are non-empty"));
		}
	}
	out
}

/// What a scripted turn is designed to exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratum {
	/// Off-target question answered with a bare negative.
	MisleadingNegative,
	/// Answer names terms of relevant passages the query cannot reach.
	ContentAnswer,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
	pub passages: Vec<Passage>,
	/// Unfiltered; contains questions the default filter rules drop.
	pub pool: QuestionPool,
	pub topics: Vec<ScriptedTopic>,
	pub qrels: Qrels,
	/// `(topic_turn_id, stratum)` for every scripted turn.
	pub strata: Vec<(String, Stratum)>,
}

struct TopicVocab {
	entity: String,
	facet: Vec<String>,
	hidden: Vec<String>,
	distract: Vec<String>,
	filler: Vec<String>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word<R: Rng>(rng: &mut R, seen: &mut HashSet<String>) -> String {
	loop {
		let mut w = String::new();
		for _ in 0..3 {
			w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
			w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
		}
		if seen.insert(w.clone()) {
			return w;
		}
	}
}

fn words<R: Rng>(rng: &mut R, seen: &mut HashSet<String>, n: usize) -> Vec<String> {
	(0..n).map(|_| pseudo_word(rng, seen)).collect()
}

fn sample<R: Rng>(rng: &mut R, from: &[String], n: usize) -> Vec<String> {
	from.choose_multiple(rng, n).cloned().collect()
}

const FOLLOW_UPS: [&str; 4] = ["more about it please", "what else is there", "go on", "anything else"];
const TURN_ONE_ANSWERS: [&str; 4] = ["No.", "No", "Nope.", "no"];

/// Builds a world of `topics * 10` passages. Each topic has four relevant
/// passages mentioning its entity twice, four off-target passages
/// mentioning it once, and two relevant passages that never mention it and
/// share no vocabulary with the others.
///
/// Turn 1 of every topic is answered with a bare negative; turn 2 names
/// two of the unreachable passages' terms.
pub fn world(seed: u64, topics: usize) -> SyntheticWorld {
	let mut rng = ChaCha8Rng::seed_from_u64(seed);
	let mut seen = HashSet::new();
	let vocab: Vec<TopicVocab> = (0..topics)
		.map(|_| TopicVocab {
			entity: pseudo_word(&mut rng, &mut seen),
			facet: words(&mut rng, &mut seen, 6),
			hidden: words(&mut rng, &mut seen, 6),
			distract: words(&mut rng, &mut seen, 4),
			filler: words(&mut rng, &mut seen, 6),
		})
		.collect();

	// (topic, grade, text); ids are assigned after a global shuffle so that
	// id order carries no signal.
	let mut drafts: Vec<(usize, u32, String)> = Vec::new();
	for (t, v) in vocab.iter().enumerate() {
		for _ in 0..4 {
			let mut w = vec![v.entity.clone(), v.entity.clone()];
			w.extend(sample(&mut rng, &v.facet, 3));
			w.extend(sample(&mut rng, &v.filler, 3));
			w.shuffle(&mut rng);
			drafts.push((t, 2, w.join(" ")));
		}
		for named in 0..2 {
			let mut w = vec![v.hidden[named].clone()];
			w.extend(sample(&mut rng, &v.hidden[2..], 3));
			w.shuffle(&mut rng);
			drafts.push((t, 1, w.join(" ")));
		}
		for _ in 0..4 {
			let mut w = vec![v.entity.clone(), v.distract[0].clone(), v.distract[1].clone()];
			w.extend(sample(&mut rng, &v.distract[2..], 1));
			w.extend(sample(&mut rng, &v.filler, 3));
			w.shuffle(&mut rng);
			drafts.push((t, 0, w.join(" ")));
		}
	}
	drafts.shuffle(&mut rng);
	let width = (drafts.len().max(2) - 1).to_string().len();
	let passages: Vec<Passage> = drafts
		.iter()
		.enumerate()
		.map(|(i, (_, _, text))| Passage::new(format!("p{i:0width$}"), text.clone()).expect("generated ids are valid"))
		.collect();

	let mut questions: Vec<ClarifyingQuestion> = vocab
		.iter()
		.enumerate()
		.map(|(t, v)| ClarifyingQuestion {
			id: format!("cq{:03}", t + 1),
			text: format!("Would you like to know about the {} {} of {}?", v.distract[0], v.distract[1], v.entity),
		})
		.collect();
	let junk = [
		"ok?".to_string(),
		"Can you tell me more?".to_string(),
		"What do you mean?".to_string(),
		"Is this what you are looking for?".to_string(),
		questions.first().map_or_else(|| "Any preference?".to_string(), |q| q.text.clone()),
		format!("Tell me about {}", vocab.first().map_or("it", |v| v.entity.as_str())),
	];
	let base = questions.len();
	questions.extend(
		junk.into_iter().enumerate().map(|(i, text)| ClarifyingQuestion { id: format!("cq{:03}", base + i + 1), text }),
	);
	let pool = QuestionPool::new(questions).expect("generated pool ids are unique");

	let mut scripted = Vec::new();
	let mut qrels = Qrels::default();
	let mut strata = Vec::new();
	for (t, v) in vocab.iter().enumerate() {
		let topic_id = format!("s{:02}", t + 1);
		let mut history = ConversationHistory::new(&topic_id);
		let first = format!("tell me about {}", v.entity);
		let second = FOLLOW_UPS[t % FOLLOW_UPS.len()];
		for q in [first.as_str(), second] {
			history = history
				.append_turn(Utterance::query(q).expect("non-empty"), Utterance::passage_list(RankedList::default()))
				.expect("query turns alternate with passage lists");
		}
		let content = if t % 2 == 0 {
			format!("No, I want to know about {} {}", v.hidden[0], v.hidden[1])
		} else {
			format!("Yes, especially {} and {}", v.hidden[0], v.hidden[1])
		};
		let answers = vec![Some(TURN_ONE_ANSWERS[t % TURN_ONE_ANSWERS.len()].to_string()), Some(content)];
		scripted.push(ScriptedTopic { history, answers });

		for (turn, stratum) in [(1, Stratum::MisleadingNegative), (2, Stratum::ContentAnswer)] {
			let tid = turn_id(&topic_id, turn);
			for (i, (owner, grade, _)) in drafts.iter().enumerate() {
				if *owner == t {
					qrels.insert(&tid, passages[i].id(), *grade).expect("one judgment per passage");
				}
			}
			strata.push((tid, stratum));
		}
	}
	SyntheticWorld { passages, pool, topics: scripted, qrels, strata }
}

/// Default desk-scale world: 20 topics, 200 passages.
pub fn default_world() -> SyntheticWorld {
	world(WORLD_SEED, 20)
}

impl SyntheticWorld {
	pub fn corpus_text(&self) -> String {
		self.passages.iter().map(|p| format!("{}\t{}\n", p.id(), p.text())).collect()
	}

	pub fn pool_text(&self) -> String {
		self.pool.questions().iter().map(|q| format!("{}\t{}\n", q.id, q.text)).collect()
	}

	pub fn topics_text(&self) -> Result<String> {
		serialize_scripted_topics(&self.topics)
	}

	pub fn qrels_text(&self) -> String {
		write_qrels(&self.qrels)
	}

	/// Writes `corpus.tsv`, `pool.tsv`, `topics.tsv` and `qrels.txt`.
	pub fn write_to(&self, dir: &Path) -> Result<()> {
		fs::create_dir_all(dir)?;
		fs::write(dir.join("corpus.tsv"), self.corpus_text())?;
		fs::write(dir.join("pool.tsv"), self.pool_text())?;
		fs::write(dir.join("topics.tsv"), self.topics_text()?)?;
		fs::write(dir.join("qrels.txt"), self.qrels_text())?;
		Ok(())
	}
}

/// Shipped annotation file contents.
pub fn annotation_file() -> Result<String> {
	write_annotations(&annotation_set(ANNOTATION_SEED))
}
