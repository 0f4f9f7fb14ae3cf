//! Trains the usefulness classifier with stratified cross-validation and
//! classifies a few exchanges.
//!
//!     cargo run --example usefulness_classifier

use clarify_rank::synthetic::{annotation_set, ANNOTATION_SEED};
use clarify_rank::usefulness::{detect_polarity, train, TrainConfig};

fn main() -> clarify_rank::Result<()> {
	let examples = annotation_set(ANNOTATION_SEED);
	let (model, report) = train(&examples, &TrainConfig::default())?;
	for (i, f) in report.folds.iter().enumerate() {
		println!("fold {}: macro-F1 {:.3}, accuracy {:.3}", i + 1, f.macro_f1, f.accuracy);
	}
	println!("mean:   macro-F1 {:.3}, accuracy {:.3}", report.mean_macro_f1, report.mean_accuracy);

	let query = "I'm looking for information on tarantulas.";
	let question = "Are you interested in tarantula venom?";
	for answer in ["No.", "No, I want to know what they eat.", "Yes, exactly that.", "Yes, and whether it hurts dogs."]
	{
		let label = model.classify(query, question, answer)?;
		println!("{answer:<36} polarity {:?}, label {} ({})", detect_polarity(answer), label.value(), label.name());
	}
	Ok(())
}
