//! Runs the three modes over the synthetic world and compares them, overall
//! and on the two scripted strata.
//!
//!     cargo run --example batch_experiment

use std::sync::Arc;

use clarify_rank::clarification::{filter_pool, FilterRules};
use clarify_rank::evaluation::{evaluate, EvalOptions, Metric};
use clarify_rank::pipeline::write_metadata;
use clarify_rank::synthetic::{annotation_set, default_world, Stratum, ANNOTATION_SEED};
use clarify_rank::usefulness::{train, TrainConfig};
use clarify_rank::{Engine, InvertedIndex, Mode};

fn main() -> clarify_rank::Result<()> {
	let world = default_world();
	let (model, report) = train(&annotation_set(ANNOTATION_SEED), &TrainConfig::default())?;
	println!("usefulness model: macro-F1 {:.3}, accuracy {:.3}", report.mean_macro_f1, report.mean_accuracy);

	let index = Arc::new(InvertedIndex::build(world.passages.clone())?);
	let pool = filter_pool(&world.pool, &FilterRules::default());
	println!("pool: {} questions, {} after filtering", world.pool.len(), pool.len());
	let engine = Engine::builder(index, pool).classifier(Box::new(model)).build()?;

	let metrics = [Metric::RecallAt(100), Metric::Map, Metric::Mrr, Metric::NdcgAt(3)];
	let opts = EvalOptions::default();
	println!("{:<8} {:>8} {:>8} {:>8} {:>8}", "mode", "R@100", "MAP", "MRR", "nDCG@3");
	let mut reports = Vec::new();
	for mode in Mode::ALL {
		let out = engine.run_batch(&world.topics, mode, &format!("synthetic_{}", mode.as_str().to_lowercase()))?;
		let r = evaluate(&out.run, &world.qrels, &metrics, &opts);
		let m: Vec<String> = metrics.iter().map(|&k| format!("{:>8.4}", r.mean_of(k).unwrap_or(0.0))).collect();
		println!("{:<8} {}", mode.as_str(), m.join(" "));
		if mode == Mode::MiClf {
			print!("{}", write_metadata(&out.metadata[..4]));
		}
		reports.push(r);
	}

	for (stratum, metric) in
		[(Stratum::MisleadingNegative, Metric::NdcgAt(3)), (Stratum::ContentAnswer, Metric::RecallAt(100))]
	{
		let turns: Vec<&str> = world.strata.iter().filter(|(_, s)| *s == stratum).map(|(t, _)| t.as_str()).collect();
		let means: Vec<String> = reports
			.iter()
			.map(|r| {
				let v: f64 =
					turns.iter().map(|t| r.turn_value(t, metric).unwrap_or(0.0)).sum::<f64>() / turns.len() as f64;
				format!("{v:.4}")
			})
			.collect();
		println!("{stratum:?} {metric}: NO_MI {} | MI_ALL {} | MI_CLF {}", means[0], means[1], means[2]);
	}
	Ok(())
}
