//! Scores a run against graded judgments and compares two label sets.
//!
//!     cargo run --example evaluate_run

use clarify_rank::evaluation::{
	cohens_kappa, evaluate, macro_f1_and_accuracy, parse_metrics, read_qrels, read_run, EvalOptions, Gain,
};

const RUN: &str = "\
t1_1 Q0 d1 1 3.000000 demo
t1_1 Q0 d2 2 2.000000 demo
t1_1 Q0 d3 3 1.000000 demo
t1_2 Q0 d4 1 2.000000 demo
t1_2 Q0 d5 2 1.000000 demo
";

const QRELS: &str = "\
t1_1 0 d1 1
t1_1 0 d2 0
t1_1 0 d3 1
t1_2 0 d5 2
t1_2 0 d6 1
";

fn main() -> clarify_rank::Result<()> {
	let run = read_run(RUN.as_bytes())?;
	let qrels = read_qrels(QRELS.as_bytes())?;
	let metrics = parse_metrics("r@1000,map,mrr,ndcg,ndcg@3")?;
	for gain in [Gain::Linear, Gain::Exponential] {
		let report = evaluate(&run, &qrels, &metrics, &EvalOptions { gain, ..EvalOptions::default() });
		let cols: Vec<String> =
			metrics.iter().map(|m| format!("{m} {:.4}", report.mean_of(*m).unwrap_or(0.0))).collect();
		println!("{gain:?}: {}", cols.join(", "));
	}

	let truth = [0, 0, 1, 2, 3, 3];
	let predicted = [0, 1, 1, 2, 3, 0];
	let (f1, acc) = macro_f1_and_accuracy(&truth, &predicted);
	println!("macro-F1 {f1:.4}, accuracy {acc:.4}, kappa {:.4}", cohens_kappa(&truth, &predicted)?);
	Ok(())
}
