//! Command-line front end: indexing, training, batch runs, evaluation,
//! agreement and the HTTP service. Reports are printed as JSON.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use clarify_rank::config::{ClassifierSource, EngineConfig, IndexSource};
use clarify_rank::conversation::parse_scripted_topics;
use clarify_rank::evaluation::{
	cohens_kappa, evaluate, parse_metrics, read_qrels, read_run, write_run, EvalOptions, Gain,
};
use clarify_rank::pipeline::write_metadata;
use clarify_rank::retrieval::read_corpus;
use clarify_rank::service::{self, AppState};
use clarify_rank::synthetic;
use clarify_rank::usefulness::{read_annotations, train_with, Lexicon, TrainConfig};
use clarify_rank::{Error, InvertedIndex, Mode};

#[derive(Parser)]
#[command(name = "clarify-rank", version, about = "Mixed-initiative conversational passage retrieval")]
struct Cli {
	#[command(subcommand)]
	command: Command,
}

#[derive(Subcommand)]
enum Command {
	/// Build a serialized index from a `passage_id \t text` corpus.
	Index { corpus: PathBuf, out: PathBuf },
	/// Cross-validate and train the usefulness classifier.
	TrainUsefulness {
		annotations: PathBuf,
		#[arg(long, default_value_t = 5)]
		folds: usize,
		#[arg(long, default_value_t = 13)]
		seed: u64,
		#[arg(long, default_value_t = 600)]
		epochs: usize,
		#[arg(long)]
		lexicon: Option<PathBuf>,
		/// Where to write the trained model (JSON).
		#[arg(long)]
		out: Option<PathBuf>,
	},
	/// Run scripted topics through the pipeline and write a TREC run.
	Run(RunArgs),
	/// Score a run against qrels.
	Evaluate {
		run: PathBuf,
		qrels: PathBuf,
		#[arg(long, default_value = "r@1000,map,mrr,ndcg,ndcg@3,ndcg@5")]
		metrics: String,
		#[arg(long, default_value_t = 1)]
		rel_threshold: u32,
		#[arg(long, value_parser = ["linear", "exponential"], default_value = "linear")]
		gain: String,
		/// Include per-turn values.
		#[arg(long)]
		per_turn: bool,
	},
	/// Cohen's kappa between two label files (annotation files or one label per line).
	Kappa { a: PathBuf, b: PathBuf },
	/// Serve the HTTP session API.
	Serve {
		#[arg(long)]
		config: PathBuf,
		#[arg(long)]
		bind: Option<String>,
	},
	/// Write the synthetic world and annotation set into a directory.
	Synth { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
	topics: PathBuf,
	#[arg(long, value_parser = parse_mode)]
	mode: Mode,
	#[arg(long)]
	out: PathBuf,
	/// Engine config file; the flags below override or replace it.
	#[arg(long)]
	config: Option<PathBuf>,
	#[arg(long, conflicts_with = "corpus")]
	index: Option<PathBuf>,
	#[arg(long)]
	corpus: Option<PathBuf>,
	#[arg(long)]
	pool: Option<PathBuf>,
	#[arg(long, conflicts_with = "annotations")]
	model: Option<PathBuf>,
	#[arg(long)]
	annotations: Option<PathBuf>,
	#[arg(long)]
	run_id: Option<String>,
	/// Metadata sidecar path; defaults to `<out>.meta.tsv`.
	#[arg(long)]
	metadata: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
	s.parse().map_err(|e: Error| e.to_string())
}

fn open(path: &Path) -> clarify_rank::Result<BufReader<File>> {
	File::open(path).map(BufReader::new).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))
}

fn print(v: &Value) {
	// A closed pipe (e.g. `| head`) is not an error worth panicking over.
	let _ = writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn engine_config(args: &RunArgs) -> clarify_rank::Result<EngineConfig> {
	let mut cfg = match &args.config {
		Some(p) => EngineConfig::load(p)?,
		None => {
			let index = match (&args.index, &args.corpus) {
				(Some(p), _) => IndexSource::Serialized(p.clone()),
				(None, Some(p)) => IndexSource::Corpus(p.clone()),
				(None, None) => return Err(Error::InvalidArguments("give --config, --index or --corpus".into())),
			};
			let pool = args
				.pool
				.clone()
				.ok_or_else(|| Error::InvalidArguments("--pool is required without --config".into()))?;
			EngineConfig::new(index, pool)
		}
	};
	if args.config.is_some() {
		if let Some(p) = &args.index {
			cfg.index = IndexSource::Serialized(p.clone());
		}
		if let Some(p) = &args.corpus {
			cfg.index = IndexSource::Corpus(p.clone());
		}
		if let Some(p) = &args.pool {
			cfg.pool = p.clone();
		}
	}
	if let Some(p) = &args.model {
		cfg.classifier = Some(ClassifierSource::Model(p.clone()));
	}
	if let Some(p) = &args.annotations {
		cfg.classifier = Some(ClassifierSource::Annotations(p.clone()));
	}
	cfg.mode = args.mode;
	cfg.validate()?;
	cfg.check_files().map_err(|e| Error::Input(e.to_string()))?;
	Ok(cfg)
}

fn run(cmd: Command) -> clarify_rank::Result<()> {
	match cmd {
		Command::Index { corpus, out } => {
			let index = InvertedIndex::build(read_corpus(open(&corpus)?)?)?;
			let mut buf = Vec::new();
			index.write_to(&mut buf)?;
			fs::write(&out, buf)?;
			print(&json!({
				"passages": index.doc_count(),
				"terms": index.terms().count(),
				"avg_doc_length": index.avg_doc_length(),
				"out": out,
			}));
		}
		Command::TrainUsefulness { annotations, folds, seed, epochs, lexicon, out } => {
			let examples = read_annotations(open(&annotations)?)?;
			let lexicon = match lexicon {
				Some(p) => Lexicon::read(open(&p)?)?,
				None => Lexicon::default(),
			};
			let config = TrainConfig { folds, seed, epochs, ..TrainConfig::default() };
			let (model, report) = train_with(&examples, &config, &lexicon)?;
			if let Some(out) = &out {
				fs::write(out, serde_json::to_vec_pretty(&model)?)?;
			}
			print(&json!({ "examples": examples.len(), "report": report, "model": out }));
		}
		Command::Run(args) => {
			let cfg = engine_config(&args)?;
			let topics = parse_scripted_topics(open(&args.topics)?)?;
			let (engine, report) = cfg.build_engine()?;
			let run_id =
				args.run_id.clone().unwrap_or_else(|| format!("clarify_rank_{}", args.mode.as_str().to_lowercase()));
			let out = engine.run_batch(&topics, args.mode, &run_id)?;
			fs::write(&args.out, write_run(&out.run))?;
			let meta_path = args.metadata.clone().unwrap_or_else(|| {
				let mut p = args.out.clone().into_os_string();
				p.push(".meta.tsv");
				PathBuf::from(p)
			});
			fs::write(&meta_path, write_metadata(&out.metadata))?;
			print(&json!({
				"run_id": run_id,
				"mode": args.mode,
				"turns": out.metadata.len(),
				"rows": out.run.records().len(),
				"out": args.out,
				"metadata": meta_path,
				"backends": engine.backend_ids(),
				"usefulness_training": report,
			}));
		}
		Command::Evaluate { run, qrels, metrics, rel_threshold, gain, per_turn } => {
			let metrics = parse_metrics(&metrics)?;
			let run = read_run(open(&run)?)?;
			let qrels = read_qrels(open(&qrels)?)?;
			let gain = if gain == "exponential" { Gain::Exponential } else { Gain::Linear };
			let report = evaluate(&run, &qrels, &metrics, &EvalOptions { rel_threshold, gain });
			let means: serde_json::Map<String, Value> =
				metrics.iter().map(|m| (m.to_string(), json!(report.mean_of(*m)))).collect();
			let mut v = json!({
				"metrics": means,
				"turns_evaluated": report.per_turn.len(),
				"skipped_turns": report.skipped_turns,
				"zero_ideal_turns": report.zero_ideal_turns,
			});
			if per_turn {
				let rows: serde_json::Map<String, Value> = report
					.per_turn
					.iter()
					.map(|(t, vals)| {
						let vals: serde_json::Map<String, Value> =
							metrics.iter().map(|m| (m.to_string(), json!(vals.get(&m.to_string())))).collect();
						(t.clone(), Value::Object(vals))
					})
					.collect();
				v["per_turn"] = Value::Object(rows);
			}
			print(&v);
		}
		Command::Kappa { a, b } => {
			let (la, lb) = (read_labels(&a)?, read_labels(&b)?);
			if la.len() != lb.len() {
				return Err(Error::InvalidArguments(format!("label counts differ: {} vs {}", la.len(), lb.len())));
			}
			let kappa = cohens_kappa(&la, &lb)?;
			let agree = la.iter().zip(&lb).filter(|(x, y)| x == y).count() as f64 / la.len() as f64;
			print(&json!({ "n": la.len(), "observed_agreement": agree, "kappa": kappa }));
		}
		Command::Serve { config, bind } => {
			let cfg = EngineConfig::load(&config)?;
			let (engine, _) = cfg.build_engine()?;
			let mut state = AppState::new(Arc::new(engine));
			if let Some(p) = &cfg.snapshot {
				state = state.with_snapshot(p)?;
			}
			let addr = bind.unwrap_or(cfg.bind.clone());
			let rt = tokio::runtime::Runtime::new()?;
			rt.block_on(async {
				let listener = service::bind(&addr).await?;
				eprintln!("listening on {}", listener.local_addr()?);
				service::serve(listener, Arc::new(state), async {
					let _ = tokio::signal::ctrl_c().await;
				})
				.await
			})?;
		}
		Command::Synth { dir } => {
			let world = synthetic::default_world();
			world.write_to(&dir)?;
			fs::write(dir.join("annotations.tsv"), synthetic::annotation_file()?)?;
			print(&json!({
				"dir": dir,
				"passages": world.passages.len(),
				"topics": world.topics.len(),
				"questions": world.pool.len(),
			}));
		}
	}
	Ok(())
}

/// First tab-separated field of each non-empty line, as a label.
fn read_labels(path: &Path) -> clarify_rank::Result<Vec<String>> {
	let mut out = Vec::new();
	for line in open(path)?.lines() {
		let line = line?;
		if let Some(label) = line.split('\t').next().map(str::trim).filter(|l| !l.is_empty()) {
			out.push(label.to_string());
		}
	}
	Ok(out)
}

fn exit_code(e: &Error) -> u8 {
	match e {
		// Anything wrong with what the user supplied.
		Error::Input(_)
		| Error::InvalidArguments(_)
		| Error::Config(_)
		| Error::Parse { .. }
		| Error::Validation(_)
		| Error::DuplicateId(_)
		| Error::DuplicatePassage(_)
		| Error::InvalidUtterance(_)
		| Error::EmptyPool => 2,
		Error::Io(io) if io.kind() == io::ErrorKind::NotFound => 2,
		_ => 1,
	}
}

fn main() -> ExitCode {
	let cli = Cli::parse();
	match run(cli.command) {
		Ok(()) => ExitCode::SUCCESS,
		Err(e) => {
			eprintln!("error: {e}");
			ExitCode::from(exit_code(&e))
		}
	}
}
