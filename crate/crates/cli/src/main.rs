//! `spanmine`: stats, index, mine, corrupt, eval, analyze and demo.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use spanmine::analysis::{overlap_metrics, retrieval_success, span_characteristics, DEFAULT_SUCCESS_K};
use spanmine::bm25::{load_index, save_index, Bm25Index, Bm25Params};
use spanmine::corpus::{dataset_stats, load_corpus, read_corpus, InputConfig, Schema};
use spanmine::corruption::{gen_corpus, CorruptionConfig, Objective};
use spanmine::eval::{evaluate_file, DEFAULT_PRED_SEP};
use spanmine::miner::{mine_corpus, read_spans, MinerConfig, Stoplist, Thresholds, REFERENCE_CORPUS_SIZE};
use spanmine::pipeline::{run_demo, DemoConfig};
use spanmine::{Error, ErrorCategory, Result, DEFAULT_MAX_TOKENS, SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(name = "spanmine", version, about = "Retrieval-salient span mining and keyphrase evaluation")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0, env = "SPANMINE_SEED")]
    seed: u64,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPANMINE_THREADS")]
    threads: Option<usize>,

    /// Truncation length of model inputs, in tokens.
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_TOKENS)]
    max_tokens: usize,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct SchemaArgs {
    /// JSON field holding the document id.
    #[arg(long, default_value = "id")]
    id_field: String,
    /// JSON field holding the title.
    #[arg(long, default_value = "title")]
    title_field: String,
    /// JSON field holding the body text.
    #[arg(long, default_value = "abstract")]
    body_field: String,
    /// JSON field holding gold keyphrases (list or `;`-joined string).
    #[arg(long, default_value = "keywords")]
    keyphrase_field: String,
}

impl SchemaArgs {
    fn schema(&self) -> Schema {
        Schema {
            id: self.id_field.clone(),
            title: self.title_field.clone(),
            body: self.body_field.clone(),
            keyphrases: self.keyphrase_field.clone(),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dataset statistics of a labeled corpus.
    Stats {
        #[arg(long, env = "SPANMINE_CORPUS")]
        corpus: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        /// Also write the JSON summary here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a BM25 index.
    Index {
        #[arg(long, env = "SPANMINE_CORPUS")]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.2)]
        k1: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Mine salient spans of every corpus document.
    Mine {
        #[arg(long, env = "SPANMINE_CORPUS")]
        corpus: PathBuf,
        #[arg(long, env = "SPANMINE_INDEX")]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Maximum rank per span length, e.g. `1:500,2:430,3:360`.
        #[arg(long, default_value_t = Thresholds::default().to_string())]
        thresholds: String,
        /// Use thresholds as given instead of scaling them to the index size.
        #[arg(long)]
        no_scale: bool,
        /// Corpus size the thresholds are calibrated for.
        #[arg(long, default_value_t = REFERENCE_CORPUS_SIZE)]
        scale_reference: usize,
        /// Stop-word file, one word per line.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Keep at most this many spans per document.
        #[arg(long)]
        max_spans: Option<usize>,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Build a denoising corpus for one objective.
    Corrupt {
        #[arg(long, env = "SPANMINE_CORPUS")]
        corpus: PathBuf,
        /// Spans file; required by the ssr-* and ssp-* objectives.
        #[arg(long, env = "SPANMINE_SPANS")]
        spans: Option<PathBuf>,
        /// ssr-m, ssr-d, ssp-m, ssp-d, ti or tg.
        #[arg(long)]
        objective: Objective,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        ks: f64,
        #[arg(long, default_value_t = 0.2)]
        ko: f64,
        #[arg(long, default_value = "<mask>")]
        mask_token: String,
        #[arg(long, default_value_t = 3.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.3)]
        ti_ratio: f64,
        #[arg(long, default_value = ";")]
        target_sep: String,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Score predictions against gold keyphrases.
    Eval {
        #[arg(long, env = "SPANMINE_CORPUS")]
        gold: PathBuf,
        /// One line per document, or JSONL with `id` and `predictions`.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value = DEFAULT_PRED_SEP)]
        sep: String,
        /// Write the full report, with per-document scores, here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Span and keyphrase diagnostics.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Full pipeline on the bundled synthetic corpus.
    Demo {
        #[arg(long, default_value = "spanmine-demo")]
        out_dir: PathBuf,
        /// Corpus to use instead of the bundled one.
        #[arg(long, requires = "predictions")]
        corpus: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        predictions: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        success_k: usize,
    },
}

#[derive(Subcommand, Debug)]
enum AnalyzeCommand {
    /// Share of present keyphrases retrieving their document in the top k.
    Success {
        #[arg(long, env = "SPANMINE_CORPUS")]
        corpus: PathBuf,
        #[arg(long, env = "SPANMINE_INDEX")]
        index: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SUCCESS_K)]
        k: usize,
        /// Skip documents whose id starts with this prefix.
        #[arg(long)]
        skip_id_prefix: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Overlap between salient spans and gold keyphrases.
    Overlap {
        #[arg(long, env = "SPANMINE_CORPUS")]
        corpus: PathBuf,
        #[arg(long, env = "SPANMINE_SPANS")]
        spans: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Span counts and length distribution.
    Spans {
        #[arg(long, env = "SPANMINE_SPANS")]
        spans: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Data => 1,
        ErrorCategory::Usage => 2,
        ErrorCategory::Io => 3,
    }
}

fn require_input(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn resolved(path: &Path) -> PathBuf {
    if let Ok(p) = path.canonicalize() {
        return p;
    }
    match (path.parent(), path.file_name()) {
        (Some(parent), Some(name)) => {
            let parent = if parent.as_os_str().is_empty() { Path::new(".") } else { parent };
            parent.canonicalize().map(|p| p.join(name)).unwrap_or_else(|_| path.to_path_buf())
        }
        _ => path.to_path_buf(),
    }
}

/// Outputs must be distinct from every input and from each other.
fn check_outputs(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for input in inputs {
        require_input(input)?;
    }
    for (i, out) in outputs.iter().enumerate() {
        let r = resolved(out);
        if inputs.iter().any(|input| resolved(input) == r) {
            return Err(Error::Usage(format!("output {} would overwrite an input", out.display())));
        }
        if outputs[..i].iter().any(|o| resolved(o) == r) {
            return Err(Error::Usage(format!("output {} is given twice", out.display())));
        }
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.to_path_buf(), source: e })?;
        }
    }
    Ok(())
}

fn to_value<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report types serialise")
}

fn write_json_file(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialise");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn print_json(value: &Value) -> Result<()> {
    let mut stdout = io::stdout().lock();
    let io_err = |e| Error::Io { path: "<stdout>".into(), source: e };
    serde_json::to_writer_pretty(&mut stdout, value).map_err(|e| io_err(e.into()))?;
    writeln!(stdout).map_err(io_err)
}

fn emit(value: Value, out: Option<&Path>) -> Result<()> {
    if let Some(path) = out {
        write_json_file(path, &value)?;
    }
    print_json(&value)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }
    if cli.max_tokens == 0 {
        return Err(Error::Usage("--max-tokens must be at least 1".into()));
    }
    let input = InputConfig::with_max_tokens(cli.max_tokens);
    log::info!("threads={} max_tokens={} seed={}", rayon::current_num_threads(), cli.max_tokens, cli.seed);

    match cli.command {
        Command::Stats { corpus, schema, out } => {
            let outs: Vec<&Path> = out.iter().map(PathBuf::as_path).collect();
            check_outputs(&[&corpus], &outs)?;
            let stats = dataset_stats(load_corpus(&corpus, &schema.schema())?.collect::<Result<Vec<_>>>()?)?;
            log::info!("{}: {} labeled documents", corpus.display(), stats.num_docs);
            let mut value = to_value(&stats);
            value["schema_version"] = json!(SCHEMA_VERSION);
            emit(value, out.as_deref())
        }
        Command::Index { corpus, out, k1, b, schema } => {
            check_outputs(&[&corpus], &[&out])?;
            let params = Bm25Params { k1, b };
            params.validate()?;
            let docs = read_corpus(&corpus, &schema.schema())?;
            let index = Bm25Index::from_documents(&docs, params, input)?;
            save_index(&index, &out)?;
            let summary = index.summary();
            log::info!(
                "indexed {} documents, {} terms, k1={k1} b={b} -> {}",
                summary.num_docs,
                summary.num_terms,
                out.display()
            );
            emit(to_value(&summary), None)
        }
        Command::Mine {
            corpus,
            index,
            out,
            thresholds,
            no_scale,
            scale_reference,
            stopwords,
            max_spans,
            schema,
        } => {
            let mut inputs: Vec<&Path> = vec![&corpus, &index];
            inputs.extend(stopwords.as_deref());
            check_outputs(&inputs, &[&out])?;
            let thresholds: Thresholds = thresholds.parse()?;
            let index = load_index(&index)?;
            if index.input_config().max_tokens != cli.max_tokens {
                log::warn!(
                    "index was built with max_tokens={}, using that instead of {}",
                    index.input_config().max_tokens,
                    cli.max_tokens
                );
            }
            let thresholds = if no_scale {
                thresholds
            } else {
                thresholds.scaled(index.num_docs(), scale_reference)
            };
            let stoplist = match stopwords {
                Some(path) => Stoplist::from_file(path)?,
                None => Stoplist::english(),
            };
            log::info!("mining {} with thresholds {thresholds}", corpus.display());
            let cfg = MinerConfig { thresholds, stoplist, max_spans };
            let summary = mine_corpus(load_corpus(&corpus, &schema.schema())?, &index, &cfg, &out)?;
            log::info!("{} documents, {} spans -> {}", summary.docs_processed, summary.total_spans, out.display());
            emit(to_value(&summary), None)
        }
        Command::Corrupt {
            corpus,
            spans,
            objective,
            out,
            ks,
            ko,
            mask_token,
            lambda,
            ti_ratio,
            target_sep,
            schema,
        } => {
            let mut inputs: Vec<&Path> = vec![&corpus];
            inputs.extend(spans.as_deref());
            check_outputs(&inputs, &[&out])?;
            let cfg = CorruptionConfig {
                objective,
                ks,
                ko,
                mask_token,
                poisson_lambda: lambda,
                ti_mask_ratio: ti_ratio,
                target_sep,
                seed: cli.seed,
            };
            cfg.validate()?;
            let records = match (objective.needs_spans(), spans) {
                (true, None) => return Err(Error::Usage(format!("--spans is required for {objective}"))),
                (true, Some(path)) => Some(read_spans(path)?),
                (false, Some(_)) => {
                    log::warn!("--spans is ignored for {objective}");
                    None
                }
                (false, None) => None,
            };
            let summary = gen_corpus(load_corpus(&corpus, &schema.schema())?, records, &input, &cfg, &out)?;
            log::info!(
                "{objective}: {} examples, {:.1}% tokens corrupted -> {}",
                summary.examples_written,
                summary.corrupted_pct,
                out.display()
            );
            emit(to_value(&summary), None)
        }
        Command::Eval { gold, predictions, sep, out, schema } => {
            let outs: Vec<&Path> = out.iter().map(PathBuf::as_path).collect();
            check_outputs(&[&gold, &predictions], &outs)?;
            let docs = read_corpus(&gold, &schema.schema())?;
            log::info!("{}: {} documents", gold.display(), docs.len());
            let report = evaluate_file(&predictions, &docs, &sep, &input)?;
            if let Some(path) = out.as_deref() {
                write_json_file(path, &to_value(&report))?;
            }
            let mut summary = to_value(&report);
            summary.as_object_mut().expect("report is an object").remove("documents");
            print_json(&summary)
        }
        Command::Analyze { what } => analyze(what, &input),
        Command::Demo { out_dir, corpus, predictions, success_k } => {
            let mut inputs: Vec<&Path> = Vec::new();
            inputs.extend(corpus.as_deref());
            inputs.extend(predictions.as_deref());
            check_outputs(&inputs, &[])?;
            let cfg = DemoConfig {
                seed: cli.seed,
                input,
                success_k,
                corpus,
                predictions,
                ..DemoConfig::new(&out_dir)
            };
            let report = run_demo(&cfg)?;
            write_json_file(&out_dir.join("report.json"), &to_value(&report))?;
            for a in &report.artifacts {
                log::info!("{:<28} {:>9} bytes  {}", a.name, a.bytes, a.sha256);
            }
            let mut eval = to_value(&report.eval);
            eval.as_object_mut().expect("report is an object").remove("documents");
            print_json(&eval)
        }
    }
}

fn analyze(what: AnalyzeCommand, input: &InputConfig) -> Result<()> {
    match what {
        AnalyzeCommand::Success { corpus, index, k, skip_id_prefix, out, schema } => {
            let outs: Vec<&Path> = out.iter().map(PathBuf::as_path).collect();
            check_outputs(&[&corpus, &index], &outs)?;
            if k == 0 {
                return Err(Error::Usage("--k must be at least 1".into()));
            }
            let docs = read_corpus(&corpus, &schema.schema())?;
            let index = load_index(&index)?;
            log::info!("{} gold documents against an index of {}", docs.len(), index.num_docs());
            let report = retrieval_success(&docs, &index, k, skip_id_prefix.as_deref())?;
            emit(to_value(&report), out.as_deref())
        }
        AnalyzeCommand::Overlap { corpus, spans, out, schema } => {
            let outs: Vec<&Path> = out.iter().map(PathBuf::as_path).collect();
            check_outputs(&[&corpus, &spans], &outs)?;
            let docs = read_corpus(&corpus, &schema.schema())?;
            let records = read_spans(&spans)?;
            let report = overlap_metrics(&docs, &records, &input.untruncated())?;
            emit(to_value(&report), out.as_deref())
        }
        AnalyzeCommand::Spans { spans, out } => {
            let outs: Vec<&Path> = out.iter().map(PathBuf::as_path).collect();
            check_outputs(&[&spans], &outs)?;
            let report = span_characteristics(&read_spans(&spans)?);
            emit(to_value(&report), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 0 for --help/--version and 2 for usage errors.
        Err(e) => e.exit(),
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        (false, _) => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SPANMINE_LOG")
        .format_timestamp(None)
        .init();

    let started = Instant::now();
    match run(cli) {
        Ok(()) => {
            log::info!("done in {:.2?}", started.elapsed());
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}
