//! End-to-end driver over the bundled synthetic corpus: statistics, index,
//! mining, all six corruption objectives, evaluation and analysis.

use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    overlap_metrics, retrieval_success, span_characteristics, OverlapReport, SpanCharacteristics, SuccessReport,
};
use crate::bm25::{load_index, save_index, Bm25Index, Bm25Params, IndexSummary};
use crate::corpus::{dataset_stats, read_corpus, CorpusStats, Document, InputConfig, Schema};
use crate::corruption::{gen_corpus, CorruptionConfig, GenSummary, Objective};
use crate::eval::{evaluate_file, EvalReport, DEFAULT_PRED_SEP};
use crate::miner::{mine_corpus, read_spans, MineSummary, MinerConfig, Thresholds, REFERENCE_CORPUS_SIZE};
use crate::synth::{generate_corpus, generate_predictions, SynthConfig};
use crate::{Error, Result, SCHEMA_VERSION};

/// The bundled 200-document demo corpus (JSONL).
pub const DEMO_CORPUS: &str = include_str!("../data/demo_corpus.jsonl");
/// Toy predictions for [`DEMO_CORPUS`], one `;`-separated line per document.
pub const DEMO_PREDICTIONS: &str = include_str!("../data/demo_predictions.txt");

/// Generator settings behind the bundled files.
pub fn demo_synth_config() -> SynthConfig {
    SynthConfig {
        num_docs: 200,
        seed: 13,
        ..SynthConfig::default()
    }
}

pub const DEMO_PREDICTION_SEED: u64 = 29;

/// Regenerates the bundled demo corpus and predictions as file contents.
pub fn render_demo_files() -> Result<(String, String)> {
    let docs = generate_corpus(&demo_synth_config());
    let dir = std::env::temp_dir().join(format!("spanmine-render-{}", std::process::id()));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("corpus.jsonl");
    crate::corpus::write_corpus(&path, &docs, &Schema::default())?;
    let corpus = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let _ = fs::remove_dir_all(&dir);
    let mut preds = generate_predictions(&docs, DEMO_PREDICTION_SEED).join("\n");
    preds.push('\n');
    Ok((corpus, preds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub input: InputConfig,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
    /// Retrieval depth for the success-rate analysis.
    pub success_k: usize,
    /// Corpus to use instead of the bundled one.
    pub corpus: Option<PathBuf>,
    /// Predictions to use instead of the bundled ones.
    pub predictions: Option<PathBuf>,
}

impl DemoConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            seed: 0,
            input: InputConfig::default(),
            threads: None,
            success_k: 10,
            corpus: None,
            predictions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub schema_version: u32,
    pub seed: u64,
    pub stats: CorpusStats,
    pub index: IndexSummary,
    pub mining: MineSummary,
    pub corruption: Vec<GenSummary>,
    pub eval: EvalReport,
    pub success: SuccessReport,
    pub overlap: OverlapReport,
    pub span_characteristics: SpanCharacteristics,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        let n = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        hasher.update(&buf[..n]);
    }
    let hex = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok((total, hex))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every stage into `cfg.out_dir` and hashes the artifacts.
pub fn run_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| run_stages(cfg)),
        None => run_stages(cfg),
    }
}

fn run_stages(cfg: &DemoConfig) -> Result<DemoReport> {
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let corpus_path = out.join("corpus.jsonl");
    let preds_path = out.join("predictions.txt");
    match &cfg.corpus {
        Some(src) => fs::copy(src, &corpus_path).map(drop).map_err(|e| Error::io(src, e))?,
        None => fs::write(&corpus_path, DEMO_CORPUS).map_err(|e| Error::io(&corpus_path, e))?,
    }
    match &cfg.predictions {
        Some(src) => fs::copy(src, &preds_path).map(drop).map_err(|e| Error::io(src, e))?,
        None => fs::write(&preds_path, DEMO_PREDICTIONS).map_err(|e| Error::io(&preds_path, e))?,
    }
    let schema = Schema::default();
    let docs: Vec<Document> = read_corpus(&corpus_path, &schema)?;
    log::info!("demo corpus: {} documents", docs.len());

    let stats = dataset_stats(docs.iter().cloned())?;
    write_json(&out.join("stats.json"), &stats)?;

    let index_path = out.join("index.bin");
    let index = Bm25Index::from_documents(&docs, Bm25Params::default(), cfg.input.clone())?;
    save_index(&index, &index_path)?;
    let index = load_index(&index_path)?;

    let spans_path = out.join("spans.jsonl");
    let miner = MinerConfig {
        thresholds: Thresholds::default().scaled(index.num_docs(), REFERENCE_CORPUS_SIZE),
        ..MinerConfig::default()
    };
    let mining = mine_corpus(docs.iter().cloned().map(Ok), &index, &miner, &spans_path)?;
    let spans = read_spans(&spans_path)?;

    let mut corruption = Vec::new();
    for objective in Objective::ALL {
        let ccfg = CorruptionConfig {
            seed: cfg.seed,
            ..CorruptionConfig::with_objective(objective)
        };
        let spans = objective.needs_spans().then(|| spans.clone());
        let path = out.join(format!("corrupt-{objective}.jsonl"));
        corruption.push(gen_corpus(docs.iter().cloned().map(Ok), spans, &cfg.input, &ccfg, &path)?);
    }

    let eval = evaluate_file(&preds_path, &docs, DEFAULT_PRED_SEP, &cfg.input)?;
    write_json(&out.join("eval.json"), &eval)?;
    let success = retrieval_success(&docs, &index, cfg.success_k, None)?;
    write_json(&out.join("success.json"), &success)?;
    let overlap = overlap_metrics(&docs, &spans, &cfg.input)?;
    write_json(&out.join("overlap.json"), &overlap)?;
    let characteristics = span_characteristics(&spans);
    write_json(&out.join("span_characteristics.json"), &characteristics)?;

    let mut names = vec![
        "corpus.jsonl".to_string(),
        "predictions.txt".into(),
        "stats.json".into(),
        "index.bin".into(),
        "spans.jsonl".into(),
    ];
    names.extend(Objective::ALL.iter().map(|o| format!("corrupt-{o}.jsonl")));
    names.extend(["eval.json", "success.json", "overlap.json", "span_characteristics.json"].map(String::from));
    let artifacts = names
        .into_iter()
        .map(|name| {
            let (bytes, sha256) = sha256_file(&out.join(&name))?;
            Ok(Artifact { name, bytes, sha256 })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DemoReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        stats,
        index: index.summary(),
        mining,
        corruption,
        eval,
        success,
        overlap,
        span_characteristics: characteristics,
        artifacts,
    })
}
