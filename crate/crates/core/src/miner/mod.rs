//! Candidate n-gram extraction and rank-threshold salient span selection.

mod stopwords;

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stopwords::Stoplist;

use crate::bm25::{Bm25Index, Query, ScoreBuffer};
use crate::corpus::{is_punctuation, Document, TokenizedDoc};
use crate::{Error, Result, DIGIT_TOKEN, SCHEMA_VERSION};

/// Longest n-gram considered as a candidate.
pub const MAX_SPAN_LEN: usize = 3;

/// Corpus size the default thresholds were tuned for.
pub const REFERENCE_CORPUS_SIZE: usize = 509_818;

/// Maximum accepted rank for each span length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thresholds {
    by_length: [usize; MAX_SPAN_LEN],
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            by_length: [500, 430, 360],
        }
    }
}

impl Thresholds {
    pub fn new(by_length: [usize; MAX_SPAN_LEN]) -> Self {
        Self { by_length }
    }

    /// Same cut-off for every length.
    pub fn uniform(max_rank: usize) -> Self {
        Self {
            by_length: [max_rank; MAX_SPAN_LEN],
        }
    }

    pub fn get(&self, len: usize) -> usize {
        assert!((1..=MAX_SPAN_LEN).contains(&len), "span length {len}");
        self.by_length[len - 1]
    }

    /// Rescales each value by `num_docs / reference_docs`, rounding down.
    pub fn scaled(&self, num_docs: usize, reference_docs: usize) -> Self {
        let scale = |v: usize| ((v as u128 * num_docs as u128) / reference_docs.max(1) as u128) as usize;
        Self {
            by_length: self.by_length.map(scale),
        }
    }
}

impl fmt::Display for Thresholds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.by_length;
        write!(f, "1:{a},2:{b},3:{c}")
    }
}

impl FromStr for Thresholds {
    type Err = Error;

    /// Parses `"1:500,2:430,3:360"`; every length must be given exactly once.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidThresholds(msg);
        let mut values = [None; MAX_SPAN_LEN];
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (len, rank) = part
                .split_once(':')
                .ok_or_else(|| bad(format!("expected LEN:RANK, got `{part}`")))?;
            let len: usize = len.trim().parse().map_err(|_| bad(format!("bad length in `{part}`")))?;
            let rank: usize = rank.trim().parse().map_err(|_| bad(format!("bad rank in `{part}`")))?;
            if !(1..=MAX_SPAN_LEN).contains(&len) {
                return Err(bad(format!("length {len} outside 1..={MAX_SPAN_LEN}")));
            }
            if values[len - 1].replace(rank).is_some() {
                return Err(bad(format!("length {len} given twice")));
            }
        }
        let mut by_length = [0; MAX_SPAN_LEN];
        for (i, v) in values.iter().enumerate() {
            by_length[i] = v.ok_or_else(|| bad(format!("no threshold for length {}", i + 1)))?;
        }
        Ok(Self { by_length })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSpan {
    pub tokens: Vec<String>,
    /// Token offset of the earliest occurrence.
    pub first_occurrence: usize,
}

/// A mined span and its retrieval rank for its own document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "SpanJson", try_from = "SpanJson")]
pub struct SalientSpan {
    pub tokens: Vec<String>,
    pub rank: usize,
}

impl SalientSpan {
    pub fn new(tokens: Vec<String>, rank: usize) -> Self {
        Self { tokens, rank }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Serialize, Deserialize)]
struct SpanJson {
    text: String,
    rank: usize,
    len: usize,
}

impl From<SalientSpan> for SpanJson {
    fn from(s: SalientSpan) -> Self {
        Self {
            text: s.text(),
            rank: s.rank,
            len: s.len(),
        }
    }
}

impl TryFrom<SpanJson> for SalientSpan {
    type Error = String;

    fn try_from(j: SpanJson) -> std::result::Result<Self, String> {
        let tokens: Vec<String> = j.text.split_whitespace().map(str::to_string).collect();
        if tokens.len() != j.len {
            return Err(format!("span `{}` has {} tokens but len {}", j.text, tokens.len(), j.len));
        }
        if !(1..=MAX_SPAN_LEN).contains(&tokens.len()) {
            return Err(format!("span `{}` has invalid length {}", j.text, tokens.len()));
        }
        Ok(Self { tokens, rank: j.rank })
    }
}

/// Canonical order: rank ascending, then longer spans first, then
/// lexicographic by tokens.
pub fn sort_spans(spans: &mut [SalientSpan]) {
    spans.sort_by(|a, b| {
        a.rank
            .cmp(&b.rank)
            .then(b.len().cmp(&a.len()))
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
}

fn eligible(token: &str, stoplist: &Stoplist, sep_token: &str) -> bool {
    token != sep_token && token != DIGIT_TOKEN && !is_punctuation(token) && !stoplist.contains(token)
}

/// Distinct contiguous 1..=3-grams made only of eligible tokens, in order of
/// first occurrence (shorter first at equal offsets).
pub fn candidates(doc: &TokenizedDoc, stoplist: &Stoplist, sep_token: &str) -> Vec<CandidateSpan> {
    let ok: Vec<bool> = doc.tokens.iter().map(|t| eligible(t, stoplist, sep_token)).collect();
    let mut seen: HashSet<&[String]> = HashSet::new();
    let mut out = Vec::new();
    for start in 0..doc.tokens.len() {
        for len in 1..=MAX_SPAN_LEN {
            let end = start + len;
            if end > doc.tokens.len() || !ok[end - 1] {
                break;
            }
            let gram = &doc.tokens[start..end];
            if seen.insert(gram) {
                out.push(CandidateSpan {
                    tokens: gram.to_vec(),
                    first_occurrence: start,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MinerConfig {
    pub thresholds: Thresholds,
    pub stoplist: Stoplist,
    /// Optional cap on spans kept per document (best ranks first).
    pub max_spans: Option<usize>,
}

/// Mines the salient spans of one indexed document.
pub fn mine(
    doc: &TokenizedDoc,
    index: &Bm25Index,
    cfg: &MinerConfig,
    buf: &mut ScoreBuffer,
) -> Result<Vec<SalientSpan>> {
    let slot = index
        .slot_of(&doc.doc_id)
        .ok_or_else(|| Error::UnknownDocument(doc.doc_id.clone()))?;
    let expected = index.doc_len(slot).unwrap_or_default();
    if expected != doc.len() {
        return Err(Error::LengthMismatch {
            id: doc.doc_id.clone(),
            expected,
            actual: doc.len(),
        });
    }
    let mut spans = Vec::new();
    for cand in candidates(doc, &cfg.stoplist, &index.input_config().sep_token) {
        let cap = cfg.thresholds.get(cand.tokens.len());
        let query = Query::new(cand.tokens.iter().cloned())?;
        if let Some(rank) = index.rank_at_most(&query, slot, cap, buf)? {
            spans.push(SalientSpan::new(cand.tokens, rank));
        }
    }
    sort_spans(&mut spans);
    if let Some(cap) = cfg.max_spans {
        spans.truncate(cap);
    }
    Ok(spans)
}

/// One line of a spans file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub id: String,
    pub spans: Vec<SalientSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineSummary {
    pub schema_version: u32,
    pub docs_processed: usize,
    pub docs_without_spans: usize,
    pub total_spans: usize,
    pub avg_spans_per_doc: f64,
    /// Span counts for lengths 1, 2, 3.
    pub length_counts: [usize; MAX_SPAN_LEN],
    /// Fractions of spans with lengths 1, 2, 3 (zeros when no spans).
    pub length_distribution: [f64; MAX_SPAN_LEN],
    pub thresholds: String,
}

pub(crate) fn length_stats(counts: [usize; MAX_SPAN_LEN]) -> [f64; MAX_SPAN_LEN] {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return [0.0; MAX_SPAN_LEN];
    }
    counts.map(|c| c as f64 / total as f64)
}

const MINE_BATCH: usize = 2048;

/// Mines every document of `docs` and writes one [`SpanRecord`] per line
/// to `writer`, in input order. Documents are tokenised with the index's
/// preprocessing.
pub fn mine_to_writer<I, W>(
    docs: I,
    index: &Bm25Index,
    cfg: &MinerConfig,
    mut writer: W,
) -> Result<MineSummary>
where
    I: IntoIterator<Item = Result<Document>>,
    W: Write,
{
    let mut docs_processed = 0usize;
    let mut docs_without_spans = 0usize;
    let mut length_counts = [0usize; MAX_SPAN_LEN];
    let input = index.input_config().clone();
    let write_err = |e: std::io::Error| Error::io("<spans output>", e);

    let mut flush = |batch: &mut Vec<Document>, writer: &mut W| -> Result<()> {
        let mined: Vec<Result<SpanRecord>> = batch
            .par_iter()
            .map_init(ScoreBuffer::new, |buf, doc| {
                let tokenized = input.model_input(doc);
                let spans = mine(&tokenized, index, cfg, buf)?;
                Ok(SpanRecord {
                    id: doc.id.clone(),
                    spans,
                })
            })
            .collect();
        for record in mined {
            let record = record?;
            docs_processed += 1;
            if record.spans.is_empty() {
                docs_without_spans += 1;
            }
            for s in &record.spans {
                length_counts[s.len() - 1] += 1;
            }
            serde_json::to_writer(&mut *writer, &record).map_err(|e| write_err(e.into()))?;
            writer.write_all(b"\n").map_err(write_err)?;
        }
        batch.clear();
        Ok(())
    };

    let mut batch = Vec::with_capacity(MINE_BATCH);
    for doc in docs {
        batch.push(doc?);
        if batch.len() == MINE_BATCH {
            flush(&mut batch, &mut writer)?;
        }
    }
    flush(&mut batch, &mut writer)?;
    writer.flush().map_err(write_err)?;

    let total_spans: usize = length_counts.iter().sum();
    Ok(MineSummary {
        schema_version: SCHEMA_VERSION,
        docs_processed,
        docs_without_spans,
        total_spans,
        avg_spans_per_doc: if docs_processed == 0 {
            0.0
        } else {
            total_spans as f64 / docs_processed as f64
        },
        length_counts,
        length_distribution: length_stats(length_counts),
        thresholds: cfg.thresholds.to_string(),
    })
}

/// [`mine_to_writer`] into a new file at `out`.
pub fn mine_corpus<I>(docs: I, index: &Bm25Index, cfg: &MinerConfig, out: impl AsRef<Path>) -> Result<MineSummary>
where
    I: IntoIterator<Item = Result<Document>>,
{
    let out = out.as_ref();
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    mine_to_writer(docs, index, cfg, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(out, source),
        other => other,
    })
}

/// Reads a spans file written by [`mine_corpus`].
pub fn read_spans(path: impl AsRef<Path>) -> Result<Vec<SpanRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SpanRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedJson {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm25::Bm25Params;
    use crate::corpus::InputConfig;

    fn tdoc(id: &str, text: &str) -> TokenizedDoc {
        TokenizedDoc {
            doc_id: id.into(),
            tokens: text.split_whitespace().map(str::to_string).collect(),
            title_len: 0,
        }
    }

    fn grams(c: &[CandidateSpan]) -> Vec<String> {
        c.iter().map(|c| c.tokens.join(" ")).collect()
    }

    #[test]
    fn candidates_filter_stop_words() {
        let stop = Stoplist::from_words(["the"]);
        let c = candidates(&tdoc("d", "the finite elements"), &stop, "<sep>");
        assert_eq!(grams(&c), ["finite", "finite elements", "elements"]);
    }

    #[test]
    fn candidates_never_cross_separator() {
        let c = candidates(&tdoc("d", "a <sep> b"), &Stoplist::empty(), "<sep>");
        assert_eq!(grams(&c), ["a", "b"]);
    }

    #[test]
    fn candidates_skip_sentinels_and_punctuation() {
        let c = candidates(&tdoc("d", "x <digit> y . z"), &Stoplist::empty(), "<sep>");
        assert_eq!(grams(&c), ["x", "y", "z"]);
    }

    #[test]
    fn candidates_dedup_keeps_first_offset() {
        let c = candidates(&tdoc("d", "a b a b"), &Stoplist::empty(), "<sep>");
        assert_eq!(grams(&c), ["a", "a b", "a b a", "b", "b a", "b a b"]);
        assert_eq!(c[0].first_occurrence, 0);
        assert_eq!(c.iter().find(|c| c.tokens == ["b"]).unwrap().first_occurrence, 1);
    }

    #[test]
    fn figure_trigram_is_candidate() {
        let doc = crate::corpus::model_input(
            &Document::new(
                "f",
                "Biomedical event extraction",
                "We detect event trigger words in biomedical text.",
            ),
            512,
        );
        let c = candidates(&doc, &Stoplist::english(), "<sep>");
        assert!(grams(&c).contains(&"event trigger words".to_string()));
    }

    #[test]
    fn thresholds_parse_and_display() {
        let t: Thresholds = "1:500,2:430,3:360".parse().unwrap();
        assert_eq!(t, Thresholds::default());
        assert_eq!(t.to_string(), "1:500,2:430,3:360");
        assert!("1:500,2:430".parse::<Thresholds>().is_err());
        assert!("1:500,1:4,2:1,3:1".parse::<Thresholds>().is_err());
        assert!("4:1,1:1,2:1,3:1".parse::<Thresholds>().is_err());
        assert!("1:x,2:1,3:1".parse::<Thresholds>().is_err());
        assert_eq!(Thresholds::default().scaled(20, REFERENCE_CORPUS_SIZE), Thresholds::uniform(0));
        assert_eq!(Thresholds::default().scaled(REFERENCE_CORPUS_SIZE, REFERENCE_CORPUS_SIZE), Thresholds::default());
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        // Three documents repeat "u v" and outscore the source: rank 3.
        let mut texts = vec!["u v x x x x x x".to_string()];
        for _ in 0..3 {
            texts.push("u v u v u v".to_string());
        }
        texts.push("filler".to_string());
        let docs: Vec<_> = texts.iter().enumerate().map(|(i, t)| tdoc(&format!("d{i}"), t)).collect();
        let index = Bm25Index::build(docs.clone(), Bm25Params::default(), InputConfig::default()).unwrap();
        let mut buf = ScoreBuffer::new();
        let q = Query::new(["u", "v"]).unwrap();
        assert_eq!(index.rank(&q, 0).unwrap(), 3);

        let keep = MinerConfig {
            thresholds: Thresholds::new([0, 3, 0]),
            stoplist: Stoplist::empty(),
            max_spans: None,
        };
        let spans = mine(&docs[0], &index, &keep, &mut buf).unwrap();
        assert!(spans.iter().any(|s| s.tokens == ["u", "v"] && s.rank == 3));

        let drop = MinerConfig {
            thresholds: Thresholds::new([0, 2, 0]),
            ..keep
        };
        let spans = mine(&docs[0], &index, &drop, &mut buf).unwrap();
        assert!(!spans.iter().any(|s| s.tokens == ["u", "v"]));
    }

    #[test]
    fn mine_rejects_unknown_or_changed_docs() {
        let docs = vec![tdoc("a", "x y"), tdoc("b", "y z")];
        let index = Bm25Index::build(docs, Bm25Params::default(), InputConfig::default()).unwrap();
        let mut buf = ScoreBuffer::new();
        let cfg = MinerConfig::default();
        assert!(matches!(mine(&tdoc("c", "x"), &index, &cfg, &mut buf), Err(Error::UnknownDocument(_))));
        assert!(matches!(mine(&tdoc("a", "x y z"), &index, &cfg, &mut buf), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn span_json_shape() {
        let s = SalientSpan::new(vec!["event".into(), "trigger".into()], 4);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"text":"event trigger","rank":4,"len":2}"#);
        let back: SalientSpan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SalientSpan>(r#"{"text":"a b","rank":1,"len":3}"#).is_err());
        assert!(serde_json::from_str::<SalientSpan>(r#"{"text":"a b c d","rank":1,"len":4}"#).is_err());
    }

    #[test]
    fn sort_order() {
        let mk = |t: &str, r| SalientSpan::new(t.split(' ').map(str::to_string).collect(), r);
        let mut v = vec![mk("b", 0), mk("a c", 0), mk("z", 1), mk("a", 0), mk("a b c", 0)];
        sort_spans(&mut v);
        let texts: Vec<_> = v.iter().map(SalientSpan::text).collect();
        assert_eq!(texts, ["a b c", "a c", "a", "b", "z"]);
    }
}
