//! Diagnostics relating salient spans to annotated keyphrases.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Index, Query, ScoreBuffer};
use crate::corpus::{Document, InputConfig};
use crate::eval::{split_against_stemmed, stem_phrase, KeyphraseSet};
use crate::miner::{length_stats, SpanRecord, MAX_SPAN_LEN};
use crate::{Error, Result, SCHEMA_VERSION};

/// Default retrieval depth for success rates.
pub const DEFAULT_SUCCESS_K: usize = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SuccessCell {
    pub attempts: usize,
    pub successes: usize,
    pub rate: f64,
}

impl SuccessCell {
    fn add(&mut self, hit: bool) {
        self.attempts += 1;
        self.successes += usize::from(hit);
    }

    fn merge(&mut self, other: &SuccessCell) {
        self.attempts += other.attempts;
        self.successes += other.successes;
    }

    fn finish(&mut self) {
        self.rate = if self.attempts == 0 {
            0.0
        } else {
            self.successes as f64 / self.attempts as f64
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub schema_version: u32,
    pub top_k: usize,
    pub docs_scored: usize,
    pub docs_skipped: usize,
    /// Keyphrases of length 1, 2, 3.
    pub by_length: [SuccessCell; MAX_SPAN_LEN],
    /// Keyphrases longer than three tokens.
    pub longer: SuccessCell,
    pub overall: SuccessCell,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct SuccessCounts {
    by_length: [SuccessCell; MAX_SPAN_LEN],
    longer: SuccessCell,
}

impl SuccessCounts {
    fn add(&mut self, len: usize, hit: bool) {
        match len {
            1..=MAX_SPAN_LEN => self.by_length[len - 1].add(hit),
            _ => self.longer.add(hit),
        }
    }

    fn merge(mut self, other: SuccessCounts) -> Self {
        for (a, b) in self.by_length.iter_mut().zip(&other.by_length) {
            a.merge(b);
        }
        self.longer.merge(&other.longer);
        self
    }
}

/// Does each present keyphrase retrieve its own document within the top
/// `k`? Presence is decided on the text the index holds for the document.
/// Documents without gold keyphrases, or whose id starts with
/// `skip_id_prefix`, are skipped.
pub fn retrieval_success(
    gold: &[Document],
    index: &Bm25Index,
    k: usize,
    skip_id_prefix: Option<&str>,
) -> Result<SuccessReport> {
    let input = index.input_config();
    let skipped = |d: &Document| {
        d.keyphrases.as_ref().is_none_or(Vec::is_empty)
            || skip_id_prefix.is_some_and(|p| d.id.starts_with(p))
    };
    let per_doc: Vec<Result<SuccessCounts>> = gold
        .par_iter()
        .filter(|d| !skipped(d))
        .map_init(ScoreBuffer::new, |buf, doc| {
            let slot = index
                .slot_of(&doc.id)
                .ok_or_else(|| Error::UnknownDocument(doc.id.clone()))?;
            let tokens = input.model_input(doc).tokens;
            let stemmed_doc = stem_phrase(&tokens);
            let set = KeyphraseSet::from_phrases(doc.keyphrases.iter().flatten()).dedup();
            let (present, _) = split_against_stemmed(&set, &stemmed_doc);
            let mut counts = SuccessCounts::default();
            for phrase in present.phrases() {
                let query = Query::new(phrase.iter().cloned())?;
                let hit = index.position(&query, slot, buf)?.is_some_and(|p| p < k);
                counts.add(phrase.len(), hit);
            }
            Ok(counts)
        })
        .collect();

    let docs_scored = per_doc.len();
    let mut total = SuccessCounts::default();
    for counts in per_doc {
        total = total.merge(counts?);
    }
    let mut overall = SuccessCell::default();
    for cell in total.by_length.iter_mut().chain(std::iter::once(&mut total.longer)) {
        overall.merge(cell);
        cell.finish();
    }
    overall.finish();
    Ok(SuccessReport {
        schema_version: SCHEMA_VERSION,
        top_k: k,
        docs_scored,
        docs_skipped: gold.len() - docs_scored,
        by_length: total.by_length,
        longer: total.longer,
        overall,
    })
}

/// Macro-averaged overlap measures for one length bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapCell {
    pub phrase_recall: f64,
    pub word_recall: f64,
    pub word_precision: f64,
    /// Documents with at least one present keyphrase in the bucket.
    pub recall_docs: usize,
    /// Documents with at least one salient span in the bucket.
    pub precision_docs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub schema_version: u32,
    pub num_docs: usize,
    pub by_length: [OverlapCell; MAX_SPAN_LEN],
    pub overall: OverlapCell,
}

#[derive(Debug, Clone, Copy, Default)]
struct DocOverlap {
    phrase_recall: Option<f64>,
    word_recall: Option<f64>,
    word_precision: Option<f64>,
}

fn words<'a>(phrases: impl Iterator<Item = &'a Vec<String>>) -> HashSet<&'a str> {
    phrases.flatten().map(String::as_str).collect()
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Overlap restricted to phrases accepted by `keep`. All inputs are stemmed.
fn doc_overlap(
    present: &[Vec<String>],
    all_gold: &[Vec<String>],
    spans: &[Vec<String>],
    keep: impl Fn(usize) -> bool,
) -> DocOverlap {
    let present: Vec<&Vec<String>> = present.iter().filter(|p| keep(p.len())).collect();
    let gold: Vec<&Vec<String>> = all_gold.iter().filter(|p| keep(p.len())).collect();
    let spans: Vec<&Vec<String>> = spans.iter().filter(|s| keep(s.len())).collect();
    let span_set: HashSet<&Vec<String>> = spans.iter().copied().collect();
    let span_words = words(spans.iter().copied());
    let present_words = words(present.iter().copied());
    let gold_words = words(gold.iter().copied());
    DocOverlap {
        phrase_recall: ratio(present.iter().filter(|p| span_set.contains(*p)).count(), present.len()),
        word_recall: ratio(present_words.intersection(&span_words).count(), present_words.len()),
        word_precision: ratio(span_words.intersection(&gold_words).count(), span_words.len()),
    }
}

fn average(cells: impl Iterator<Item = DocOverlap>) -> OverlapCell {
    let (mut pr, mut wr, mut wp) = (0.0, 0.0, 0.0);
    let mut out = OverlapCell::default();
    let mut wr_docs = 0usize;
    for c in cells {
        if let Some(v) = c.phrase_recall {
            pr += v;
            out.recall_docs += 1;
        }
        if let Some(v) = c.word_recall {
            wr += v;
            wr_docs += 1;
        }
        if let Some(v) = c.word_precision {
            wp += v;
            out.precision_docs += 1;
        }
    }
    out.phrase_recall = ratio_f(pr, out.recall_docs);
    out.word_recall = ratio_f(wr, wr_docs);
    out.word_precision = ratio_f(wp, out.precision_docs);
    out
}

fn ratio_f(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Phrase recall, word recall and word precision of salient spans against
/// gold keyphrases, stemmed and averaged over documents. Documents without
/// keyphrases are skipped; every other document needs a spans record.
pub fn overlap_metrics(gold: &[Document], spans: &[SpanRecord], input: &InputConfig) -> Result<OverlapReport> {
    let mut by_id: HashMap<&str, &SpanRecord> = HashMap::with_capacity(spans.len());
    for r in spans {
        if by_id.insert(r.id.as_str(), r).is_some() {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }
    let gold_ids: HashSet<&str> = gold.iter().map(|d| d.id.as_str()).collect();
    if let Some(extra) = spans.iter().find(|r| !gold_ids.contains(r.id.as_str())) {
        return Err(Error::Alignment(format!(
            "spans record `{}` has no document in the gold corpus",
            extra.id
        )));
    }
    let labeled: Vec<&Document> = gold
        .iter()
        .filter(|d| d.keyphrases.as_ref().is_some_and(|k| !k.is_empty()))
        .collect();
    let untruncated = input.untruncated();
    let per_doc: Vec<Result<[DocOverlap; MAX_SPAN_LEN + 1]>> = labeled
        .par_iter()
        .map(|doc| {
            let record = by_id
                .get(doc.id.as_str())
                .ok_or_else(|| Error::MissingSpans(doc.id.clone()))?;
            let stemmed_doc = stem_phrase(&untruncated.model_input(doc).tokens);
            let set = KeyphraseSet::from_phrases(doc.keyphrases.iter().flatten()).dedup();
            let (present, _) = split_against_stemmed(&set, &stemmed_doc);
            let span_stems: Vec<Vec<String>> = record.spans.iter().map(|s| stem_phrase(&s.tokens)).collect();
            let mut cells = [DocOverlap::default(); MAX_SPAN_LEN + 1];
            for (len, cell) in cells.iter_mut().take(MAX_SPAN_LEN).enumerate() {
                *cell = doc_overlap(present.stemmed(), set.stemmed(), &span_stems, |l| l == len + 1);
            }
            cells[MAX_SPAN_LEN] = doc_overlap(present.stemmed(), set.stemmed(), &span_stems, |_| true);
            Ok(cells)
        })
        .collect();
    let per_doc = per_doc.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(OverlapReport {
        schema_version: SCHEMA_VERSION,
        num_docs: per_doc.len(),
        by_length: std::array::from_fn(|i| average(per_doc.iter().map(|c| c[i]))),
        overall: average(per_doc.iter().map(|c| c[MAX_SPAN_LEN])),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanCharacteristics {
    pub schema_version: u32,
    pub num_docs: usize,
    pub docs_without_spans: usize,
    pub total_spans: usize,
    /// Averaged over every document, including those without spans.
    pub avg_spans_per_doc: f64,
    pub length_counts: [usize; MAX_SPAN_LEN],
    /// Fractions of spans with lengths 1, 2, 3 (zeros when no spans).
    pub length_distribution: [f64; MAX_SPAN_LEN],
}

pub fn span_characteristics(records: &[SpanRecord]) -> SpanCharacteristics {
    let mut counts = [0usize; MAX_SPAN_LEN];
    for span in records.iter().flat_map(|r| &r.spans) {
        counts[span.len() - 1] += 1;
    }
    let total: usize = counts.iter().sum();
    SpanCharacteristics {
        schema_version: SCHEMA_VERSION,
        num_docs: records.len(),
        docs_without_spans: records.iter().filter(|r| r.spans.is_empty()).count(),
        total_spans: total,
        avg_spans_per_doc: ratio(total, records.len()).unwrap_or(0.0),
        length_counts: counts,
        length_distribution: length_stats(counts),
    }
}
