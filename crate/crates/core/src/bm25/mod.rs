//! Okapi BM25 inverted index and the retrieval-rank statistic.
//!
//! Scores use the non-negative `ln(1 + ..)` idf. A document's rank for a
//! query is the number of documents that score strictly higher than it.

mod persist;

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use persist::{load_index, save_index, FORMAT_VERSION, MAGIC};

use crate::corpus::{normalize, tokenize, Document, InputConfig, TokenizedDoc};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if self.k1 > 0.0 && self.k1.is_finite() && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(Error::InvalidParams {
                k1: self.k1,
                b: self.b,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc_ref: u32,
    pub term_freq: u32,
}

/// A bag of exact terms; the score is the sum of per-term BM25 weights.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    terms: Vec<String>,
}

impl Query {
    pub fn new<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let terms: Vec<String> = terms.into_iter().map(Into::into).collect();
        if terms.is_empty() {
            return Err(Error::InvalidQuery("query has no terms".into()));
        }
        if let Some(bad) = terms
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::InvalidQuery(format!("bad term {bad:?}")));
        }
        Ok(Self { terms })
    }

    /// Normalises and tokenises free text into a query.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(tokenize(&normalize(text)))
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Reusable dense score accumulator; one per worker thread.
#[derive(Debug, Default)]
pub struct ScoreBuffer {
    scores: Vec<f64>,
    touched: Vec<u32>,
}

impl ScoreBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, num_docs: usize) {
        if self.scores.len() != num_docs {
            self.scores = vec![0.0; num_docs];
            self.touched.clear();
        } else {
            for &d in &self.touched {
                self.scores[d as usize] = 0.0;
            }
            self.touched.clear();
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    input: InputConfig,
    postings: HashMap<String, Vec<Posting>>,
    doc_lens: Vec<u32>,
    doc_ids: Vec<String>,
    id_to_slot: HashMap<String, u32>,
    avg_doc_len: f64,
    /// Per-document `k1 * (1 - b + b * len / avg_len)`.
    norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub schema_version: u32,
    pub num_docs: usize,
    pub num_terms: usize,
    pub avg_doc_len: f64,
    pub k1: f64,
    pub b: f64,
    pub max_tokens: usize,
}

impl Bm25Index {
    pub fn summary(&self) -> IndexSummary {
        IndexSummary {
            schema_version: crate::SCHEMA_VERSION,
            num_docs: self.num_docs(),
            num_terms: self.num_terms(),
            avg_doc_len: self.avg_doc_len,
            k1: self.params.k1,
            b: self.params.b,
            max_tokens: self.input.max_tokens,
        }
    }

    /// Builds an index from documents; document order defines slots.
    pub fn build<I>(docs: I, params: Bm25Params, input: InputConfig) -> Result<Self>
    where
        I: IntoIterator<Item = TokenizedDoc>,
    {
        let mut builder = IndexBuilder::new(params, input)?;
        let mut batch = Vec::with_capacity(IndexBuilder::BATCH);
        for doc in docs {
            batch.push(doc);
            if batch.len() == IndexBuilder::BATCH {
                builder.add_batch(&batch)?;
                batch.clear();
            }
        }
        builder.add_batch(&batch)?;
        builder.finish()
    }

    /// Tokenises `docs` with `input` and indexes them.
    pub fn from_documents<'a, I>(docs: I, params: Bm25Params, input: InputConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let tokenized: Vec<TokenizedDoc> = docs.into_iter().map(|d| input.model_input(d)).collect();
        Self::build(tokenized, params, input)
    }

    fn from_parts(
        params: Bm25Params,
        input: InputConfig,
        postings: HashMap<String, Vec<Posting>>,
        doc_lens: Vec<u32>,
        doc_ids: Vec<String>,
    ) -> Result<Self> {
        params.validate()?;
        if doc_lens.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut id_to_slot = HashMap::with_capacity(doc_ids.len());
        for (slot, id) in doc_ids.iter().enumerate() {
            if id_to_slot.insert(id.clone(), slot as u32).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let total: u64 = doc_lens.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_len = total as f64 / doc_lens.len() as f64;
        let norms = doc_lens
            .iter()
            .map(|&len| length_norm(params, len, avg_doc_len))
            .collect();
        Ok(Self {
            params,
            input,
            postings,
            doc_lens,
            doc_ids,
            id_to_slot,
            avg_doc_len,
            norms,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    /// Preprocessing the indexed documents went through.
    pub fn input_config(&self) -> &InputConfig {
        &self.input
    }

    pub fn num_docs(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, slot: usize) -> Option<usize> {
        self.doc_lens.get(slot).map(|&l| l as usize)
    }

    pub fn doc_id(&self, slot: usize) -> Option<&str> {
        self.doc_ids.get(slot).map(String::as_str)
    }

    pub fn slot_of(&self, id: &str) -> Option<usize> {
        self.id_to_slot.get(id).map(|&s| s as usize)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub(crate) fn terms(&self) -> impl Iterator<Item = (&String, &Vec<Posting>)> {
        self.postings.iter()
    }

    pub(crate) fn doc_lens(&self) -> &[u32] {
        &self.doc_lens
    }

    pub(crate) fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf(self.num_docs(), self.doc_freq(term))
    }

    pub fn term_freq(&self, term: &str, slot: usize) -> u32 {
        let postings = self.postings(term);
        postings
            .binary_search_by_key(&(slot as u32), |p| p.doc_ref)
            .map(|i| postings[i].term_freq)
            .unwrap_or(0)
    }

    fn check_slot(&self, slot: usize) -> Result<()> {
        if slot < self.num_docs() {
            Ok(())
        } else {
            Err(Error::SlotOutOfRange {
                slot,
                num_docs: self.num_docs(),
            })
        }
    }

    #[inline]
    fn weight(&self, idf: f64, tf: u32, slot: usize) -> f64 {
        let tf = f64::from(tf);
        idf * tf * (self.params.k1 + 1.0) / (tf + self.norms[slot])
    }

    /// BM25 score of document `slot` for `query`.
    pub fn score(&self, query: &Query, slot: usize) -> Result<f64> {
        self.check_slot(slot)?;
        let mut score = 0.0;
        for term in &query.terms {
            let tf = self.term_freq(term, slot);
            if tf > 0 {
                score += self.weight(self.idf(term), tf, slot);
            }
        }
        Ok(score)
    }

    /// Scores every document matching at least one term. Per-document sums
    /// are accumulated in query-term order, so they equal [`Self::score`]
    /// bit for bit.
    fn accumulate(&self, query: &Query, buf: &mut ScoreBuffer) {
        buf.reset(self.num_docs());
        for term in &query.terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = idf(self.num_docs(), postings.len());
            for p in postings {
                let slot = p.doc_ref as usize;
                if buf.scores[slot] == 0.0 {
                    buf.touched.push(p.doc_ref);
                }
                buf.scores[slot] += self.weight(idf, p.term_freq, slot);
            }
        }
    }

    /// Number of documents scoring strictly higher than `source`.
    pub fn rank(&self, query: &Query, source: usize) -> Result<usize> {
        let mut buf = ScoreBuffer::new();
        Ok(self
            .rank_at_most(query, source, usize::MAX, &mut buf)?
            .expect("uncapped rank"))
    }

    /// Like [`Self::rank`] but gives up as soon as the rank exceeds `cap`,
    /// returning `None`.
    pub fn rank_at_most(
        &self,
        query: &Query,
        source: usize,
        cap: usize,
        buf: &mut ScoreBuffer,
    ) -> Result<Option<usize>> {
        let source_score = self.score(query, source)?;
        let mut above = 0usize;
        if let [term] = query.terms.as_slice() {
            let postings = self.postings(term);
            let idf = idf(self.num_docs(), postings.len());
            for p in postings {
                if self.weight(idf, p.term_freq, p.doc_ref as usize) > source_score {
                    above += 1;
                    if above > cap {
                        return Ok(None);
                    }
                }
            }
            return Ok(Some(above));
        }
        self.accumulate(query, buf);
        for &d in &buf.touched {
            if buf.scores[d as usize] > source_score {
                above += 1;
                if above > cap {
                    return Ok(None);
                }
            }
        }
        Ok(Some(above))
    }

    /// Zero-based position of `slot` in the `top_k` ordering, or `None` if it
    /// does not match the query at all.
    pub fn position(&self, query: &Query, slot: usize, buf: &mut ScoreBuffer) -> Result<Option<usize>> {
        let s = self.score(query, slot)?;
        if s <= 0.0 {
            return Ok(None);
        }
        self.accumulate(query, buf);
        let pos = buf
            .touched
            .iter()
            .filter(|&&d| {
                let other = buf.scores[d as usize];
                other > s || (other == s && (d as usize) < slot)
            })
            .count();
        Ok(Some(pos))
    }

    /// The `k` best documents with positive score: score descending, ties
    /// broken by ascending slot.
    pub fn top_k(&self, query: &Query, k: usize) -> Vec<(usize, f64)> {
        let mut buf = ScoreBuffer::new();
        self.top_k_with(query, k, &mut buf)
    }

    pub fn top_k_with(&self, query: &Query, k: usize, buf: &mut ScoreBuffer) -> Vec<(usize, f64)> {
        self.accumulate(query, buf);
        let mut hits: Vec<(usize, f64)> = buf
            .touched
            .iter()
            .map(|&d| (d as usize, buf.scores[d as usize]))
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
        };
        if k < hits.len() {
            hits.select_nth_unstable_by(k, order);
            hits.truncate(k);
        }
        hits.sort_unstable_by(order);
        hits
    }
}

pub(crate) fn idf(num_docs: usize, df: usize) -> f64 {
    let (n, df) = (num_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn length_norm(params: Bm25Params, len: u32, avg_doc_len: f64) -> f64 {
    params.k1 * (1.0 - params.b + params.b * f64::from(len) / avg_doc_len)
}

/// Incremental index construction. Batches are term-counted in parallel and
/// merged in order, so slots follow insertion order.
pub struct IndexBuilder {
    params: Bm25Params,
    input: InputConfig,
    postings: HashMap<String, Vec<Posting>>,
    doc_lens: Vec<u32>,
    doc_ids: Vec<String>,
}

impl IndexBuilder {
    const BATCH: usize = 4096;

    pub fn new(params: Bm25Params, input: InputConfig) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            input,
            postings: HashMap::new(),
            doc_lens: Vec::new(),
            doc_ids: Vec::new(),
        })
    }

    pub fn add_batch(&mut self, docs: &[TokenizedDoc]) -> Result<()> {
        let counted: Vec<Vec<(&str, u32)>> = docs
            .par_iter()
            .map(|doc| {
                let mut counts: HashMap<&str, u32> = HashMap::new();
                for t in &doc.tokens {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
                counts.into_iter().collect()
            })
            .collect();
        for (doc, counts) in docs.iter().zip(counted) {
            let slot = u32::try_from(self.doc_lens.len())
                .map_err(|_| Error::Usage("too many documents for one index".into()))?;
            let len = u32::try_from(doc.tokens.len())
                .map_err(|_| Error::Usage(format!("document `{}` is too long", doc.doc_id)))?;
            for (term, tf) in counts {
                match self.postings.get_mut(term) {
                    Some(list) => list.push(Posting { doc_ref: slot, term_freq: tf }),
                    None => {
                        self.postings
                            .insert(term.to_string(), vec![Posting { doc_ref: slot, term_freq: tf }]);
                    }
                }
            }
            self.doc_lens.push(len);
            self.doc_ids.push(doc.doc_id.clone());
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Bm25Index> {
        Bm25Index::from_parts(self.params, self.input, self.postings, self.doc_lens, self.doc_ids)
    }
}
