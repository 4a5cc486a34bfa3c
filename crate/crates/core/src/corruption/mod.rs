//! Denoising example construction: salient span recovery / prediction with
//! masking or deletion, plus text-infilling and title-generation baselines.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Document, InputConfig, TokenizedDoc};
use crate::miner::{sort_spans, SalientSpan, SpanRecord};
use crate::{Error, Result, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "ssr-m")]
    SsrMask,
    #[serde(rename = "ssr-d")]
    SsrDelete,
    #[serde(rename = "ssp-m")]
    SspMask,
    #[serde(rename = "ssp-d")]
    SspDelete,
    #[serde(rename = "ti")]
    TextInfilling,
    #[serde(rename = "tg")]
    TitleGeneration,
}

impl Objective {
    pub const ALL: [Objective; 6] = [
        Objective::SsrMask,
        Objective::SsrDelete,
        Objective::SspMask,
        Objective::SspDelete,
        Objective::TextInfilling,
        Objective::TitleGeneration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::SsrMask => "ssr-m",
            Objective::SsrDelete => "ssr-d",
            Objective::SspMask => "ssp-m",
            Objective::SspDelete => "ssp-d",
            Objective::TextInfilling => "ti",
            Objective::TitleGeneration => "tg",
        }
    }

    pub fn needs_spans(self) -> bool {
        matches!(
            self,
            Objective::SsrMask | Objective::SsrDelete | Objective::SspMask | Objective::SspDelete
        )
    }

    /// True when corrupted intervals are replaced by a mask token.
    pub fn masks(self) -> bool {
        matches!(
            self,
            Objective::SsrMask | Objective::SspMask | Objective::TextInfilling
        )
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown objective `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionConfig {
    pub objective: Objective,
    /// Probability of corrupting each salient-span occurrence.
    pub ks: f64,
    /// Probability of corrupting each token outside span occurrences.
    pub ko: f64,
    pub mask_token: String,
    /// Mean masked-span length for text infilling.
    pub poisson_lambda: f64,
    /// Fraction of tokens text infilling tries to mask.
    pub ti_mask_ratio: f64,
    /// Separator between spans in prediction targets.
    pub target_sep: String,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            objective: Objective::SsrDelete,
            ks: 0.4,
            ko: 0.2,
            mask_token: "<mask>".into(),
            poisson_lambda: 3.0,
            ti_mask_ratio: 0.3,
            target_sep: ";".into(),
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn with_objective(objective: Objective) -> Self {
        Self {
            objective,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("ks", self.ks)?;
        prob("ko", self.ko)?;
        prob("ti mask ratio", self.ti_mask_ratio)?;
        if !(self.poisson_lambda > 0.0 && self.poisson_lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "poisson lambda must be positive, got {}",
                self.poisson_lambda
            )));
        }
        if self.mask_token.is_empty() || self.mask_token.chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig("mask token must be a nonempty word".into()));
        }
        if self.target_sep.is_empty() || self.target_sep.chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig("target separator must be a nonempty word".into()));
        }
        Ok(())
    }
}

/// RNG for one document, keyed by the global seed and the document id so
/// output does not depend on processing order.
pub fn doc_rng(seed: u64, doc_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(doc_id.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Half-open token interval. `start == end` marks a bare mask insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Sorted, non-overlapping intervals to corrupt.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorruptionPlan {
    pub intervals: Vec<Interval>,
    /// Tokens lying inside some salient-span occurrence, corrupted or not.
    pub span_covered: usize,
}

impl CorruptionPlan {
    pub fn corrupted_tokens(&self) -> usize {
        self.intervals.iter().map(Interval::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

/// Occurrences of the spans in `tokens`, matched longest span first. Tokens
/// already claimed by an earlier match cannot be matched again.
pub fn locate_occurrences(tokens: &[String], spans: &[SalientSpan]) -> Vec<Interval> {
    let mut order: Vec<&SalientSpan> = spans.iter().filter(|s| !s.is_empty()).collect();
    order.sort_by(|a, b| b.len().cmp(&a.len()).then(a.rank.cmp(&b.rank)).then_with(|| a.tokens.cmp(&b.tokens)));
    order.dedup_by(|a, b| a.tokens == b.tokens);

    let mut claimed = vec![false; tokens.len()];
    let mut found = Vec::new();
    for span in order {
        let len = span.len();
        if len > tokens.len() {
            continue;
        }
        let mut i = 0;
        while i + len <= tokens.len() {
            if tokens[i..i + len] == span.tokens[..] && !claimed[i..i + len].iter().any(|&c| c) {
                claimed[i..i + len].iter_mut().for_each(|c| *c = true);
                found.push(Interval { start: i, end: i + len });
                i += len;
            } else {
                i += 1;
            }
        }
    }
    found.sort_unstable();
    found
}

/// Marks every span occurrence with probability `ks` and every other token
/// with probability `ko`. Draws are made left to right.
pub fn plan_corruption<R: Rng>(
    doc: &TokenizedDoc,
    spans: &[SalientSpan],
    ks: f64,
    ko: f64,
    rng: &mut R,
) -> CorruptionPlan {
    let occurrences = locate_occurrences(&doc.tokens, spans);
    let span_covered = occurrences.iter().map(Interval::len).sum();
    let mut intervals = Vec::new();
    let mut next = occurrences.iter().peekable();
    let mut i = 0;
    while i < doc.tokens.len() {
        match next.peek() {
            Some(occ) if occ.start == i => {
                if rng.random::<f64>() < ks {
                    intervals.push(**occ);
                }
                i = occ.end;
                next.next();
            }
            _ => {
                if rng.random::<f64>() < ko {
                    intervals.push(Interval { start: i, end: i + 1 });
                }
                i += 1;
            }
        }
    }
    CorruptionPlan {
        intervals,
        span_covered,
    }
}

/// Random Poisson-length spans until about `ratio` of the tokens are
/// covered. A zero-length draw inserts a bare mask.
pub fn plan_infilling<R: Rng>(len: usize, lambda: f64, ratio: f64, rng: &mut R) -> CorruptionPlan {
    let poisson = Poisson::new(lambda).expect("lambda validated positive");
    let budget = (ratio * len as f64).round() as usize;
    let mut claimed = vec![false; len];
    let mut inserts: BTreeSet<usize> = BTreeSet::new();
    let mut intervals = Vec::new();
    let mut masked = 0usize;
    let max_attempts = 100 + 10 * len;
    let mut attempts = 0;
    while masked < budget && attempts < max_attempts {
        attempts += 1;
        let span = (poisson.sample(rng) as usize).min(len);
        if span == 0 {
            let pos = rng.random_range(0..=len);
            let inside = pos > 0 && pos < len && claimed[pos - 1] && claimed[pos];
            if !inside && inserts.insert(pos) {
                intervals.push(Interval { start: pos, end: pos });
            }
            continue;
        }
        let start = rng.random_range(0..=len - span);
        let end = start + span;
        if claimed[start..end].iter().any(|&c| c) || inserts.range(start + 1..end).next().is_some() {
            continue;
        }
        claimed[start..end].iter_mut().for_each(|c| *c = true);
        intervals.push(Interval { start, end });
        masked += span;
    }
    intervals.sort_unstable();
    CorruptionPlan {
        intervals,
        span_covered: 0,
    }
}

/// Replaces each planned interval with one mask token.
pub fn apply_mask(tokens: &[String], plan: &CorruptionPlan, mask_token: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut cursor = 0;
    for iv in &plan.intervals {
        out.extend_from_slice(&tokens[cursor..iv.start]);
        out.push(mask_token.to_string());
        cursor = iv.end;
    }
    out.extend_from_slice(&tokens[cursor..]);
    out
}

/// Drops each planned interval.
pub fn apply_delete(tokens: &[String], plan: &CorruptionPlan) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut cursor = 0;
    for iv in &plan.intervals {
        out.extend_from_slice(&tokens[cursor..iv.start]);
        cursor = iv.end;
    }
    out.extend_from_slice(&tokens[cursor..]);
    out
}

fn is_contiguous_sub(short: &[String], long: &[String]) -> bool {
    long.windows(short.len()).any(|w| w == short)
}

/// Span-prediction target: spans sorted by rank, joined by `sep`. Exact
/// duplicates and spans contained in a longer span are dropped. Returns
/// `None` when nothing is left.
pub fn build_ssp_target(spans: &[SalientSpan], sep: &str) -> Option<Vec<String>> {
    let mut sorted = spans.to_vec();
    sort_spans(&mut sorted);
    let mut kept: Vec<&SalientSpan> = Vec::new();
    for span in &sorted {
        if span.is_empty() || kept.iter().any(|k| k.tokens == span.tokens) {
            continue;
        }
        let covered = sorted
            .iter()
            .any(|other| other.len() > span.len() && is_contiguous_sub(&span.tokens, &other.tokens));
        if !covered {
            kept.push(span);
        }
    }
    if kept.is_empty() {
        return None;
    }
    let mut target = Vec::new();
    for (i, span) in kept.iter().enumerate() {
        if i > 0 {
            target.push(sep.to_string());
        }
        target.extend(span.tokens.iter().cloned());
    }
    Some(target)
}

/// A (source, target) training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionExample {
    pub doc_id: String,
    pub objective: Objective,
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub plan: CorruptionPlan,
}

impl CorruptionExample {
    pub fn to_record(&self) -> ExampleRecord {
        ExampleRecord {
            id: self.doc_id.clone(),
            source: self.source.join(" "),
            target: self.target.join(" "),
        }
    }
}

/// JSONL line of a generated corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub source: String,
    pub target: String,
}

/// Builds the example for `doc` under `cfg.objective`.
pub fn build_example(doc: &TokenizedDoc, spans: &[SalientSpan], cfg: &CorruptionConfig) -> Result<CorruptionExample> {
    let mut rng = doc_rng(cfg.seed, &doc.doc_id);
    let objective = cfg.objective;
    let (source, target, plan) = match objective {
        Objective::SsrMask | Objective::SsrDelete | Objective::SspMask | Objective::SspDelete => {
            let target = match objective {
                Objective::SspMask | Objective::SspDelete => build_ssp_target(spans, &cfg.target_sep)
                    .ok_or_else(|| Error::NoSpans { id: doc.doc_id.clone() })?,
                _ => doc.tokens.clone(),
            };
            let plan = plan_corruption(doc, spans, cfg.ks, cfg.ko, &mut rng);
            let source = if objective.masks() {
                apply_mask(&doc.tokens, &plan, &cfg.mask_token)
            } else {
                apply_delete(&doc.tokens, &plan)
            };
            (source, target, plan)
        }
        Objective::TextInfilling => {
            let plan = plan_infilling(doc.len(), cfg.poisson_lambda, cfg.ti_mask_ratio, &mut rng);
            (apply_mask(&doc.tokens, &plan, &cfg.mask_token), doc.tokens.clone(), plan)
        }
        Objective::TitleGeneration => {
            if doc.title().is_empty() {
                return Err(Error::EmptyTitle { id: doc.doc_id.clone() });
            }
            if doc.body().is_empty() {
                return Err(Error::EmptyBody { id: doc.doc_id.clone() });
            }
            let plan = CorruptionPlan {
                intervals: vec![Interval {
                    start: 0,
                    end: (doc.title_len + 1).min(doc.len()),
                }],
                span_covered: 0,
            };
            (doc.body().to_vec(), doc.title().to_vec(), plan)
        }
    };
    Ok(CorruptionExample {
        doc_id: doc.doc_id.clone(),
        objective,
        source,
        target,
        plan,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub no_spans: usize,
    pub empty_title: usize,
    pub empty_body: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub schema_version: u32,
    pub objective: Objective,
    pub seed: u64,
    pub ks: f64,
    pub ko: f64,
    pub docs_seen: usize,
    pub examples_written: usize,
    pub skipped: SkipCounts,
    /// Emitted examples whose source ended up empty.
    pub empty_sources: usize,
    pub original_tokens: usize,
    pub corrupted_tokens: usize,
    pub span_covered_tokens: usize,
    /// `ks * covered + ko * (original - covered)` summed over examples.
    pub expected_corrupted_tokens: f64,
    pub source_tokens: usize,
    pub mask_tokens: usize,
    pub corrupted_pct: f64,
    /// Share of mask tokens in the corrupted sources.
    pub mask_pct: f64,
}

impl GenSummary {
    fn new(cfg: &CorruptionConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            objective: cfg.objective,
            seed: cfg.seed,
            ks: cfg.ks,
            ko: cfg.ko,
            docs_seen: 0,
            examples_written: 0,
            skipped: SkipCounts::default(),
            empty_sources: 0,
            original_tokens: 0,
            corrupted_tokens: 0,
            span_covered_tokens: 0,
            expected_corrupted_tokens: 0.0,
            source_tokens: 0,
            mask_tokens: 0,
            corrupted_pct: 0.0,
            mask_pct: 0.0,
        }
    }

    fn record(&mut self, ex: &CorruptionExample, original_len: usize, cfg: &CorruptionConfig) {
        self.examples_written += 1;
        self.original_tokens += original_len;
        self.corrupted_tokens += ex.plan.corrupted_tokens();
        self.span_covered_tokens += ex.plan.span_covered;
        if ex.objective.needs_spans() {
            let covered = ex.plan.span_covered as f64;
            self.expected_corrupted_tokens += cfg.ks * covered + cfg.ko * (original_len as f64 - covered);
        }
        self.source_tokens += ex.source.len();
        if ex.objective.masks() {
            self.mask_tokens += ex.plan.intervals.len();
        }
        if ex.source.is_empty() {
            self.empty_sources += 1;
        }
    }

    fn finish(&mut self) {
        if self.original_tokens > 0 {
            self.corrupted_pct = 100.0 * self.corrupted_tokens as f64 / self.original_tokens as f64;
        }
        if self.source_tokens > 0 {
            self.mask_pct = 100.0 * self.mask_tokens as f64 / self.source_tokens as f64;
        }
    }
}

const GEN_BATCH: usize = 2048;

/// Generates one example per document and writes `{"id","source","target"}`
/// lines in corpus order. `spans` is required for the span objectives and
/// must cover exactly the corpus ids.
pub fn generate<I, W>(
    docs: I,
    spans: Option<Vec<SpanRecord>>,
    input: &InputConfig,
    cfg: &CorruptionConfig,
    mut writer: W,
) -> Result<GenSummary>
where
    I: IntoIterator<Item = Result<Document>>,
    W: Write,
{
    cfg.validate()?;
    let mut span_map: Option<HashMap<String, Vec<SalientSpan>>> = match (cfg.objective.needs_spans(), spans) {
        (true, None) => {
            return Err(Error::Usage(format!("objective {} needs a spans file", cfg.objective)))
        }
        (true, Some(records)) => Some(records.into_iter().map(|r| (r.id, r.spans)).collect()),
        (false, _) => None,
    };
    let mut summary = GenSummary::new(cfg);
    let write_err = |e: std::io::Error| Error::io("<examples output>", e);

    let mut flush = |batch: &mut Vec<(TokenizedDoc, Vec<SalientSpan>)>, writer: &mut W| -> Result<()> {
        let built: Vec<Result<CorruptionExample>> = batch
            .par_iter()
            .map(|(doc, spans)| build_example(doc, spans, cfg))
            .collect();
        for ((doc, _), result) in batch.iter().zip(built) {
            summary.docs_seen += 1;
            let ex = match result {
                Ok(ex) => ex,
                Err(Error::NoSpans { .. }) => {
                    summary.skipped.no_spans += 1;
                    continue;
                }
                Err(Error::EmptyTitle { .. }) => {
                    summary.skipped.empty_title += 1;
                    continue;
                }
                Err(Error::EmptyBody { .. }) => {
                    summary.skipped.empty_body += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if ex.source.is_empty() {
                log::warn!("document `{}`: every token was corrupted, source is empty", ex.doc_id);
            }
            summary.record(&ex, doc.len(), cfg);
            serde_json::to_writer(&mut *writer, &ex.to_record()).map_err(|e| write_err(e.into()))?;
            writer.write_all(b"\n").map_err(write_err)?;
        }
        batch.clear();
        Ok(())
    };

    let mut batch = Vec::with_capacity(GEN_BATCH);
    for doc in docs {
        let doc = doc?;
        let doc_spans = match span_map.as_mut() {
            Some(map) => map.remove(&doc.id).ok_or_else(|| Error::MissingSpans(doc.id.clone()))?,
            None => Vec::new(),
        };
        batch.push((input.model_input(&doc), doc_spans));
        if batch.len() == GEN_BATCH {
            flush(&mut batch, &mut writer)?;
        }
    }
    flush(&mut batch, &mut writer)?;
    writer.flush().map_err(write_err)?;

    if let Some(extra) = span_map.as_ref().and_then(|m| m.keys().min()) {
        return Err(Error::Alignment(format!(
            "spans file has a record for `{extra}`, which is not in the corpus"
        )));
    }
    summary.finish();
    Ok(summary)
}

/// [`generate`] into a new file at `out`.
pub fn gen_corpus<I>(
    docs: I,
    spans: Option<Vec<SpanRecord>>,
    input: &InputConfig,
    cfg: &CorruptionConfig,
    out: impl AsRef<Path>,
) -> Result<GenSummary>
where
    I: IntoIterator<Item = Result<Document>>,
{
    let out = out.as_ref();
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    generate(docs, spans, input, cfg, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(out, source),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn tdoc(id: &str, text: &str) -> TokenizedDoc {
        TokenizedDoc {
            doc_id: id.into(),
            tokens: toks(text),
            title_len: 0,
        }
    }

    fn span(text: &str, rank: usize) -> SalientSpan {
        SalientSpan::new(toks(text), rank)
    }

    fn plan(ivs: &[(usize, usize)]) -> CorruptionPlan {
        CorruptionPlan {
            intervals: ivs.iter().map(|&(start, end)| Interval { start, end }).collect(),
            span_covered: 0,
        }
    }

    #[test]
    fn objective_names() {
        for o in Objective::ALL {
            assert_eq!(o.as_str().parse::<Objective>().unwrap(), o);
            assert_eq!(serde_json::to_string(&o).unwrap(), format!("\"{o}\""));
        }
        assert!("mlm".parse::<Objective>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(CorruptionConfig::default().validate().is_ok());
        let bad = [
            CorruptionConfig { ks: 1.1, ..Default::default() },
            CorruptionConfig { ko: -0.1, ..Default::default() },
            CorruptionConfig { poisson_lambda: 0.0, ..Default::default() },
            CorruptionConfig { mask_token: String::new(), ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn degenerate_probabilities() {
        let doc = tdoc("d", "a b c a b x");
        let spans = [span("a b", 0)];
        let mut rng = doc_rng(1, "d");
        let p = plan_corruption(&doc, &spans, 1.0, 0.0, &mut rng);
        assert_eq!(p, CorruptionPlan { intervals: plan(&[(0, 2), (3, 5)]).intervals, span_covered: 4 });
        let p = plan_corruption(&doc, &spans, 0.0, 0.0, &mut rng);
        assert!(p.is_empty());
        assert_eq!(apply_mask(&doc.tokens, &p, "<mask>"), doc.tokens);
        let p = plan_corruption(&doc, &spans, 0.0, 1.0, &mut rng);
        assert_eq!(p.intervals, plan(&[(2, 3), (5, 6)]).intervals);
    }

    #[test]
    fn longest_span_claims_first() {
        let occ = locate_occurrences(&toks("a b c b c"), &[span("b c", 0), span("a b c", 5)]);
        assert_eq!(occ, plan(&[(0, 3), (3, 5)]).intervals);
    }

    #[test]
    fn mask_and_delete_examples() {
        let tokens = toks("a b c d");
        assert_eq!(apply_mask(&tokens, &plan(&[(1, 3)]), "<mask>"), toks("a <mask> d"));
        assert_eq!(apply_mask(&tokens, &plan(&[(0, 1), (2, 3)]), "<mask>"), toks("<mask> b <mask> d"));
        assert_eq!(apply_mask(&tokens, &plan(&[(1, 2), (2, 3)]), "<mask>"), toks("a <mask> <mask> d"));
        assert_eq!(apply_mask(&tokens, &plan(&[(2, 2)]), "<mask>"), toks("a b <mask> c d"));
        assert_eq!(apply_delete(&tokens, &plan(&[(1, 3)])), toks("a d"));
        assert_eq!(apply_delete(&tokens, &plan(&[])), tokens);
        assert!(apply_delete(&tokens, &plan(&[(0, 4)])).is_empty());
    }

    #[test]
    fn ssp_target_examples() {
        let spans = [span("event trigger words", 2), span("trigger words", 5), span("text", 9)];
        assert_eq!(build_ssp_target(&spans, ";").unwrap().join(" "), "event trigger words ; text");
        assert_eq!(build_ssp_target(&[span("a b", 1)], ";").unwrap(), toks("a b"));
        assert_eq!(build_ssp_target(&[span("a b", 3), span("a b", 3)], ";").unwrap(), toks("a b"));
        assert_eq!(build_ssp_target(&[span("z", 7), span("a b", 3)], ";").unwrap(), toks("a b ; z"));
        assert!(build_ssp_target(&[], ";").is_none());
    }

    #[test]
    fn title_generation() {
        let doc = TokenizedDoc { doc_id: "d".into(), tokens: toks("t1 t2 <sep> b1"), title_len: 2 };
        let ex = build_example(&doc, &[], &CorruptionConfig::with_objective(Objective::TitleGeneration)).unwrap();
        assert_eq!(ex.source, toks("b1"));
        assert_eq!(ex.target, toks("t1 t2"));
        let no_title = TokenizedDoc { doc_id: "e".into(), tokens: toks("<sep> b1"), title_len: 0 };
        assert!(matches!(
            build_example(&no_title, &[], &CorruptionConfig::with_objective(Objective::TitleGeneration)),
            Err(Error::EmptyTitle { .. })
        ));
        let no_body = TokenizedDoc { doc_id: "f".into(), tokens: toks("t <sep>"), title_len: 1 };
        assert!(matches!(
            build_example(&no_body, &[], &CorruptionConfig::with_objective(Objective::TitleGeneration)),
            Err(Error::EmptyBody { .. })
        ));
    }

    #[test]
    fn ssp_without_spans_is_error() {
        let cfg = CorruptionConfig::with_objective(Objective::SspDelete);
        assert!(matches!(build_example(&tdoc("d", "a b"), &[], &cfg), Err(Error::NoSpans { .. })));
        let cfg = CorruptionConfig::with_objective(Objective::SsrDelete);
        assert!(build_example(&tdoc("d", "a b"), &[], &cfg).is_ok());
    }

    #[test]
    fn text_infilling_shape() {
        let doc = tdoc("d", &(0..512).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "));
        let cfg = CorruptionConfig::with_objective(Objective::TextInfilling);
        let ex = build_example(&doc, &[], &cfg).unwrap();
        assert_eq!(ex.target, doc.tokens);
        assert!(ex.source.len() < doc.len());
        let masked = ex.plan.corrupted_tokens();
        assert!((154..=160).contains(&masked), "{masked}");
        assert_eq!(ex.source.iter().filter(|t| *t == "<mask>").count(), ex.plan.intervals.len());
        for w in ex.plan.intervals.windows(2) {
            assert!(w[0].end <= w[1].start || w[0].is_empty() && w[0].start == w[1].start);
        }
    }

    #[test]
    fn infilling_lengths_follow_poisson() {
        let mut rng = doc_rng(7, "poisson");
        let mut lens = Vec::new();
        for _ in 0..300 {
            let p = plan_infilling(2000, 3.0, 0.3, &mut rng);
            lens.extend(p.intervals.iter().map(Interval::len));
        }
        let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
        // Rejection of overlapping draws biases slightly towards short spans.
        assert!((mean - 3.0).abs() < 0.25, "{mean}");
    }

    #[test]
    fn rng_keyed_by_seed_and_id() {
        let a: u64 = doc_rng(1, "x").random();
        assert_eq!(a, doc_rng(1, "x").random::<u64>());
        assert_ne!(a, doc_rng(2, "x").random::<u64>());
        assert_ne!(a, doc_rng(1, "y").random::<u64>());
    }

    #[test]
    fn missing_and_extra_span_records() {
        let docs = vec![Document::new("a", "t", "x y"), Document::new("b", "t", "y z")];
        let cfg = CorruptionConfig::with_objective(Objective::SsrMask);
        let spans = vec![SpanRecord { id: "a".into(), spans: vec![] }];
        match generate(docs.iter().cloned().map(Ok), Some(spans), &InputConfig::default(), &cfg, Vec::new()) {
            Err(Error::MissingSpans(id)) => assert_eq!(id, "b"),
            other => panic!("{other:?}"),
        }
        let spans = ["a", "b", "c"].map(|id| SpanRecord { id: id.into(), spans: vec![] }).to_vec();
        assert!(matches!(
            generate(docs.iter().cloned().map(Ok), Some(spans), &InputConfig::default(), &cfg, Vec::new()),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(generate(docs.into_iter().map(Ok), None, &InputConfig::default(), &cfg, Vec::new()), Err(Error::Usage(_))));
    }

    #[test]
    fn generate_is_seeded() {
        let docs: Vec<_> = (0..50)
            .map(|i| Document::new(format!("d{i}"), "salient title", format!("body text number {i} with salient words")))
            .collect();
        let spans: Vec<_> = docs
            .iter()
            .map(|d| SpanRecord { id: d.id.clone(), spans: vec![span("salient", 0), span("body text", 1)] })
            .collect();
        let run = |seed| {
            let cfg = CorruptionConfig { seed, ..CorruptionConfig::with_objective(Objective::SspMask) };
            let mut out = Vec::new();
            let summary =
                generate(docs.iter().cloned().map(Ok), Some(spans.clone()), &InputConfig::default(), &cfg, &mut out).unwrap();
            (out, summary)
        };
        let (a, sa) = run(3);
        let (b, _) = run(3);
        let (c, _) = run(4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(sa.examples_written, 50);
        let first: ExampleRecord = serde_json::from_slice(a.split(|&c| c == b'\n').next().unwrap()).unwrap();
        assert_eq!(first.id, "d0");
        assert_eq!(first.target, "salient ; body text");
    }

    fn arb_case() -> impl Strategy<Value = (Vec<String>, Vec<SalientSpan>, u64)> {
        let tokens = proptest::collection::vec("[a-e]", 0..40);
        let spans = proptest::collection::vec((proptest::collection::vec("[a-e]", 1..=3), 0usize..20), 0..6);
        (tokens, spans, any::<u64>()).prop_map(|(t, s, seed)| {
            (t, s.into_iter().map(|(toks, r)| SalientSpan::new(toks, r)).collect(), seed)
        })
    }

    proptest! {
        #[test]
        fn plan_is_sorted_and_disjoint((tokens, spans, seed) in arb_case(), ks in 0.0..=1.0f64, ko in 0.0..=1.0f64) {
            let doc = TokenizedDoc { doc_id: "p".into(), tokens, title_len: 0 };
            let p = plan_corruption(&doc, &spans, ks, ko, &mut doc_rng(seed, "p"));
            for w in p.intervals.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            prop_assert!(p.intervals.iter().all(|iv| iv.end <= doc.len() && !iv.is_empty()));
            let masked = apply_mask(&doc.tokens, &p, "<mask>");
            prop_assert_eq!(masked.iter().filter(|t| *t == "<mask>").count(), p.intervals.len());
        }

        #[test]
        fn delete_is_lossless((tokens, spans, seed) in arb_case()) {
            let doc = TokenizedDoc { doc_id: "p".into(), tokens, title_len: 0 };
            let p = plan_corruption(&doc, &spans, 0.5, 0.3, &mut doc_rng(seed, "p"));
            let kept = apply_delete(&doc.tokens, &p);
            let mut rebuilt = Vec::new();
            let mut kept_iter = kept.iter();
            let mut cursor = 0;
            for iv in &p.intervals {
                rebuilt.extend(kept_iter.by_ref().take(iv.start - cursor).cloned());
                rebuilt.extend_from_slice(&doc.tokens[iv.start..iv.end]);
                cursor = iv.end;
            }
            rebuilt.extend(kept_iter.cloned());
            prop_assert_eq!(rebuilt, doc.tokens);
        }

        #[test]
        fn ssp_target_has_no_nested_spans((_, spans, _) in arb_case()) {
            if let Some(target) = build_ssp_target(&spans, ";") {
                let parts: Vec<Vec<String>> = target.split(|t| t == ";").map(<[String]>::to_vec).collect();
                for (i, a) in parts.iter().enumerate() {
                    for (j, b) in parts.iter().enumerate() {
                        if i != j {
                            prop_assert!(a != b);
                            prop_assert!(!(a.len() < b.len() && is_contiguous_sub(a, b)));
                        }
                    }
                }
            }
        }
    }
}
