//! Keyphrase evaluation: Porter-stemmed matching, present/absent split and
//! macro-averaged F1@5 / F1@M.

mod porter;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use porter::stem;

use crate::corpus::{normalize, tokenize, Document, InputConfig, TokenizedDoc};
use crate::{Error, Result, SCHEMA_VERSION};

/// Cut-off used by F1@k in reports.
pub const TOP_K: usize = 5;

/// Default phrase separator in generated output.
pub const DEFAULT_PRED_SEP: &str = ";";

/// Stems each token of a phrase.
pub fn stem_phrase<S: AsRef<str>>(phrase: &[S]) -> Vec<String> {
    phrase.iter().map(|t| stem(t.as_ref())).collect()
}

/// An ordered list of phrases with their stemmed forms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyphraseSet {
    phrases: Vec<Vec<String>>,
    stemmed: Vec<Vec<String>>,
}

impl KeyphraseSet {
    /// Normalises, tokenises and stems raw phrase strings. Phrases that
    /// tokenise to nothing are dropped.
    pub fn from_phrases<I, S>(raw: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::from_tokens(raw.into_iter().map(|p| tokenize(&normalize(p.as_ref()))))
    }

    pub fn from_tokens<I: IntoIterator<Item = Vec<String>>>(phrases: I) -> Self {
        let phrases: Vec<Vec<String>> = phrases.into_iter().filter(|p| !p.is_empty()).collect();
        let stemmed = phrases.iter().map(|p| stem_phrase(p)).collect();
        Self { phrases, stemmed }
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn phrases(&self) -> &[Vec<String>] {
        &self.phrases
    }

    pub fn stemmed(&self) -> &[Vec<String>] {
        &self.stemmed
    }

    /// Keeps the first phrase for each distinct stemmed form.
    pub fn dedup(&self) -> Self {
        let mut seen = HashSet::new();
        self.select(|i| seen.insert(&self.stemmed[i]))
    }

    fn select(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut out = Self::default();
        for i in 0..self.len() {
            if keep(i) {
                out.phrases.push(self.phrases[i].clone());
                out.stemmed.push(self.stemmed[i].clone());
            }
        }
        out
    }
}

/// Splits one line of generated output into a keyphrase set.
pub fn parse_predictions(line: &str, sep: &str) -> KeyphraseSet {
    KeyphraseSet::from_phrases(line.split(sep).map(str::trim).filter(|p| !p.is_empty()))
}

fn contains_seq(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && needle.len() <= haystack.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Stems the document once and splits `set` into (present, absent).
pub fn split_present_absent(set: &KeyphraseSet, doc: &TokenizedDoc) -> (KeyphraseSet, KeyphraseSet) {
    let stemmed_doc = stem_phrase(&doc.tokens);
    split_against_stemmed(set, &stemmed_doc)
}

pub(crate) fn split_against_stemmed(
    set: &KeyphraseSet,
    stemmed_doc: &[String],
) -> (KeyphraseSet, KeyphraseSet) {
    let present: Vec<bool> = set
        .stemmed
        .iter()
        .map(|p| contains_seq(stemmed_doc, p))
        .collect();
    (set.select(|i| present[i]), set.select(|i| !present[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn count_matches(preds: &[Vec<String>], gold: &KeyphraseSet) -> usize {
    let gold: HashSet<&Vec<String>> = gold.stemmed.iter().collect();
    preds.iter().filter(|p| gold.contains(p)).count()
}

/// F1 over all (deduplicated) predictions.
pub fn f1_at_m(preds: &KeyphraseSet, gold: &KeyphraseSet) -> Result<Prf> {
    let gold = gold.dedup();
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let preds = preds.dedup();
    let matched = count_matches(&preds.stemmed, &gold) as f64;
    let precision = if preds.is_empty() {
        0.0
    } else {
        matched / preds.len() as f64
    };
    Ok(Prf::new(precision, matched / gold.len() as f64))
}

/// F1 over the first `k` deduplicated predictions. Precision always divides
/// by `k`, so short outputs are scored as if padded with wrong guesses.
pub fn f1_at_k(preds: &KeyphraseSet, gold: &KeyphraseSet, k: usize) -> Result<Prf> {
    assert!(k >= 1, "k must be positive");
    let gold = gold.dedup();
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let preds = preds.dedup();
    let top = &preds.stemmed[..preds.len().min(k)];
    let matched = count_matches(top, &gold) as f64;
    Ok(Prf::new(matched / k as f64, matched / gold.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub num_preds: usize,
    pub num_gold: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub f1_at_5: MetricRecord,
    pub f1_at_m: MetricRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEval {
    pub id: String,
    /// `None` when the document has no gold phrases in the category.
    pub present: Option<CategoryScores>,
    pub absent: Option<CategoryScores>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub f1_at_5: f64,
    pub f1_at_m: f64,
    pub docs_scored: usize,
    pub docs_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub num_docs: usize,
    pub present: CategorySummary,
    pub absent: CategorySummary,
    pub documents: Vec<DocEval>,
}

fn category_scores(preds: &KeyphraseSet, gold: &KeyphraseSet) -> Option<CategoryScores> {
    let gold = gold.dedup();
    if gold.is_empty() {
        return None;
    }
    let preds = preds.dedup();
    let at_k = f1_at_k(&preds, &gold, TOP_K).ok()?;
    let at_m = f1_at_m(&preds, &gold).ok()?;
    Some(CategoryScores {
        f1_at_5: MetricRecord {
            precision: at_k.precision,
            recall: at_k.recall,
            f1: at_k.f1,
            num_preds: preds.len().min(TOP_K),
            num_gold: gold.len(),
        },
        f1_at_m: MetricRecord {
            precision: at_m.precision,
            recall: at_m.recall,
            f1: at_m.f1,
            num_preds: preds.len(),
            num_gold: gold.len(),
        },
    })
}

/// Scores one document. Both gold and predictions are split into present
/// and absent against the untruncated source text.
pub fn evaluate_document(doc: &Document, preds: &KeyphraseSet, input: &InputConfig) -> DocEval {
    let tokenized = input.untruncated().model_input(doc);
    let stemmed_doc = stem_phrase(&tokenized.tokens);
    let gold = KeyphraseSet::from_phrases(doc.keyphrases.iter().flatten());
    let (gold_present, gold_absent) = split_against_stemmed(&gold, &stemmed_doc);
    let (pred_present, pred_absent) = split_against_stemmed(preds, &stemmed_doc);
    DocEval {
        id: doc.id.clone(),
        present: category_scores(&pred_present, &gold_present),
        absent: category_scores(&pred_absent, &gold_absent),
    }
}

fn summarize<'a>(scores: impl Iterator<Item = Option<&'a CategoryScores>>) -> CategorySummary {
    let mut summary = CategorySummary {
        f1_at_5: 0.0,
        f1_at_m: 0.0,
        docs_scored: 0,
        docs_skipped: 0,
    };
    let (mut sum5, mut sum_m) = (0.0, 0.0);
    for s in scores {
        match s {
            Some(s) => {
                summary.docs_scored += 1;
                sum5 += s.f1_at_5.f1;
                sum_m += s.f1_at_m.f1;
            }
            None => summary.docs_skipped += 1,
        }
    }
    if summary.docs_scored > 0 {
        summary.f1_at_5 = sum5 / summary.docs_scored as f64;
        summary.f1_at_m = sum_m / summary.docs_scored as f64;
    }
    summary
}

/// Evaluates aligned predictions (one set per document, same order).
pub fn evaluate(docs: &[Document], preds: &[KeyphraseSet], input: &InputConfig) -> Result<EvalReport> {
    if docs.len() != preds.len() {
        return Err(Error::Alignment(format!(
            "{} prediction lines for {} gold documents",
            preds.len(),
            docs.len()
        )));
    }
    let documents: Vec<DocEval> = docs
        .par_iter()
        .zip(preds.par_iter())
        .map(|(doc, p)| evaluate_document(doc, p, input))
        .collect();
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        num_docs: documents.len(),
        present: summarize(documents.iter().map(|d| d.present.as_ref())),
        absent: summarize(documents.iter().map(|d| d.absent.as_ref())),
        documents,
    })
}

/// Predictions as read from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predictions {
    /// Plain text, one line per gold document in corpus order.
    Ordered(Vec<String>),
    /// JSONL records `{"id": .., "predictions": ..}` matched by id.
    ById(Vec<(String, String)>),
}

/// Reads a predictions file. A file whose non-empty lines are all JSON
/// objects is treated as id-keyed; anything else is plain text.
pub fn read_predictions(path: impl AsRef<Path>, sep: &str) -> Result<Predictions> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let non_empty = || lines.iter().filter(|l| !l.trim().is_empty());
    let jsonl = non_empty().next().is_some() && non_empty().all(|l| l.trim_start().starts_with('{'));
    if !jsonl {
        return Ok(Predictions::Ordered(lines));
    }
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::MalformedJson {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let invalid = |message: &str| Error::InvalidRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: message.to_string(),
        };
        let id = match value.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(invalid("missing `id`")),
        };
        let preds = match value.get("predictions") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().ok_or_else(|| invalid("predictions must be strings")))
                .collect::<Result<Vec<_>>>()?
                .join(&format!(" {sep} ")),
            _ => return Err(invalid("missing `predictions`")),
        };
        out.push((id, preds));
    }
    Ok(Predictions::ById(out))
}

/// Aligns predictions with the gold corpus and parses each line.
pub fn align_predictions(
    docs: &[Document],
    preds: Predictions,
    sep: &str,
) -> Result<Vec<KeyphraseSet>> {
    match preds {
        Predictions::Ordered(lines) => {
            if lines.len() != docs.len() {
                return Err(Error::Alignment(format!(
                    "{} prediction lines for {} gold documents",
                    lines.len(),
                    docs.len()
                )));
            }
            Ok(lines.iter().map(|l| parse_predictions(l, sep)).collect())
        }
        Predictions::ById(records) => {
            let mut by_id: HashMap<String, String> = HashMap::with_capacity(records.len());
            for (id, line) in records {
                if by_id.insert(id.clone(), line).is_some() {
                    return Err(Error::Alignment(format!("duplicate prediction id `{id}`")));
                }
            }
            let mut out = Vec::with_capacity(docs.len());
            for doc in docs {
                let line = by_id
                    .remove(&doc.id)
                    .ok_or_else(|| Error::Alignment(format!("no prediction for document `{}`", doc.id)))?;
                out.push(parse_predictions(&line, sep));
            }
            if let Some(extra) = by_id.keys().min() {
                return Err(Error::Alignment(format!(
                    "prediction for unknown document `{extra}`"
                )));
            }
            Ok(out)
        }
    }
}

/// Reads predictions from `preds_path` and evaluates them against `docs`.
pub fn evaluate_file(
    preds_path: impl AsRef<Path>,
    docs: &[Document],
    sep: &str,
    input: &InputConfig,
) -> Result<EvalReport> {
    let preds = read_predictions(preds_path, sep)?;
    let preds = align_predictions(docs, preds, sep)?;
    evaluate(docs, &preds, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(phrases: &[&str]) -> KeyphraseSet {
        KeyphraseSet::from_phrases(phrases)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_predictions("short signatures ; pairing ;", ";").len(), 2);
        assert!(parse_predictions(";;;", ";").is_empty());
        let p = parse_predictions("a b;a b", ";");
        assert_eq!(p.len(), 2);
        assert_eq!(p.dedup().len(), 1);
        assert!(parse_predictions("", ";").is_empty());
    }

    #[test]
    fn stem_phrase_examples() {
        assert_eq!(stem_phrase(&["networks"]), ["network"]);
        assert_eq!(stem_phrase(&["relational", "caches"]), ["relat", "cach"]);
        assert_eq!(stem_phrase(&["<digit>"]), ["<digit>"]);
    }

    #[test]
    fn present_absent_by_stem() {
        let doc = crate::corpus::model_input(&Document::new("d", "", "neural networks rock"), 512);
        let (present, absent) = split_present_absent(&set(&["network", "graphs"]), &doc);
        assert_eq!(present.phrases(), [vec!["network".to_string()]]);
        assert_eq!(absent.phrases(), [vec!["graphs".to_string()]]);
    }

    #[test]
    fn f1_at_m_examples() {
        let r = f1_at_m(&set(&["a", "c", "d"]), &set(&["a", "b"])).unwrap();
        assert!(close(r.precision, 1.0 / 3.0) && close(r.recall, 0.5) && close(r.f1, 0.4));
        let r = f1_at_m(&set(&["a", "b"]), &set(&["b", "a"])).unwrap();
        assert_eq!(r.f1, 1.0);
        let r = f1_at_m(&set(&[]), &set(&["a"])).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(matches!(f1_at_m(&set(&["a"]), &set(&[])), Err(Error::EmptyGold)));
    }

    #[test]
    fn f1_at_k_examples() {
        let r = f1_at_k(&set(&["a", "x", "y"]), &set(&["a", "b"]), 5).unwrap();
        assert!(close(r.precision, 0.2) && close(r.recall, 0.5) && close(r.f1, 2.0 / 7.0));
        let r = f1_at_k(&set(&["a", "b", "c", "d", "e", "f", "g"]), &set(&["a", "g"]), 5).unwrap();
        assert!(close(r.precision, 0.2) && close(r.recall, 0.5));
        let r = f1_at_k(&set(&["a", "b", "c"]), &set(&["c", "b", "a"]), 3).unwrap();
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn misaligned_predictions_rejected() {
        let docs: Vec<_> = (0..100)
            .map(|i| Document::new(format!("d{i}"), "t", "b").with_keyphrases(["t"]))
            .collect();
        let preds = Predictions::Ordered(vec!["t".to_string(); 101]);
        assert!(matches!(align_predictions(&docs, preds, ";"), Err(Error::Alignment(_))));
    }

    #[test]
    fn id_keyed_predictions_align() {
        let docs = vec![
            Document::new("a", "t", "b").with_keyphrases(["t"]),
            Document::new("b", "u", "c").with_keyphrases(["u"]),
        ];
        let preds = Predictions::ById(vec![("b".into(), "u".into()), ("a".into(), "x ; t".into())]);
        let sets = align_predictions(&docs, preds, ";").unwrap();
        assert_eq!(sets[0].len(), 2);
        assert_eq!(sets[1].phrases(), [vec!["u".to_string()]]);
        let extra = Predictions::ById(vec![("a".into(), "".into()), ("b".into(), "".into()), ("c".into(), "".into())]);
        assert!(align_predictions(&docs, extra, ";").is_err());
    }

    #[test]
    fn doc_without_absent_gold_is_skipped() {
        let docs = vec![Document::new("a", "graph networks", "x y").with_keyphrases(["graph networks"])];
        let report = evaluate(&docs, &[set(&["graph network"])], &InputConfig::default()).unwrap();
        assert_eq!(report.present.docs_scored, 1);
        assert_eq!(report.present.f1_at_m, 1.0);
        assert!(close(report.present.f1_at_5, 2.0 * 0.2 / 1.2));
        assert_eq!(report.absent.docs_scored, 0);
        assert_eq!(report.absent.docs_skipped, 1);
        assert_eq!(report.absent.f1_at_m, 0.0);
    }

    fn arb_phrases() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec("[a-e]{1,2}( [a-e]{1,2})?", 0..8)
    }

    proptest! {
        #[test]
        fn f1m_is_one_iff_sets_equal(preds in arb_phrases(), gold in arb_phrases()) {
            let (p, g) = (set(&preds.iter().map(String::as_str).collect::<Vec<_>>()), set(&gold.iter().map(String::as_str).collect::<Vec<_>>()));
            prop_assume!(!g.is_empty());
            let r = f1_at_m(&p, &g).unwrap();
            let ps: HashSet<_> = p.stemmed().iter().collect();
            let gs: HashSet<_> = g.stemmed().iter().collect();
            prop_assert!((0.0..=1.0).contains(&r.f1));
            prop_assert_eq!(r.f1 == 1.0, ps == gs);
        }

        #[test]
        fn f1k_ignores_tail(preds in arb_phrases(), extra in arb_phrases(), gold in arb_phrases()) {
            let g = KeyphraseSet::from_phrases(&gold);
            prop_assume!(!g.is_empty());
            let p = KeyphraseSet::from_phrases(&preds).dedup();
            prop_assume!(p.len() >= TOP_K);
            let mut longer = preds.clone();
            longer.extend(extra);
            let a = f1_at_k(&p, &g, TOP_K).unwrap();
            let b = f1_at_k(&KeyphraseSet::from_phrases(&longer), &g, TOP_K).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn duplicates_do_not_change_scores(preds in arb_phrases(), gold in arb_phrases()) {
            let g = KeyphraseSet::from_phrases(&gold);
            prop_assume!(!g.is_empty());
            let doubled: Vec<String> = preds.iter().flat_map(|p| [p.clone(), p.clone()]).collect();
            let a = KeyphraseSet::from_phrases(&preds);
            let b = KeyphraseSet::from_phrases(&doubled);
            prop_assert_eq!(f1_at_m(&a, &g).unwrap(), f1_at_m(&b, &g).unwrap());
            prop_assert_eq!(f1_at_k(&a, &g, 5).unwrap(), f1_at_k(&b, &g, 5).unwrap());
        }

        #[test]
        fn split_is_a_partition(gold in arb_phrases(), body in "[a-e ]{0,30}") {
            let g = KeyphraseSet::from_phrases(&gold);
            let doc = crate::corpus::model_input(&Document::new("d", "t", format!("x {body}")), 512);
            let (p, a) = split_present_absent(&g, &doc);
            prop_assert_eq!(p.len() + a.len(), g.len());
            for s in p.stemmed() {
                prop_assert!(!a.stemmed().contains(s));
            }
        }
    }
}
