//! Property tests against the brute-force references in `common`.

use std::collections::BTreeSet;

use super::common::*;
use proptest::prelude::*;
use spanmine::analysis::retrieval_success;
use spanmine::bm25::{Bm25Index, Bm25Params, Query, ScoreBuffer};
use spanmine::corpus::{Document, InputConfig, TokenizedDoc};
use spanmine::eval::stem;
use spanmine::miner::{mine, MinerConfig, Stoplist, Thresholds};

fn corpus(max_docs: usize, vocab: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0..vocab, 1..30), 2..max_docs)
}

fn words(doc: &[usize]) -> Vec<String> {
    doc.iter().map(|&i| word("w", i)).collect()
}

fn documents(raw: &[Vec<usize>], gold: &[Vec<Vec<usize>>]) -> Vec<Document> {
    raw.iter()
        .enumerate()
        .map(|(i, d)| {
            let toks = words(d);
            let (title, body) = toks.split_at(1);
            let doc = Document::new(format!("d{i:03}"), title[0].clone(), body.join(" "));
            match gold.get(i) {
                Some(g) => doc.with_keyphrases(g.iter().map(|p| words(p).join(" "))),
                None => doc,
            }
        })
        .collect()
}

fn oracle_position(scores: &[f64], slot: usize) -> usize {
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > scores[slot] || (s == scores[slot] && j < slot))
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bm25_matches_formula(
        raw in corpus(25, 12),
        query in prop::collection::vec(0usize..14, 1..5),
        k1 in 0.01f64..3.0,
        b in 0.0f64..=1.0,
    ) {
        let docs: Vec<Vec<String>> = raw.iter().map(|d| words(d)).collect();
        let query: Vec<String> = query.iter().map(|&i| word("w", i)).collect();
        let params = Bm25Params { k1, b };
        let tokenized = docs.iter().enumerate().map(|(i, t)| TokenizedDoc {
            doc_id: format!("d{i}"),
            tokens: t.clone(),
            title_len: 0,
        });
        let index = Bm25Index::build(tokenized, params, InputConfig::default()).unwrap();
        let q = Query::new(query.iter().cloned()).unwrap();
        let oracle = oracle_scores(&docs, &query, k1, b);
        let mut buf = ScoreBuffer::new();
        for (slot, want) in oracle.iter().enumerate() {
            prop_assert!((index.score(&q, slot).unwrap() - want).abs() <= 1e-9);
            prop_assert_eq!(index.rank(&q, slot).unwrap(), oracle_rank(&oracle, slot));
            let want_pos = (*want > 0.0).then(|| oracle_position(&oracle, slot));
            prop_assert_eq!(index.position(&q, slot, &mut buf).unwrap(), want_pos);
        }
    }

    #[test]
    fn miner_matches_brute_force(raw in corpus(15, 10), th in prop::array::uniform3(0usize..6)) {
        let docs = documents(&raw, &[]);
        let input = InputConfig::default();
        let tokenized: Vec<TokenizedDoc> = docs.iter().map(|d| input.model_input(d)).collect();
        let index = Bm25Index::build(tokenized.clone(), Bm25Params::default(), input).unwrap();
        let cfg = MinerConfig { thresholds: Thresholds::new(th), ..MinerConfig::default() };
        let stop = Stoplist::english();
        let all: Vec<Vec<String>> = tokenized.iter().map(|d| d.tokens.clone()).collect();
        let mut buf = ScoreBuffer::new();
        for (slot, doc) in tokenized.iter().enumerate() {
            let got: BTreeSet<(Vec<String>, usize)> =
                mine(doc, &index, &cfg, &mut buf).unwrap().into_iter().map(|s| (s.tokens, s.rank)).collect();
            let want: BTreeSet<(Vec<String>, usize)> = oracle_candidates(&doc.tokens, |t| stop.contains(t))
                .into_iter()
                .filter_map(|cand| {
                    let rank = oracle_rank(&oracle_scores(&all, &cand, 1.2, 0.75), slot);
                    (rank <= th[cand.len() - 1]).then_some((cand, rank))
                })
                .collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn success_rate_matches_exhaustive_search(
        raw in corpus(30, 8),
        gold in prop::collection::vec(prop::collection::vec(prop::collection::vec(0usize..8, 1..4), 1..4), 1..30),
        k in 1usize..10,
    ) {
        let docs = documents(&raw, &gold);
        let input = InputConfig::default();
        let index = Bm25Index::from_documents(&docs, Bm25Params::default(), input.clone()).unwrap();
        let report = retrieval_success(&docs, &index, k, None).unwrap();

        let all: Vec<Vec<String>> = docs.iter().map(|d| input.model_input(d).tokens).collect();
        let (mut attempts, mut successes) = (0usize, 0usize);
        for (slot, doc) in docs.iter().enumerate() {
            let stemmed: Vec<String> = all[slot].iter().map(|t| stem(t)).collect();
            let mut seen = BTreeSet::new();
            for phrase in doc.keyphrases.iter().flatten() {
                let toks: Vec<String> = phrase.split_whitespace().map(str::to_string).collect();
                let key: Vec<String> = toks.iter().map(|t| stem(t)).collect();
                if !seen.insert(key.clone()) || !stemmed.windows(key.len()).any(|w| w == key.as_slice()) {
                    continue;
                }
                attempts += 1;
                if oracle_position(&oracle_scores(&all, &toks, 1.2, 0.75), slot) < k {
                    successes += 1;
                }
            }
        }
        prop_assert_eq!(report.overall.attempts, attempts);
        prop_assert_eq!(report.overall.successes, successes);
    }
}
