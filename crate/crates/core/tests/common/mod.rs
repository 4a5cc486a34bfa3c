//! Brute-force reference implementations shared by the integration suites.
//! Nothing here calls into the code under test except for plain data such
//! as the stop list.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

/// BM25 of `query` (a bag of terms, repeats counted) against every document.
pub fn oracle_scores(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let df = |term: &str| docs.iter().filter(|d| d.iter().any(|t| t == term)).count() as f64;
    docs.iter()
        .map(|doc| {
            let len = doc.len() as f64;
            query
                .iter()
                .map(|term| {
                    let tf = doc.iter().filter(|t| *t == term).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let d = df(term);
                    let idf = (1.0 + (n - d + 0.5) / (d + 0.5)).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avgdl))
                })
                .sum()
        })
        .collect()
}

/// Documents scoring strictly above `source`.
pub fn oracle_rank(scores: &[f64], source: usize) -> usize {
    scores.iter().filter(|&&s| s > scores[source]).count()
}

pub fn is_punct(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

/// Distinct 1..=3-grams free of stop words, punctuation and sentinels.
pub fn oracle_candidates(tokens: &[String], stop: impl Fn(&str) -> bool) -> Vec<Vec<String>> {
    let bad = |t: &String| stop(t) || is_punct(t) || t == "<sep>" || t == "<digit>";
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for n in 1..=3 {
        for w in tokens.windows(n) {
            if w.iter().any(bad) {
                continue;
            }
            if seen.insert(w.to_vec()) {
                out.push(w.to_vec());
            }
        }
    }
    out
}

/// Occurrences of `spans` in `tokens`, longest span first, never reusing a
/// token. Returns (start, len) pairs sorted by start.
pub fn oracle_occurrences(tokens: &[String], spans: &[Vec<String>]) -> Vec<(usize, usize)> {
    let mut distinct: Vec<&Vec<String>> = spans.iter().collect::<HashSet<_>>().into_iter().collect();
    distinct.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let mut used = vec![false; tokens.len()];
    let mut found = Vec::new();
    for span in distinct {
        let n = span.len();
        let mut i = 0;
        while n > 0 && i + n <= tokens.len() {
            if &tokens[i..i + n] == span.as_slice() && used[i..i + n].iter().all(|u| !u) {
                used[i..i + n].iter_mut().for_each(|u| *u = true);
                found.push((i, n));
                i += n;
            } else {
                i += 1;
            }
        }
    }
    found.sort_unstable();
    found
}

/// Lowercase alphabetic word for `i`, prefixed so vocabularies never mix.
pub fn word(prefix: &str, mut i: usize) -> String {
    let mut s = String::from(prefix);
    loop {
        s.push((b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    while s.len() < 4 {
        s.push('q');
    }
    s
}

/// Prints one line per check and fails the test if any check failed.
pub struct Criterion {
    id: &'static str,
    lines: Vec<(Option<bool>, String)>,
}

impl Criterion {
    pub fn new(id: &'static str) -> Self {
        Self { id, lines: Vec::new() }
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) -> bool {
        self.lines.push((Some(pass), format!("{name}: {}", detail.into())));
        pass
    }

    pub fn info(&mut self, detail: impl Into<String>) {
        self.lines.push((None, detail.into()));
    }

    pub fn finish(self) {
        let mut failed = Vec::new();
        for (pass, line) in &self.lines {
            let tag = match pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INFO",
            };
            println!("[{tag}] {} {line}", self.id);
            if *pass == Some(false) {
                failed.push(line.clone());
            }
        }
        assert!(failed.is_empty(), "{} failed: {}", self.id, failed.join("; "));
    }
}

pub fn counts<T: std::hash::Hash + Eq>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for i in items {
        *m.entry(i).or_default() += 1;
    }
    m
}
