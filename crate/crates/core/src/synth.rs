//! Deterministic synthetic corpora with gold keyphrases, for demos and
//! tests. Words are made-up syllable strings so nothing collides with the
//! stop list or the stemmer's special cases by accident.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::corpus::Document;
use crate::miner::Stoplist;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_docs: usize,
    pub seed: u64,
    /// General-vocabulary size; general words are drawn Zipf-distributed.
    pub vocab_size: usize,
    pub num_topics: usize,
    pub words_per_topic: usize,
    pub title_len: (usize, usize),
    pub body_len: (usize, usize),
    pub present_keyphrases: (usize, usize),
    pub absent_keyphrases: (usize, usize),
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_docs: 200,
            seed: 13,
            vocab_size: 1500,
            num_topics: 12,
            words_per_topic: 40,
            title_len: (5, 10),
            body_len: (60, 160),
            present_keyphrases: (2, 5),
            absent_keyphrases: (0, 3),
            id_prefix: "doc".into(),
        }
    }
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br",
    "cl", "dr", "gr", "pl", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "r", "x", "m", "l", "k"];

struct WordFactory {
    seen: HashSet<String>,
    stoplist: Stoplist,
}

impl WordFactory {
    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.random_range(2..=3);
            let mut word = String::new();
            for _ in 0..syllables {
                word.push_str(ONSETS.choose(rng).unwrap());
                word.push_str(VOWELS.choose(rng).unwrap());
            }
            word.push_str(CODAS.choose(rng).unwrap());
            if !self.stoplist.contains(&word) && self.seen.insert(word.clone()) {
                return word;
            }
        }
    }
}

struct Vocabulary {
    general: Vec<String>,
    zipf: Zipf<f64>,
    topics: Vec<Vec<String>>,
    stop: Vec<&'static str>,
}

const STOP_SAMPLE: &[&str] = &[
    "the", "of", "and", "a", "to", "in", "is", "for", "we", "on", "with", "that", "this",
    "by", "as", "are", "an", "be", "from", "our", "which", "it", "these", "can", "than",
];

fn span_len(rng: &mut ChaCha8Rng) -> usize {
    match rng.random_range(0..10) {
        0..=2 => 1,
        3..=7 => 2,
        _ => 3,
    }
}

fn sentence_case(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut capitalize = true;
    for tok in tokens {
        let attach = matches!(tok.as_str(), "." | "," | ";" | ":");
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        if capitalize {
            let mut chars = tok.chars();
            if let Some(first) = chars.next() {
                out.extend(first.to_uppercase());
                out.push_str(chars.as_str());
            }
        } else {
            out.push_str(tok);
        }
        capitalize = tok == ".";
    }
    out
}

impl Vocabulary {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut factory = WordFactory {
            seen: HashSet::new(),
            stoplist: Stoplist::english(),
        };
        let general: Vec<String> = (0..cfg.vocab_size.max(1)).map(|_| factory.fresh(rng)).collect();
        let topics = (0..cfg.num_topics.max(1))
            .map(|_| (0..cfg.words_per_topic.max(3)).map(|_| factory.fresh(rng)).collect())
            .collect();
        Self {
            zipf: Zipf::new(general.len() as f64, 1.1).expect("positive vocabulary"),
            general,
            topics,
            stop: STOP_SAMPLE.to_vec(),
        }
    }

    fn general_word(&self, rng: &mut ChaCha8Rng) -> String {
        let i = self.zipf.sample(rng) as usize;
        self.general[(i - 1).min(self.general.len() - 1)].clone()
    }

    fn topic_phrase(&self, topic: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let len = span_len(rng);
        self.topics[topic].choose_multiple(rng, len).cloned().collect()
    }

    fn filler(&self, topic: usize, rng: &mut ChaCha8Rng) -> String {
        match rng.random_range(0..100) {
            0..=37 => self.stop.choose(rng).unwrap().to_string(),
            38..=77 => self.general_word(rng),
            78..=95 => self.topics[topic].choose(rng).unwrap().clone(),
            _ => rng.random_range(1..=2024).to_string(),
        }
    }
}

fn render(
    vocab: &Vocabulary,
    topic: usize,
    len: usize,
    inserts: &[Vec<String>],
    sentences: bool,
    rng: &mut ChaCha8Rng,
) -> String {
    // Punctuation goes between chunks only, so planted phrases stay intact.
    let mut chunks: Vec<Vec<String>> = (0..len).map(|_| vec![vocab.filler(topic, rng)]).collect();
    for phrase in inserts {
        let at = rng.random_range(0..=chunks.len());
        chunks.insert(at, phrase.clone());
    }
    let mut tokens = Vec::with_capacity(len + len / 8);
    let mut since = 0;
    for chunk in chunks {
        since += chunk.len();
        tokens.extend(chunk);
        if sentences && since >= 6 && rng.random_range(0..12) == 0 {
            tokens.push(if rng.random_bool(0.7) { "." } else { "," }.to_string());
            since = 0;
        }
    }
    if sentences {
        if tokens.last().is_some_and(|t| t == ",") {
            tokens.pop();
        }
        if tokens.last().is_some_and(|t| t != ".") {
            tokens.push(".".into());
        }
    }
    sentence_case(&tokens)
}

/// Generates `cfg.num_docs` labeled documents.
pub fn generate_corpus(cfg: &SynthConfig) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = Vocabulary::new(cfg, &mut rng);
    let width = cfg.num_docs.max(1).to_string().len().max(4);
    (0..cfg.num_docs)
        .map(|i| {
            let topic = rng.random_range(0..vocab.topics.len());
            let n_present = rng.random_range(cfg.present_keyphrases.0..=cfg.present_keyphrases.1);
            let present: Vec<Vec<String>> = (0..n_present)
                .map(|_| {
                    // Mix a document-specific general word into most phrases so
                    // they identify the document.
                    let mut phrase = vocab.topic_phrase(topic, &mut rng);
                    if phrase.len() > 1 && rng.random_bool(0.7) {
                        let slot = rng.random_range(0..phrase.len());
                        phrase[slot] = vocab.general[rng.random_range(0..vocab.general.len())].clone();
                    }
                    phrase
                })
                .collect();
            let n_absent = rng.random_range(cfg.absent_keyphrases.0..=cfg.absent_keyphrases.1);
            let absent: Vec<Vec<String>> = (0..n_absent).map(|_| vocab.topic_phrase(topic, &mut rng)).collect();

            let (in_title, in_body): (Vec<_>, Vec<_>) =
                present.iter().cloned().enumerate().partition(|(j, _)| *j == 0);
            let title_len = rng.random_range(cfg.title_len.0..=cfg.title_len.1);
            let body_len = rng.random_range(cfg.body_len.0..=cfg.body_len.1);
            let title_inserts: Vec<Vec<String>> = in_title.into_iter().map(|(_, p)| p).collect();
            let mut body_inserts: Vec<Vec<String>> = in_body.into_iter().map(|(_, p)| p).collect();
            // Repeat some phrases so term frequency varies.
            for p in present.iter() {
                if rng.random_bool(0.4) {
                    body_inserts.push(p.clone());
                }
            }
            body_inserts.shuffle(&mut rng);
            let title = render(&vocab, topic, title_len, &title_inserts, false, &mut rng);
            let body = render(&vocab, topic, body_len, &body_inserts, true, &mut rng);
            let keyphrases = present.iter().chain(&absent).map(|p| p.join(" "));
            Document::new(format!("{}-{i:0width$}", cfg.id_prefix), title, body).with_keyphrases(keyphrases)
        })
        .collect()
}

/// Toy system output for `docs`: some gold keyphrases in shuffled order,
/// mixed with n-grams copied from the text and invented phrases.
pub fn generate_predictions(docs: &[Document], seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.iter()
        .map(|doc| {
            let mut out: Vec<String> = doc
                .keyphrases
                .iter()
                .flatten()
                .filter(|_| rng.random_bool(0.55))
                .cloned()
                .collect();
            let words: Vec<String> = doc
                .body
                .split_whitespace()
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
                .filter(|w| w.len() > 3)
                .collect();
            for _ in 0..rng.random_range(1..=5) {
                if words.len() < 2 {
                    break;
                }
                let at = rng.random_range(0..words.len() - 1);
                let len = rng.random_range(1..=2);
                out.push(words[at..at + len].join(" "));
            }
            if rng.random_bool(0.3) && !words.is_empty() {
                out.push(format!("{} analysis", words.choose(&mut rng).unwrap()));
            }
            out.shuffle(&mut rng);
            out.join(" ; ")
        })
        .collect()
}
